"""Builtin showcase problems.

Frequencies are given in GHz and converted to rad/ns; times are in ns.
"""

from __future__ import annotations

import math
from collections.abc import Callable

import numpy as np

from . import cost
from .errors import ConfigurationError
from .model import ControlHamiltonian, ControlProblem, SystemSpec, TimeGrid
from .operators import (
    anharmonic_term,
    basis_state,
    cat_state,
    embed,
    ladder,
    number_op,
    pauli,
    product_index,
)

TWO_PI = 2 * math.pi
MAX_CHAIN = 12

ProblemInstance = ControlProblem


def ghz(f: float) -> float:
    """Angular frequency (rad/ns) of a frequency given in GHz."""
    return TWO_PI * f


# --- single qubit ----------------------------------------------------------------


def build_qubit_transfer(time_optimal_weight: float = 0.0, total_time: float = 3.0, steps: int = 300,
                         omega_ghz: float = 3.9, omega_max_ghz: float = 0.3) -> ControlProblem:
    """``|0> -> |1>`` on ``H = (w/2) sz + Omega(t) sx`` with ``|Omega| <= Omega_max``.

    A positive ``time_optimal_weight`` adds the time-optimal reward term,
    which favors reaching the target early in the window.
    """
    drift = 0.5 * ghz(omega_ghz) * pauli("z")
    ham = ControlHamiltonian(drift, pauli("x")[None], ("Omega",))
    target = basis_state(2, 1)
    terms = [cost.state_infidelity(target)]
    if time_optimal_weight > 0:
        terms.append(cost.time_optimal_state(target, time_optimal_weight))
    spec = SystemSpec({
        "omega/2pi": (omega_ghz, "GHz"),
        "Omega_max/2pi": (omega_max_ghz * 1e3, "MHz"),
        "T": (total_time, "ns"),
    }, (2,))
    return ControlProblem(
        "qubit-transfer", ham, TimeGrid.from_duration(total_time, steps), terms,
        bounds=[ghz(omega_max_ghz)], initial=basis_state(2, 0),
        metadata={"system": spec, "levels": (2,)},
    )


# --- two transmons -----------------------------------------------------------------


def cnot_target_block(levels: int = 5) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Initial computational states, their CNOT images and the subspace projector.

    Transmon 1 is the control qubit; columns are ordered ``|00>, |01>, |10>, |11>``.
    """
    dims = (levels, levels)
    comp = [(0, 0), (0, 1), (1, 0), (1, 1)]
    image = {(0, 0): (0, 0), (0, 1): (0, 1), (1, 0): (1, 1), (1, 1): (1, 0)}
    l = levels * levels
    initial = np.stack([basis_state(l, product_index(s, dims)) for s in comp], axis=1)
    targets = np.stack([basis_state(l, product_index(image[s], dims)) for s in comp], axis=1)
    proj = initial @ initial.conj().T
    return initial, targets, proj


def forbidden_levels(dims, site: int, levels) -> np.ndarray:
    """Basis vectors (columns) of every product state with ``site`` in ``levels``."""
    cols = [i for i in range(int(np.prod(dims))) if np.unravel_index(i, dims)[site] in set(levels)]
    return np.eye(int(np.prod(dims)), dtype=np.complex128)[:, cols]


def _union_columns(*blocks) -> np.ndarray:
    stacked = np.hstack(blocks)
    _, keep = np.unique(np.argmax(np.abs(stacked), axis=0), return_index=True)
    return stacked[:, np.sort(keep)]


def build_two_transmon_cnot(levels: int = 5, total_time: float = 10.0, steps: int = 1000,
                            forbidden_weight: float = 0.0, amplitude_weight: float = 0.0,
                            variation_weight: float = 0.0, drive_max_ghz: float = 0.5,
                            detuning_max_ghz: float = 1.0, coupling_ghz: float = 0.1) -> ControlProblem:
    """CNOT on two coupled transmons via composite state infidelity on ``|00>..|11>``.

    The forbidden set holds levels 3 and up of either transmon; it only
    enters the cost when ``forbidden_weight > 0``. The two transverse drives
    are bounded by ``drive_max_ghz`` and the frequency shift of transmon 2 by
    ``detuning_max_ghz``.
    """
    w1, w2, alpha, j = ghz(3.5), ghz(3.9), ghz(-0.225), ghz(coupling_ghz)
    dims = (levels, levels)
    b = ladder(levels)
    x = b + b.conj().T
    n = number_op(levels)
    drift = (w1 * embed(n, 0, dims) + embed(anharmonic_term(levels, alpha), 0, dims)
             + w2 * embed(n, 1, dims) + embed(anharmonic_term(levels, alpha), 1, dims)
             + j * embed(x, 0, dims) @ embed(x, 1, dims))
    controls = np.stack([embed(x, 0, dims), embed(x, 1, dims), embed(n, 1, dims)])
    ham = ControlHamiltonian(drift, controls, ("Omega_x1", "Omega_x2", "Omega_z2"))
    initial, targets, proj = cnot_target_block(levels)
    high = range(3, levels)
    forbidden = _union_columns(forbidden_levels(dims, 0, high), forbidden_levels(dims, 1, high))
    terms = [cost.composite_state_infidelity(targets, proj)]
    if forbidden_weight > 0:
        terms.append(cost.forbidden_occupation(forbidden, forbidden_weight))
    if amplitude_weight > 0:
        terms.append(cost.amplitude_penalty(amplitude_weight))
    if variation_weight > 0:
        terms.append(cost.variation_penalty(variation_weight))
    spec = SystemSpec({
        "omega_1/2pi": (3.5, "GHz"),
        "omega_2/2pi": (3.9, "GHz"),
        "alpha/2pi": (-225.0, "MHz"),
        "J/2pi": (coupling_ghz * 1e3, "MHz"),
        "Omega_max/2pi": (drive_max_ghz * 1e3, "MHz"),
        "Omega_z,max/2pi": (detuning_max_ghz * 1e3, "MHz"),
        "T": (total_time, "ns"),
    }, dims)
    return ControlProblem(
        "cnot", ham, TimeGrid.from_duration(total_time, steps), terms,
        bounds=[ghz(drive_max_ghz)] * 2 + [ghz(detuning_max_ghz)], initial=initial,
        metadata={"system": spec, "levels": dims, "forbidden": forbidden, "subspace_dim": 4},
    )


# --- transmon + cavity ----------------------------------------------------------


def build_cat_state(transmon_levels: int = 7, cavity_levels: int = 22, lam: float = 2.0,
                    total_time: float = 40.0, steps: int = 8000, forbidden_transmon=None,
                    forbidden_cavity=None, forbidden_weight: float = 1e-3,
                    variation_weight: float = 1e-4, drive_max_ghz: float = 0.5,
                    name: str = "cat") -> ControlProblem:
    """Cat-state preparation in a cavity driven only through a coupled transmon."""
    wq, alpha, wr, g = ghz(3.5), ghz(-0.225), ghz(3.9), ghz(0.1)
    dims = (transmon_levels, cavity_levels)
    b, a = ladder(transmon_levels), ladder(cavity_levels)
    bx = b + b.conj().T
    drift = (wq * embed(number_op(transmon_levels), 0, dims)
             + embed(anharmonic_term(transmon_levels, alpha), 0, dims)
             + wr * embed(number_op(cavity_levels), 1, dims)
             + g * embed(a + a.conj().T, 1, dims) @ embed(bx, 0, dims))
    controls = np.stack([embed(bx, 0, dims), embed(number_op(transmon_levels), 0, dims)])
    ham = ControlHamiltonian(drift, controls, ("Omega_x", "Omega_z"))

    cat, deviation = cat_state(cavity_levels, lam)
    target = np.kron(basis_state(transmon_levels, 0), cat)
    initial = basis_state(ham.dim, 0)
    if forbidden_transmon is None:
        forbidden_transmon = range(3, transmon_levels)
    if forbidden_cavity is None:
        forbidden_cavity = range(cavity_levels - 2, cavity_levels)
    forbidden = _union_columns(forbidden_levels(dims, 0, forbidden_transmon),
                               forbidden_levels(dims, 1, forbidden_cavity))
    terms = [cost.state_infidelity(target)]
    if forbidden_weight > 0:
        terms.append(cost.forbidden_occupation(forbidden, forbidden_weight))
    if variation_weight > 0:
        terms.append(cost.variation_penalty(variation_weight))
    spec = SystemSpec({
        "omega_q/2pi": (3.5, "GHz"),
        "alpha/2pi": (-225.0, "MHz"),
        "omega_r/2pi": (3.9, "GHz"),
        "g/2pi": (100.0, "MHz"),
        "lambda": (lam, ""),
        "Omega_max/2pi": (drive_max_ghz * 1e3, "MHz"),
        "T": (total_time, "ns"),
    }, dims)
    return ControlProblem(
        name, ham, TimeGrid.from_duration(total_time, steps), terms,
        bounds=[ghz(drive_max_ghz)] * 2, initial=initial,
        metadata={"system": spec, "levels": dims, "cat_norm_deviation": deviation,
                  "forbidden": forbidden},
    )


def build_cat_state_reduced(**overrides) -> ControlProblem:
    """Desk-scale cat instance: transmon 4 x cavity 10, ``lambda = 1``, 10 ns, 1000 steps."""
    params = dict(transmon_levels=4, cavity_levels=10, lam=1.0, total_time=10.0, steps=1000,
                  name="cat-reduced")
    params.update(overrides)
    return build_cat_state(**params)


# --- spin chain -----------------------------------------------------------------------


def hadamard_target(n_qubits: int) -> np.ndarray:
    h = np.array([[1, 1], [1, -1]], dtype=np.complex128) / math.sqrt(2)
    out = np.eye(1, dtype=np.complex128)
    for _ in range(n_qubits):
        out = np.kron(out, h)
    return out


def ghz_target(n_qubits: int) -> np.ndarray:
    psi = np.zeros(2**n_qubits, dtype=np.complex128)
    psi[0] = psi[-1] = 1 / math.sqrt(2)
    return psi


def spin_chain_hamiltonian(n_qubits: int, j_ghz: float = 0.1) -> ControlHamiltonian:
    """Open chain with ``J sz sz`` couplings and ``sx``/``sy`` drives on every qubit."""
    if not 1 <= n_qubits <= MAX_CHAIN:
        raise ConfigurationError(f"spin chain supports 1..{MAX_CHAIN} qubits, got {n_qubits}")
    dims = (2,) * n_qubits
    sz = [embed(pauli("z"), i, dims) for i in range(n_qubits)]
    drift = np.zeros((2**n_qubits,) * 2, dtype=np.complex128)
    for i in range(n_qubits - 1):
        drift += ghz(j_ghz) * (sz[i] @ sz[i + 1])
    controls, names = [], []
    for i in range(n_qubits):
        for axis in "xy":
            controls.append(embed(pauli(axis), i, dims))
            names.append(f"Omega_{axis}{i + 1}")
    return ControlHamiltonian(drift, np.stack(controls), tuple(names))


def build_spin_chain(n_qubits: int = 2, target: str = "hadamard", steps: int | None = None,
                     total_time: float | None = None, drive_max_ghz: float = 0.5) -> ControlProblem:
    """Hadamard transform (propagator mode) or GHZ preparation from ``|0...0>``.

    Defaults follow the ``2n`` ns window with ``10n`` steps.
    """
    ham = spin_chain_hamiltonian(n_qubits)
    total_time = 2.0 * n_qubits if total_time is None else total_time
    steps = 10 * n_qubits if steps is None else steps
    grid = TimeGrid.from_duration(total_time, steps)
    bounds = [ghz(drive_max_ghz)] * ham.n_controls
    spec = SystemSpec({
        "qubits": (n_qubits, ""),
        "J/2pi": (100.0, "MHz"),
        "Omega_max/2pi": (drive_max_ghz * 1e3, "MHz"),
        "T": (total_time, "ns"),
    }, (2,) * n_qubits)
    meta = {"system": spec, "levels": (2,) * n_qubits, "target": target}
    if target == "hadamard":
        return ControlProblem(f"spin-chain-{n_qubits}", ham, grid,
                              [cost.gate_infidelity(hadamard_target(n_qubits))], bounds=bounds, metadata=meta)
    if target == "ghz":
        psi0 = basis_state(2**n_qubits, 0)
        return ControlProblem(f"spin-chain-{n_qubits}", ham, grid,
                              [cost.state_infidelity(ghz_target(n_qubits))], bounds=bounds,
                              initial=psi0, metadata=meta)
    raise ConfigurationError(f"unknown spin-chain target {target!r}; use 'hadamard' or 'ghz'")


BUILDERS: dict[str, Callable[..., ControlProblem]] = {
    "qubit-transfer": build_qubit_transfer,
    "cnot": build_two_transmon_cnot,
    "cat": build_cat_state,
    "cat-reduced": build_cat_state_reduced,
    "spin-chain": build_spin_chain,
}


def build(name: str, **params) -> ControlProblem:
    try:
        builder = BUILDERS[name]
    except KeyError:
        raise ConfigurationError(f"unknown problem {name!r}; builtins: {', '.join(BUILDERS)}") from None
    try:
        return builder(**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for {name}: {exc}") from None
