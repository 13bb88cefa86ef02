"""End-to-end measurement scenarios.

Subsystem layout
----------------
Particles ``P1``, ``P2`` are qubits; devices ``M1``, ``M2``, ``M3`` (and the
observer ``O`` of the single-spin chain) have three levels: ready state 0 and
one pointer state per outcome.  Outcome index 0 is spin ``+`` along the
device's direction and index 1 is spin ``-``; reports print them 1-based.

The two-particle state is ``c1 |up>|down> + c2 |down>|up>``, written in the
Schmidt basis ``phi_P1 = (up, down)``, ``phi_P2 = (down, up)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import Direction, MeasurementModel, ready_state, measure, spin_eigenbasis
from .lhv import BellCheckResult, bell_check_values, expectation_from_table
from .postulates import (
    EmpiricalTable,
    JointProbabilityTable,
    joint_probability,
    joint_probability_table,
    possible_internal_states,
    pseudo_joint_probability,
    sample_table,
)
from .tensor import (
    ATOL,
    CompositeSpace,
    InvariantError,
    PureState,
    SpectralDecomposition,
    SubsystemId,
    permute,
    reduced_density,
    tensor,
)

P1, P2 = SubsystemId("P1", 2), SubsystemId("P2", 2)
M1, M2, M3 = SubsystemId("M1", 3), SubsystemId("M2", 3), SubsystemId("M3", 3)
P, M, O = SubsystemId("P", 2), SubsystemId("M", 3), SubsystemId("O", 3)

SINGLET = (1 / np.sqrt(2), -1 / np.sqrt(2))
LOCALITY_STEP = np.deg2rad(30.0)


def _qubit(s: SubsystemId, amps) -> PureState:
    return PureState(CompositeSpace((s,)), amps)


def phi_basis(particle: SubsystemId) -> tuple[PureState, PureState]:
    """Schmidt basis of the two-particle state on ``particle``."""
    up, down = np.array([1, 0]), np.array([0, 1])
    if particle.name == P1.name:
        return _qubit(particle, up), _qubit(particle, down)
    return _qubit(particle, down), _qubit(particle, up)


def build_epr_state(c1: complex, c2: complex) -> PureState:
    """``c1 |P1 up>|P2 down> + c2 |P1 down>|P2 up>``."""
    norm = abs(c1) ** 2 + abs(c2) ** 2
    if abs(norm - 1) > ATOL:
        raise InvariantError(f"|c1|^2 + |c2|^2 = {norm!r}, expected 1")
    amps = np.zeros(4, dtype=complex)
    amps[0b01] = c1
    amps[0b10] = c2
    return PureState(CompositeSpace((P1, P2)), amps)


def device_basis(device: SubsystemId, n_outcomes: int = 2) -> tuple[PureState, ...]:
    """Pointer states ``|m_1>, ..., |m_n>`` (indices 1..n)."""
    sp = CompositeSpace((device,))
    return tuple(PureState.basis(sp, j + 1) for j in range(n_outcomes))


def with_ready_devices(psi: PureState, devices: Sequence[SubsystemId], order: Sequence[str]) -> PureState:
    for d in devices:
        psi = tensor(psi, ready_state(d))
    return permute(psi, order)


@dataclass(frozen=True)
class EprConfig:
    coefficients: tuple[complex, complex] = SINGLET
    direction_a: Direction = Direction(0.0, 0.0, 1.0)
    direction_b: Direction = Direction(0.0, 0.0, 1.0)
    with_m3: bool = False
    shots: int = 0
    seed: int = 0
    pseudo: bool = False

    def __post_init__(self):
        c1, c2 = self.coefficients
        norm = abs(c1) ** 2 + abs(c2) ** 2
        if abs(norm - 1) > ATOL:
            raise InvariantError(f"|c1|^2 + |c2|^2 = {norm!r}, expected 1")
        if self.shots < 0:
            raise ValueError("shots must be >= 0")
        if self.pseudo and self.with_m3:
            raise ValueError("pseudo-probabilities are defined for the run without M3")

    @classmethod
    def coplanar(cls, theta_a: float, theta_b: float, **kw) -> EprConfig:
        """Directions in the x-z plane at polar angles ``theta_a``, ``theta_b`` (radians)."""
        return cls(direction_a=Direction.in_xz(theta_a), direction_b=Direction.in_xz(theta_b), **kw)


@dataclass(frozen=True)
class EprReport:
    config: EprConfig
    analytic: JointProbabilityTable
    empirical: EmpiricalTable | None
    marginals: dict[str, np.ndarray]
    locality_deviation: float
    pseudo: list[tuple[str, complex]] = field(default_factory=list)
    final_state: PureState | None = field(default=None, repr=False)

    def pair_table(self) -> np.ndarray:
        """``(M1, M2)`` joint table, marginalizing ``M3`` when present."""
        return self.analytic.marginal(["M1", "M2"]).probabilities

    @property
    def p_plus_plus(self) -> float:
        return float(self.pair_table()[0, 0])

    @property
    def expectation(self) -> float:
        return expectation_from_table(self.pair_table())


def device_models(config: EprConfig, direction_b: Direction | None = None) -> list[MeasurementModel]:
    models = []
    if config.with_m3:
        models.append(MeasurementModel(P1, M3, phi_basis(P1)))
    models.append(MeasurementModel.spin(P1, M1, config.direction_a))
    models.append(MeasurementModel.spin(P2, M2, direction_b or config.direction_b))
    return models


def epr_final_state(config: EprConfig, direction_b: Direction | None = None) -> PureState:
    devices = [M1, M2] + ([M3] if config.with_m3 else [])
    order = ["P1", "M1", "P2", "M2"] + (["M3"] if config.with_m3 else [])
    psi = with_ready_devices(build_epr_state(*config.coefficients), devices, order)
    return measure(psi, *device_models(config, direction_b))


def _device_bases(with_m3: bool) -> dict[str, tuple[PureState, ...]]:
    b = {"M1": device_basis(M1), "M2": device_basis(M2)}
    if with_m3:
        b["M3"] = device_basis(M3)
    return b


def locality_deviation(config: EprConfig, directions_b: Sequence[Direction]) -> float:
    """Max entrywise change of ``rho_{P1+M1}`` over alternative side-2 directions."""
    ref = reduced_density(epr_final_state(config), ["P1", "M1"]).matrix
    dev = 0.0
    for d in directions_b:
        rho = reduced_density(epr_final_state(config, d), ["P1", "M1"]).matrix
        dev = max(dev, float(np.max(np.abs(rho - ref))))
    return dev


def xz_sweep(step: float = LOCALITY_STEP) -> list[Direction]:
    return [Direction.in_xz(t) for t in np.arange(int(round(2 * np.pi / step))) * step]


def run_epr(config: EprConfig) -> EprReport:
    final = epr_final_state(config)
    devices = ["M1", "M2"] + (["M3"] if config.with_m3 else [])
    table = joint_probability_table(final, devices, bases=_device_bases(config.with_m3))
    marginals = {d: table.marginal([d]).probabilities for d in devices}
    empirical = sample_table(table, config.shots, config.seed) if config.shots > 0 else None
    pseudo = []
    if config.pseudo:
        for l in range(2):
            for j in range(2):
                for k in range(2):
                    v2, v3 = pseudo_values(final, config, l, j, k)
                    pseudo.append((f"P1M1={l + 1},M1={j + 1},M2={k + 1}", v2))
                    pseudo.append((f"M1={j + 1},P1M1={l + 1},M2={k + 1}", v3))
    return EprReport(config, table, empirical, marginals, locality_deviation(config, xz_sweep()), pseudo, final)


def pair_probability(config: EprConfig, j: int = 0, k: int = 0) -> float:
    """``P(M1 = j, M2 = k)`` through the full pipeline via the trace formula."""
    final = epr_final_state(config)
    bases = _device_bases(config.with_m3)
    return joint_probability(final, {"M1": j, "M2": k}, bases=bases)


# --- Bell triple ------------------------------------------------------------


@dataclass(frozen=True)
class BellTripleReport:
    angles: tuple[float, float, float]
    with_m3: bool
    directions: tuple[Direction, Direction, Direction]
    check: BellCheckResult


def triple_directions(theta_ab: float, theta_bc: float, theta_ac: float) -> tuple[Direction, Direction, Direction]:
    """Coplanar ``a, b, c`` with the given pairwise angles (radians)."""
    for t in (theta_ab, theta_bc, theta_ac):
        if not 0 <= t <= np.pi + 1e-12:
            raise ValueError(f"pairwise angle {np.rad2deg(t)!r} deg outside [0, 180]")
    a, b = Direction.in_xz(0.0), Direction.in_xz(theta_ab)
    for tc in (theta_ab + theta_bc, theta_ab - theta_bc):
        c = Direction.in_xz(tc)
        if abs(a.angle_to(c) - theta_ac) < 1e-9 and abs(b.angle_to(c) - theta_bc) < 1e-9:
            return a, b, c
    raise ValueError(
        "no coplanar directions realize the angles "
        f"({np.rad2deg(theta_ab):g}, {np.rad2deg(theta_bc):g}, {np.rad2deg(theta_ac):g}) deg"
    )


def run_bell_triple(
    angles: tuple[float, float, float], with_m3: bool = False, coefficients: tuple[complex, complex] = SINGLET
) -> BellTripleReport:
    a, b, c = triple_directions(*angles)

    def p(x, y):
        cfg = EprConfig(coefficients, x, y, with_m3=with_m3)
        return run_epr(cfg).p_plus_plus

    check = bell_check_values(p(a, b), p(b, c), p(a, c))
    return BellTripleReport(tuple(angles), with_m3, (a, b, c), check)


# --- pseudo-probabilities -----------------------------------------------------


def p1m1_possible_state(direction_a: Direction, l: int) -> PureState:
    """``U(P1+M1) |phi_{P1,l}>|m_0>``: the l-th possible internal state of P1+M1 after the measurement."""
    model = MeasurementModel.spin(P1, M1, direction_a)
    phi = phi_basis(P1)[l]
    r = ready_state(M1)
    return PureState(CompositeSpace((P1, M1)), model.local_matrix() @ np.kron(phi.amplitudes, r.amplitudes))


def pseudo_values(final: PureState, config: EprConfig, l: int, j: int, k: int) -> tuple[complex, complex]:
    """Both projector orderings for ``(P1+M1 = l, M1 = j, M2 = k)`` on a run without M3."""
    s_l = p1m1_possible_state(config.direction_a, l)
    m_j, m_k = device_basis(M1)[j], device_basis(M2)[k]
    first = pseudo_joint_probability(final, [(("P1", "M1"), s_l), ("M1", m_j), ("M2", m_k)])
    second = pseudo_joint_probability(final, [("M1", m_j), (("P1", "M1"), s_l), ("M2", m_k)])
    return first, second


@dataclass(frozen=True)
class PseudoDemo:
    first: list[complex]
    second: list[complex]
    pair_probability: float
    sum_residual: float


def pseudo_probability_demo(config: EprConfig, j: int, k: int) -> PseudoDemo:
    """Pseudo-probabilities for every ``l`` and the check ``sum_l first[l] = P(M1=j, M2=k)``."""
    if config.with_m3:
        raise ValueError("the pseudo-probability demo runs without M3")
    final = epr_final_state(config)
    pairs = [pseudo_values(final, config, l, j, k) for l in range(2)]
    first, second = [p[0] for p in pairs], [p[1] for p in pairs]
    p = joint_probability(final, {"M1": j, "M2": k}, bases=_device_bases(False))
    return PseudoDemo(first, second, p, abs(sum(first) - p))


# --- single spin measurement chain -------------------------------------------


@dataclass(frozen=True)
class ChainReport:
    possible: dict[str, SpectralDecomposition]
    table: JointProbabilityTable
    p_m_up: float
    p_p_up_m_down: float
    rho_p_change: float
    rho_m_change: float
    final_state: PureState = field(repr=False)

    @property
    def cross_weight(self) -> float:
        """Total probability off the diagonal ``P = M = O``."""
        t = self.table.probabilities
        return float(t.sum() - sum(t[i, i, i] for i in range(min(t.shape))))


def run_single_measurement_chain(alpha: complex, beta: complex, *, on_degenerate: str = "raise") -> ChainReport:
    """Spin premeasurement by ``M`` followed by the observer ``O`` reading ``M``."""
    norm = abs(alpha) ** 2 + abs(beta) ** 2
    if abs(norm - 1) > ATOL:
        raise InvariantError(f"|alpha|^2 + |beta|^2 = {norm!r}, expected 1")
    psi = with_ready_devices(_qubit(P, [alpha, beta]), [M, O], ["P", "M", "O"])
    up_down = spin_eigenbasis(Direction(0.0, 0.0, 1.0), CompositeSpace((P,)))
    premeasure = MeasurementModel(P, M, up_down)
    readout = MeasurementModel(M, O, device_basis(M))
    after_m = measure(psi, premeasure)
    final = measure(after_m, readout)

    possible = {
        s: possible_internal_states(final, s, on_degenerate=on_degenerate) for s in ("P", "M", "O")
    }
    bases = {"P": up_down, "M": device_basis(M), "O": device_basis(O)}
    table = joint_probability_table(final, ["P", "M", "O"], bases=bases)

    def change(s):
        return float(np.max(np.abs(reduced_density(after_m, [s]).matrix - reduced_density(final, [s]).matrix)))

    return ChainReport(
        possible,
        table,
        joint_probability(final, {"M": 0}, bases=bases),
        joint_probability(final, {"P": 0, "M": 1}, bases=bases),
        change("P"),
        change("M"),
        final,
    )
