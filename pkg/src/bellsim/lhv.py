"""Local hidden variables, Bell's inequality and CHSH.

A discrete LHV model is a list of hidden values ``lambda`` with weights and
per-side response probabilities ``P1(a+|lambda)``, ``P2(b+|lambda)``.  The
joint statistics factorize per ``lambda``.

Bell's inequality in the three-direction form used here:

    P(a+, b+) + P(b+, c+) >= P(a+, c+)

It is guaranteed for deterministic responses with strict anticorrelation
(``P1(d+|lambda) + P2(d+|lambda) = 1`` for every direction ``d``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from .dynamics import PAULI, Direction, spin_eigenbasis
from .tensor import InvariantError, PureState

BELL_TOL = 1e-12
ANGLE_QUANTUM = 1e-9

Response = Union[Mapping[tuple, float], Callable[[Direction], float]]


@lru_cache(maxsize=1 << 16)
def direction_key(d: Direction) -> tuple[int, int]:
    """Quantized ``(polar, azimuth)`` key; the azimuth is dropped at the poles."""
    polar = round(d.polar / ANGLE_QUANTUM)
    if polar == 0 or polar == round(math.pi / ANGLE_QUANTUM):
        return polar, 0
    return polar, round((d.azimuth % (2 * math.pi)) / ANGLE_QUANTUM)


@dataclass(frozen=True)
class HiddenValue:
    weight: float
    response_a: Response
    response_b: Response

    def p_a(self, d: Direction) -> float:
        return _lookup(self.response_a, d)

    def p_b(self, d: Direction) -> float:
        return _lookup(self.response_b, d)


def _lookup(resp: Response, d: Direction) -> float:
    if callable(resp):
        p = float(resp(d))
    else:
        try:
            p = float(resp[direction_key(d)])
        except KeyError:
            raise KeyError(f"no response for direction {d}") from None
    if not 0.0 <= p <= 1.0:
        raise InvariantError(f"response probability {p!r} outside [0, 1]")
    return p


@dataclass(frozen=True)
class LhvModel:
    lambdas: tuple[HiddenValue, ...]

    def __post_init__(self):
        object.__setattr__(self, "lambdas", tuple(self.lambdas))
        w = np.array([h.weight for h in self.lambdas], dtype=float)
        if w.size == 0 or w.min() < 0:
            raise InvariantError("weights must be nonnegative")
        if abs(w.sum() - 1) > 1e-12:
            raise InvariantError(f"weights sum to {w.sum()!r}")
        for h in self.lambdas:
            for resp in (h.response_a, h.response_b):
                if not callable(resp) and any(not 0.0 <= p <= 1.0 for p in resp.values()):
                    raise InvariantError("response probabilities must lie in [0, 1]")

    @classmethod
    def deterministic(cls, weights: Sequence[float], signs_a: Sequence[Mapping[Direction, int]]) -> LhvModel:
        """Strictly anticorrelated model: side 1 answers ``+`` where ``signs_a`` says 1, side 2 the opposite."""
        lam = []
        for w, s in zip(weights, signs_a):
            ra = {direction_key(d): float(v) for d, v in s.items()}
            rb = {k: 1.0 - v for k, v in ra.items()}
            lam.append(HiddenValue(float(w), ra, rb))
        return cls(tuple(lam))

    def outcome_table(self, a: Direction, b: Direction) -> np.ndarray:
        """2x2 table ``[[P(++), P(+-)], [P(-+), P(--)]]``."""
        pp = pm = mp = mm = 0.0
        for h in self.lambdas:
            pa, pb = h.p_a(a), h.p_b(b)
            pp += h.weight * pa * pb
            pm += h.weight * pa * (1 - pb)
            mp += h.weight * (1 - pa) * pb
            mm += h.weight * (1 - pa) * (1 - pb)
        return np.array([[pp, pm], [mp, mm]])

    def expectation(self, a: Direction, b: Direction) -> float:
        return expectation_from_table(self.outcome_table(a, b))

    def response_arrays(self, directions: Sequence[Direction]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Weights ``w[l]`` and responses ``A[l, i] = P1(d_i+|l)``, ``B[l, i] = P2(d_i+|l)``."""
        w = np.array([h.weight for h in self.lambdas])
        A = np.array([[h.p_a(d) for d in directions] for h in self.lambdas])
        B = np.array([[h.p_b(d) for d in directions] for h in self.lambdas])
        return w, A, B

    def correlation_matrix(self, directions: Sequence[Direction]) -> tuple[np.ndarray, np.ndarray]:
        """``P[i, k] = P(d_i+, d_k+)`` and ``E[i, k]`` for every pair of ``directions``."""
        w, A, B = self.response_arrays(directions)
        P = (A * w[:, None]).T @ B
        E = ((2 * A - 1) * w[:, None]).T @ (2 * B - 1)
        return P, E


def lhv_correlation(model: LhvModel, a: Direction, b: Direction) -> float:
    """``P(a+, b+) = sum_lambda rho(lambda) P1(a+|lambda) P2(b+|lambda)``."""
    return float(sum(h.weight * h.p_a(a) * h.p_b(b) for h in model.lambdas))


def expectation_from_table(t) -> float:
    """``E = P(++) + P(--) - P(+-) - P(-+)`` from a 2x2 outcome table."""
    (pp, pm), (mp, mm) = t
    return float(pp + mm - pm - mp)


@dataclass(frozen=True)
class BellCheckResult:
    lhs: float
    rhs: float
    satisfied: bool
    margin: float
    p_ab: float
    p_bc: float
    p_ac: float


def bell_check(correlation: Callable[[Direction, Direction], float], a: Direction, b: Direction, c: Direction) -> BellCheckResult:
    p_ab, p_bc, p_ac = correlation(a, b), correlation(b, c), correlation(a, c)
    return bell_check_values(p_ab, p_bc, p_ac)


def bell_check_values(p_ab: float, p_bc: float, p_ac: float) -> BellCheckResult:
    lhs, rhs = p_ab + p_bc, p_ac
    margin = lhs - rhs
    return BellCheckResult(lhs, rhs, margin >= -BELL_TOL, margin, p_ab, p_bc, p_ac)


def quantum_correlation(theta: float) -> float:
    """Singlet ``P(a+, b+) = sin^2(theta/2) / 2`` for directions ``theta`` apart."""
    return 0.5 * np.sin(theta / 2) ** 2


def singlet_correlation(a: Direction, b: Direction) -> float:
    return quantum_correlation(a.angle_to(b))


def chsh_value(
    expectation: Callable[[Direction, Direction], float],
    a: Direction,
    a_prime: Direction,
    b: Direction,
    b_prime: Direction,
) -> float:
    """``S = E(a,b) - E(a,b') + E(a',b) + E(a',b')``."""
    return expectation(a, b) - expectation(a, b_prime) + expectation(a_prime, b) + expectation(a_prime, b_prime)


def mixture_model(weights: Sequence[float], states_a: Sequence[PureState], states_b: Sequence[PureState]) -> LhvModel:
    """LHV model with ``lambda = l``: each side holds the pure spin state ``states_x[l]``.

    Responses are the Born probabilities ``|<+_d|psi_l>|^2`` along the queried
    direction, so each ``lambda`` answers independently on the two sides.
    """

    def response(psi: PureState):
        amps = psi.amplitudes

        def p_plus(d: Direction) -> float:
            plus, _ = spin_eigenbasis(d)
            return float(min(1.0, abs(np.vdot(plus.amplitudes, amps)) ** 2))

        return p_plus

    return LhvModel(tuple(HiddenValue(float(w), response(sa), response(sb)) for w, sa, sb in zip(weights, states_a, states_b)))


def random_deterministic_model(
    rng: np.random.Generator, directions: Sequence[Direction], max_lambdas: int = 8
) -> LhvModel:
    """A random strictly anticorrelated deterministic model defined on ``directions``."""
    n = int(rng.integers(1, max_lambdas + 1))
    w = rng.dirichlet(np.ones(n))
    w = w / w.sum()
    bits = rng.integers(0, 2, size=(n, len(directions)))
    signs = [dict(zip(directions, row.tolist())) for row in bits]
    return LhvModel.deterministic(w, signs)


def random_direction(rng: np.random.Generator) -> Direction:
    return random_directions(rng, 1)[0]


def random_directions(rng: np.random.Generator, n: int) -> list[Direction]:
    """``n`` isotropic unit vectors (normalized Gaussian triples)."""
    v = rng.normal(size=(n, 3))
    norms = np.linalg.norm(v, axis=1)
    while np.any(norms < 1e-6):
        bad = norms < 1e-6
        v[bad] = rng.normal(size=(int(bad.sum()), 3))
        norms = np.linalg.norm(v, axis=1)
    v /= norms[:, None]
    return [Direction(*row) for row in v.tolist()]


# --- CHSH scan ------------------------------------------------------------


def coplanar_grid(resolution: float) -> np.ndarray:
    """Angles ``k * resolution`` covering ``[0, 2 pi)``."""
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    n = int(np.ceil(2 * np.pi / resolution - 1e-9))
    return np.arange(n) * resolution


def xz_expectation_matrix(state: PureState, angles: np.ndarray) -> np.ndarray:
    """``E[i, k] = <(n_i . sigma) ⊗ (n_k . sigma)>`` for x-z plane directions at ``angles``."""
    if state.space.dims != (2, 2):
        raise InvariantError(f"CHSH scan needs a two-qubit state, got {state.space}")
    psi = state.amplitudes
    x, z = PAULI[0], PAULI[2]
    T = np.array([[np.vdot(psi, np.kron(p, q) @ psi).real for q in (x, z)] for p in (x, z)])
    n = np.stack([np.sin(angles), np.cos(angles)], axis=1)
    return n @ T @ n.T


@dataclass(frozen=True)
class ChshScanResult:
    max_abs_s: float
    s: float
    a: float
    a_prime: float
    b: float
    b_prime: float
    resolution: float
    grid_points: int


def chsh_scan(state: PureState, resolution: float) -> ChshScanResult:
    """Grid maximum of ``|S|`` over coplanar settings.

    For fixed ``(a, a')`` the best ``b`` and ``b'`` decouple, so the 4-d grid
    maximum costs ``O(n^3)``.  Ties go to the lowest ``(a, a', b, b')`` index
    tuple.
    """
    angles = coplanar_grid(resolution)
    E = xz_expectation_matrix(state, angles)
    best = (-np.inf, 0.0, (0, 0, 0, 0))
    for i in range(len(angles)):
        X = E[i][None, :] + E  # rows a', cols b: E(a,b) + E(a',b)
        Y = E - E[i][None, :]  # rows a', cols b': E(a',b') - E(a,b')
        bx, by = X.argmax(axis=1), Y.argmax(axis=1)
        sx, sy = X.argmin(axis=1), Y.argmin(axis=1)
        rows = np.arange(len(angles))
        smax = X[rows, bx] + Y[rows, by]
        smin = X[rows, sx] + Y[rows, sy]
        jmax, jmin = int(smax.argmax()), int(smin.argmin())
        for val, j, bb, bp in ((smax[jmax], jmax, bx, by), (smin[jmin], jmin, sx, sy)):
            if abs(val) > best[0]:
                best = (abs(val), float(val), (i, j, int(bb[j]), int(bp[j])))
    _, s, (i, j, k, l) = best
    return ChshScanResult(
        float(abs(s)), s, float(angles[i]), float(angles[j]), float(angles[k]), float(angles[l]),
        float(resolution), len(angles),
    )
