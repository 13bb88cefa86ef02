"""Measurement interactions as controlled pointer permutations.

A device ``M`` premeasures a target ``S`` in some orthonormal basis ``{phi_j}``:

    |phi_j>|m_ready>  ->  |phi_j>|m_j>

Only that sector is fixed by the physics.  The unitary is completed by
letting each ``phi_j`` drive the transposition ``ready <-> m_j`` on the
pointer and acting as the identity on the orthogonal complement of the
controlled basis.  There is no Hamiltonian and no time parameter; a unitary is
just the before/after map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    ATOL,
    CompositeSpace,
    InvariantError,
    PureState,
    SpaceError,
    SubsystemId,
    apply_operator,
    embed_operator,
    fix_phase,
)

PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


@dataclass(frozen=True)
class Direction:
    x: float
    y: float
    z: float

    def __post_init__(self):
        n = float(np.sqrt(self.x**2 + self.y**2 + self.z**2))
        if abs(n - 1) > 1e-12:
            raise InvariantError(f"direction must be a unit vector, norm is {n!r}")

    @classmethod
    def from_angles(cls, theta: float, phi: float = 0.0) -> Direction:
        """Polar angle ``theta`` from +z, azimuth ``phi`` from +x (radians)."""
        return cls(np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta))

    @classmethod
    def in_xz(cls, theta: float) -> Direction:
        return cls.from_angles(theta, 0.0)

    @classmethod
    def normalized(cls, v) -> Direction:
        v = np.asarray(v, dtype=float)
        v = v / np.linalg.norm(v)
        return cls(*map(float, v))

    def vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def angle_to(self, other: Direction) -> float:
        u, v = self.vector(), other.vector()
        return math.atan2(float(np.linalg.norm(np.cross(u, v))), float(u @ v))

    @property
    def polar(self) -> float:
        return math.atan2(math.hypot(self.x, self.y), self.z)

    @property
    def azimuth(self) -> float:
        return math.atan2(self.y, self.x)

    def spin_operator(self) -> np.ndarray:
        """``n · sigma``."""
        return self.x * PAULI[0] + self.y * PAULI[1] + self.z * PAULI[2]


def spin_eigenbasis(n: Direction, space: CompositeSpace | None = None) -> tuple[PureState, PureState]:
    """Eigenstates of ``n · sigma`` with eigenvalues +1 and -1."""
    if space is None:
        space = CompositeSpace.of(("P", 2))
    if space.dim != 2:
        raise SpaceError(f"spin eigenbasis needs a two-level space, got {space}")
    th, ph = n.polar, n.azimuth
    plus = np.array([np.cos(th / 2), np.exp(1j * ph) * np.sin(th / 2)])
    minus = np.array([-np.exp(-1j * ph) * np.sin(th / 2), np.cos(th / 2)])
    return PureState(space, fix_phase(plus)), PureState(space, fix_phase(minus))


@dataclass(frozen=True)
class UnitaryOp:
    """A unitary acting on the factors of ``space`` (embedding into larger spaces is implicit)."""

    space: CompositeSpace
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        n = self.space.dim
        if m.shape != (n, n):
            raise InvariantError(f"expected a {n}x{n} matrix for {self.space}, got {m.shape}")
        if np.max(np.abs(m.conj().T @ m - np.eye(n))) > ATOL:
            raise InvariantError("operator is not unitary")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, space: CompositeSpace) -> UnitaryOp:
        return cls(space, np.eye(space.dim))

    def embed(self, space: CompositeSpace) -> UnitaryOp:
        return UnitaryOp(space, embed_operator(self.matrix, self.space, space))

    def __matmul__(self, other: UnitaryOp) -> UnitaryOp:
        if other.space != self.space:
            raise SpaceError("compose unitaries on the same space (embed first)")
        return UnitaryOp(self.space, self.matrix @ other.matrix)


@dataclass(frozen=True)
class MeasurementModel:
    """Device ``pointer`` premeasuring ``target`` in ``controlled_basis``.

    ``pointer_map[j]`` is the pointer basis index that records outcome ``j``;
    ``ready`` is the pointer's ready state.  By default outcome ``j`` (0-based)
    goes to pointer index ``j + 1`` and the ready state is index 0.
    """

    target: SubsystemId
    pointer: SubsystemId
    controlled_basis: tuple[PureState, ...]
    ready: int = 0
    pointer_map: tuple[int, ...] | None = None

    def __post_init__(self):
        basis = tuple(self.controlled_basis)
        object.__setattr__(self, "controlled_basis", basis)
        if not basis:
            raise InvariantError("empty controlled basis")
        for v in basis:
            if v.space.dim != self.target.dim:
                raise InvariantError(f"controlled basis vector dimension {v.space.dim} != target dim {self.target.dim}")
        B = np.column_stack([v.amplitudes for v in basis])
        if np.max(np.abs(B.conj().T @ B - np.eye(len(basis)))) > ATOL:
            raise InvariantError("controlled basis is not orthonormal")
        pm = self.pointer_map
        if pm is None:
            pm = tuple(i for i in range(self.pointer.dim) if i != self.ready)[: len(basis)]
        pm = tuple(int(m) for m in pm)
        object.__setattr__(self, "pointer_map", pm)
        if len(pm) != len(basis):
            raise InvariantError("pointer map must assign one pointer state per controlled basis state")
        if len(set(pm)) != len(pm) or self.ready in pm:
            raise InvariantError("pointer map must be injective and avoid the ready state")
        if self.pointer.dim < len(basis) + 1:
            raise InvariantError(f"pointer {self.pointer.name} needs dim >= {len(basis) + 1}")
        if not all(0 <= m < self.pointer.dim for m in pm + (self.ready,)):
            raise InvariantError("pointer index out of range")

    @classmethod
    def spin(cls, target: SubsystemId, pointer: SubsystemId, n: Direction) -> MeasurementModel:
        """Spin measurement along ``n``: outcome 0 is +, outcome 1 is -."""
        plus, minus = spin_eigenbasis(n, CompositeSpace((target,)))
        return cls(target, pointer, (plus, minus))

    def local_matrix(self) -> np.ndarray:
        """Unitary on target ⊗ pointer, target first."""
        dt, dp = self.target.dim, self.pointer.dim
        U = np.zeros((dt * dp, dt * dp), dtype=complex)
        rest = np.eye(dt, dtype=complex)
        for phi, m in zip(self.controlled_basis, self.pointer_map):
            proj = np.outer(phi.amplitudes, phi.amplitudes.conj())
            rest -= proj
            swap = np.eye(dp)
            swap[[self.ready, m]] = swap[[m, self.ready]]
            U += np.kron(proj, swap)
        U += np.kron(rest, np.eye(dp))
        return U


def premeasurement_unitary(model: MeasurementModel, space: CompositeSpace) -> UnitaryOp:
    """The model's unitary on the target and pointer factors of ``space`` (canonical order)."""
    for s in (model.target, model.pointer):
        if s not in space:
            raise SpaceError(f"{s} is not a factor of {space}")
    U = model.local_matrix()
    sub = space.subspace([model.target.name, model.pointer.name])
    if sub.names[0] != model.target.name:
        # pointer precedes target canonically: swap the tensor factors
        dt, dp = model.target.dim, model.pointer.dim
        U = U.reshape(dt, dp, dt, dp).transpose(1, 0, 3, 2).reshape(dt * dp, dt * dp)
    return UnitaryOp(sub, U)


def apply_unitary(u: UnitaryOp, psi: PureState) -> PureState:
    """Evolve ``psi`` by ``u``; ``u`` may act on any subset of the factors."""
    for f in u.space.factors:
        if f not in psi.space.factors:
            raise SpaceError(f"unitary acts on {f}, which is not a factor of {psi.space}")
    out = apply_operator(u.matrix, u.space, psi)
    norm = np.linalg.norm(out)
    if abs(norm - 1) > ATOL:
        raise InvariantError(f"evolution did not preserve the norm ({norm!r})")
    return PureState(psi.space, out)


def measure(psi: PureState, *models: MeasurementModel) -> PureState:
    """Apply the premeasurements of ``models`` in order."""
    for m in models:
        psi = apply_unitary(premeasurement_unitary(m, psi.space), psi)
    return psi


def ready_state(device: SubsystemId, ready: int = 0) -> PureState:
    return PureState.basis(CompositeSpace((device,)), ready)


def pointer_states(model: MeasurementModel, space: CompositeSpace | None = None) -> tuple[PureState, ...]:
    """Pointer basis states recording each outcome, in outcome order."""
    space = space or CompositeSpace((model.pointer,))
    return tuple(PureState.basis(space, m) for m in model.pointer_map)


def evolved_outcome_states(model: MeasurementModel) -> tuple[PureState, ...]:
    """``U(|phi_j>|ready>)`` for each controlled-basis state, over target+pointer."""
    sp = CompositeSpace((model.target, model.pointer))
    U = model.local_matrix()
    r = np.zeros(model.pointer.dim)
    r[model.ready] = 1
    return tuple(PureState(sp, U @ np.kron(phi.amplitudes, r)) for phi in model.controlled_basis)
