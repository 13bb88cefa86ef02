"""Possible internal states and joint probabilities.

The input everywhere is the pure state of an isolated system.  For a
subsystem ``S`` the *possible internal states* are the eigenvectors of the
reduced matrix ``rho_S``; eigenvalues are the probabilities that each one is
the actual internal state.  For pairwise disjoint subsystems the joint
probability is

    P(S1, j1, ..., Sn, jn) = Tr[pi_1 ... pi_n rho_{S1+...+Sn}]

with ``pi_i`` the projector on the ``j_i``-th possible state of ``S_i``.  For
overlapping subsystems the same trace depends on the projector order and is
generally complex; :func:`pseudo_joint_probability` returns it as is.

Degenerate spectra make the possible states ill-defined.  By default that is
an error.  Two escape hatches exist:

* ``basis=`` supplies candidate states; they are accepted if each is an
  eigenvector of ``rho_S`` and together they carry all the weight.  This is
  how device pointer states are fed in.
* ``on_degenerate="accept"`` takes the canonical basis of each degenerate
  eigenspace and marks the result ``tainted`` (with a warning).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Mapping, Sequence

import numpy as np

from .tensor import (
    ATOL,
    EIG_ATOL,
    CompositeSpace,
    DensityMatrix,
    InvariantError,
    PureState,
    SpaceError,
    SpectralDecomposition,
    SubsystemId,
    embed_operator,
    eig_hermitian,
    reduced_density,
)

PROB_ATOL = 1e-9
SHOT_BLOCK = 1 << 16


class DegenerateSpectrumError(ValueError):
    """The reduced state has a degenerate nonzero eigenvalue, so its possible internal states are not unique."""


class NotDisjointError(ValueError):
    """Joint probabilities are only defined for disjoint subsystems; use pseudo_joint_probability."""


class DegeneracyWarning(UserWarning):
    pass


def subsystem_key(s) -> frozenset[str]:
    """Normalize ``"P1"``, ``SubsystemId``, or an iterable of either to a frozenset of names."""
    if isinstance(s, str):
        return frozenset([s])
    if isinstance(s, SubsystemId):
        return frozenset([s.name])
    return frozenset(x.name if isinstance(x, SubsystemId) else x for x in s)


def label(key: Iterable[str], space: CompositeSpace) -> str:
    return "+".join(space.subspace(key).names)


def _check_policy(on_degenerate: str):
    if on_degenerate not in ("raise", "accept"):
        raise ValueError(f"on_degenerate must be 'raise' or 'accept', got {on_degenerate!r}")


def _from_basis(rho: DensityMatrix, basis: Sequence) -> SpectralDecomposition:
    sub = rho.space
    vecs = []
    for b in basis:
        amps = b.amplitudes if isinstance(b, PureState) else np.asarray(b, dtype=complex)
        vecs.append(PureState(sub, amps))
    V = np.column_stack([v.amplitudes for v in vecs])
    if np.max(np.abs(V.conj().T @ V - np.eye(V.shape[1]))) > ATOL:
        raise InvariantError("candidate basis is not orthonormal")
    m = rho.matrix
    vals = np.einsum("ij,ik,kj->j", V.conj(), m, V).real
    resid = np.linalg.norm(m @ V - V * vals, axis=0)
    if resid.max() > EIG_ATOL:
        raise InvariantError(
            f"candidate basis state {int(resid.argmax())} is not an eigenvector of rho_{sub} (residual {resid.max():.2e})"
        )
    if abs(vals.sum() - 1) > PROB_ATOL:
        raise InvariantError(f"candidate basis misses part of the support of rho_{sub} (weight {vals.sum():.12g})")
    v = vals.copy()
    v.setflags(write=False)
    return SpectralDecomposition(sub, v, tuple(vecs))


def possible_internal_states(
    isolated: PureState,
    subsystem,
    *,
    basis: Sequence | None = None,
    on_degenerate: str = "raise",
) -> SpectralDecomposition:
    """Possible internal states of ``subsystem`` and their probabilities.

    Without ``basis``, returns the eigenpairs of ``rho_S`` with nonzero
    eigenvalue, descending.  With ``basis``, returns those states in the given
    order after verifying them (see module docstring).
    """
    _check_policy(on_degenerate)
    rho = reduced_density(isolated, sorted(subsystem_key(subsystem)))
    if basis is not None:
        return _from_basis(rho, basis)
    spec = eig_hermitian(rho).support(ATOL)
    if spec.degenerate:
        vals = [tuple(round(float(spec.eigenvalues[i]), 12) for i in cl) for cl in spec.clusters]
        if on_degenerate == "raise":
            raise DegenerateSpectrumError(f"rho_{rho.space} has degenerate eigenvalues {vals}")
        warnings.warn(
            f"rho_{rho.space} is degenerate {vals}; using the canonical basis of each eigenspace",
            DegeneracyWarning,
            stacklevel=2,
        )
        spec = SpectralDecomposition(spec.space, spec.eigenvalues, spec.eigenvectors, spec.clusters, tainted=True)
    return spec


def nondisturbing_observable(isolated: PureState, subsystem) -> DensityMatrix:
    """``rho_R`` of the isolated state, read as an observable on ``R``.

    A premeasurement in its eigenbasis reveals the internal state of ``R``
    without changing ``rho_R``.
    """
    return reduced_density(isolated, sorted(subsystem_key(subsystem)))


def _check_disjoint(keys: Sequence[frozenset]):
    seen: set[str] = set()
    for k in keys:
        if not k:
            raise SpaceError("empty subsystem set")
        if seen & k:
            raise NotDisjointError(
                f"subsystems overlap on {sorted(seen & k)}; joint probabilities need disjoint systems "
                "(pseudo_joint_probability evaluates overlapping ones)"
            )
        seen |= k


def _clamp(p: complex, what: str) -> float:
    if abs(p.imag) > PROB_ATOL:
        raise InvariantError(f"{what} has imaginary part {p.imag:.3e}")
    r = p.real
    if r < -PROB_ATOL or r > 1 + PROB_ATOL:
        raise InvariantError(f"{what} = {r!r} is outside [0, 1]")
    return min(max(r, 0.0), 1.0)


def _resolve_states(isolated, keys, bases, on_degenerate) -> list[SpectralDecomposition]:
    bases = {subsystem_key(k): v for k, v in (bases or {}).items()}
    return [
        possible_internal_states(isolated, k, basis=bases.get(k), on_degenerate=on_degenerate) for k in keys
    ]


def _ordered_trace(isolated: PureState, items: Sequence[tuple[frozenset, PureState]]) -> complex:
    """``Tr[pi_1 ... pi_n rho_U]`` over the union ``U`` of the subsystem sets."""
    union = sorted(set().union(*(k for k, _ in items)), key=isolated.space.index)
    rho = reduced_density(isolated, union)
    prod_op = np.eye(rho.space.dim, dtype=complex)
    for _, v in items:
        a = v.amplitudes
        prod_op = prod_op @ embed_operator(np.outer(a, a.conj()), v.space, rho.space)
    return complex(np.trace(prod_op @ rho.matrix))


def joint_probability(
    isolated: PureState,
    assignment: Mapping,
    *,
    bases: Mapping | None = None,
    on_degenerate: str = "raise",
) -> float:
    """Probability that each subsystem's internal state is the assigned possible state.

    ``assignment`` maps subsystem sets (a name, or a tuple of names) to an
    index into that subsystem's possible internal states.
    """
    keys = [subsystem_key(k) for k in assignment]
    _check_disjoint(keys)
    states = _resolve_states(isolated, keys, bases, on_degenerate)
    items = []
    for k, spec, j in zip(keys, states, assignment.values()):
        if not 0 <= j < len(spec):
            raise IndexError(f"{label(k, isolated.space)} has {len(spec)} possible states, index {j} is out of range")
        items.append((k, spec.eigenvectors[j]))
    return _clamp(_ordered_trace(isolated, items), "joint probability")


@dataclass(frozen=True)
class JointProbabilityTable:
    """Probabilities indexed by one axis per subsystem.

    ``axes[i]`` names the subsystem(s) on axis ``i``; ``states[i]`` holds the
    possible internal states labelling that axis.
    """

    axes: tuple[tuple[str, ...], ...]
    probabilities: np.ndarray = field(repr=False)
    states: tuple[SpectralDecomposition, ...] | None = field(default=None, repr=False)
    tainted: bool = False

    def __post_init__(self):
        p = np.array(self.probabilities, dtype=float)
        if p.ndim != len(self.axes):
            raise InvariantError(f"{p.ndim}-d table for {len(self.axes)} axes")
        if p.size and (p.min() < -ATOL or p.max() > 1 + ATOL):
            raise InvariantError("table entries outside [0, 1]")
        if abs(p.sum() - 1) > PROB_ATOL:
            raise InvariantError(f"table sums to {p.sum()!r}")
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)

    @property
    def shape(self):
        return self.probabilities.shape

    def __getitem__(self, idx):
        return float(self.probabilities[idx])

    def axis_of(self, subsystem) -> int:
        k = subsystem_key(subsystem)
        for i, ax in enumerate(self.axes):
            if frozenset(ax) == k:
                return i
        raise KeyError(f"no axis for {sorted(k)}")

    def marginal(self, keep: Sequence) -> JointProbabilityTable:
        """Sum out every axis not listed in ``keep`` (kept axes stay in table order)."""
        idx = sorted(self.axis_of(k) for k in keep)
        drop = tuple(i for i in range(len(self.axes)) if i not in idx)
        p = self.probabilities.sum(axis=drop) if drop else self.probabilities
        states = tuple(self.states[i] for i in idx) if self.states else None
        return JointProbabilityTable(tuple(self.axes[i] for i in idx), p, states, self.tainted)

    def cells(self):
        """``(index tuple, probability)`` for every cell in C order."""
        for idx in product(*(range(n) for n in self.shape)):
            yield idx, float(self.probabilities[idx])


def joint_probability_table(
    isolated: PureState,
    subsystems: Sequence,
    *,
    bases: Mapping | None = None,
    on_degenerate: str = "raise",
) -> JointProbabilityTable:
    """The full table of joint probabilities over disjoint ``subsystems``.

    Computed by contracting the state with each subsystem's possible states;
    for commuting projectors on a pure state this equals the trace formula
    cell by cell.
    """
    keys = [subsystem_key(k) for k in subsystems]
    _check_disjoint(keys)
    states = _resolve_states(isolated, keys, bases, on_degenerate)
    space = isolated.space
    t = isolated.tensor()
    remaining = list(space.names)
    n_out = 0
    for k, spec in zip(keys, states):
        pos = [remaining.index(n) for n in space.subspace(k).names]
        rest = [i for i in range(len(remaining)) if i not in pos]
        order = list(range(n_out)) + [n_out + i for i in pos] + [n_out + i for i in rest]
        t = np.transpose(t, order)
        lead = t.shape[:n_out]
        d = int(np.prod([t.shape[n_out + i] for i in range(len(pos))]))
        tail = t.shape[n_out + len(pos):]
        t = t.reshape(lead + (d,) + tail)
        V = spec.matrix()
        t = np.moveaxis(np.tensordot(V.conj().T, t, axes=([1], [n_out])), 0, n_out)
        remaining = [remaining[i] for i in rest]
        n_out += 1
    p = np.abs(t) ** 2
    if remaining:
        p = p.sum(axis=tuple(range(n_out, p.ndim)))
    axes = tuple(space.subspace(k).names for k in keys)
    return JointProbabilityTable(axes, p, tuple(states), any(s.tainted for s in states))


def pseudo_joint_probability(
    isolated: PureState,
    ordered_projectors: Sequence[tuple],
    *,
    bases: Mapping | None = None,
    on_degenerate: str = "raise",
) -> complex:
    """``Tr[pi_1 pi_2 ... pi_n rho]`` in the given order, subsystems allowed to overlap.

    Each item is ``(subsystems, state)`` where ``state`` is a ``PureState`` on
    those subsystems or an index into their possible internal states.  The
    value is not a probability; it is returned as a complex number.
    """
    items = []
    bases = {subsystem_key(k): v for k, v in (bases or {}).items()}
    for subs, st in ordered_projectors:
        k = subsystem_key(subs)
        if not isinstance(st, PureState):
            spec = possible_internal_states(isolated, k, basis=bases.get(k), on_degenerate=on_degenerate)
            st = spec.eigenvectors[st]
        elif st.space != isolated.space.subspace(k):
            raise SpaceError(f"projector state lives on {st.space}, expected {isolated.space.subspace(k)}")
        items.append((k, st))
    return _ordered_trace(isolated, items)


@dataclass(frozen=True)
class EmpiricalTable:
    """Sampled counts and frequencies, shaped like the table they were drawn from."""

    axes: tuple[tuple[str, ...], ...]
    counts: np.ndarray = field(repr=False)
    shots: int
    seed: int

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.shots

    def as_table(self) -> JointProbabilityTable:
        return JointProbabilityTable(self.axes, self.frequencies)


def _seed_sequence(seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed) & 0xFFFF_FFFF_FFFF_FFFF)


def sample_table(table: JointProbabilityTable, shots: int, seed: int) -> EmpiricalTable:
    """Draw ``shots`` cells from ``table`` by inverse CDF.

    Shots are split into blocks of ``SHOT_BLOCK``, each with its own child
    stream of ``SeedSequence(seed)``, so the result depends only on
    ``(seed, shots)``.  Zero-probability cells are never drawn.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    p = np.clip(table.probabilities.reshape(-1), 0.0, None)
    cdf = np.cumsum(p)
    total = cdf[-1]
    last = int(np.flatnonzero(p > 0)[-1])
    n_blocks = -(-shots // SHOT_BLOCK)
    counts = np.zeros(p.size, dtype=np.int64)
    for b, child in enumerate(_seed_sequence(seed).spawn(n_blocks)):
        n = min(SHOT_BLOCK, shots - b * SHOT_BLOCK)
        u = np.random.Generator(np.random.PCG64(child)).random(n) * total
        idx = np.minimum(np.searchsorted(cdf, u, side="right"), last)
        counts += np.bincount(idx, minlength=p.size)
    return EmpiricalTable(table.axes, counts.reshape(table.shape), shots, int(seed))


def sample_assignments(
    isolated: PureState,
    subsystems: Sequence,
    shots: int,
    seed: int,
    *,
    bases: Mapping | None = None,
    on_degenerate: str = "raise",
) -> EmpiricalTable:
    table = joint_probability_table(isolated, subsystems, bases=bases, on_degenerate=on_degenerate)
    return sample_table(table, shots, seed)
