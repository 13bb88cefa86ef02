"""Labeled tensor-product Hilbert spaces.

States and operators live on a :class:`CompositeSpace`, an ordered list of
named subsystems.  The factor order fixed at construction is canonical: every
subset operation (partial trace, Schmidt split, embedding) re-expresses its
result in that order, whatever order the caller listed the names in.

Everything here is dense and immutable.  Arrays stored on the dataclasses are
flagged read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

ATOL = 1e-10
EIG_ATOL = 1e-9
DEGENERACY_GAP = 1e-9
MAX_DIM = 4096


class SpaceError(ValueError):
    """Subsystem labels that do not fit the space they are used with."""


class InvariantError(ValueError):
    """A value violates the invariants of its type."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SubsystemId:
    name: str
    dim: int

    def __post_init__(self):
        if not self.name:
            raise InvariantError("subsystem name must be non-empty")
        if int(self.dim) != self.dim or self.dim < 2:
            raise InvariantError(f"subsystem {self.name!r}: dim must be an integer >= 2, got {self.dim}")

    def __str__(self):
        return f"{self.name}({self.dim})"


@dataclass(frozen=True)
class CompositeSpace:
    factors: tuple[SubsystemId, ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise InvariantError("a composite space needs at least one factor")
        names = [f.name for f in self.factors]
        if len(set(names)) != len(names):
            raise SpaceError(f"duplicate subsystem names in {names}")
        if self.dim > MAX_DIM:
            raise InvariantError(f"total dimension {self.dim} exceeds the cap of {MAX_DIM}")

    @classmethod
    def of(cls, *spec: tuple[str, int] | SubsystemId) -> CompositeSpace:
        """``CompositeSpace.of(("P", 2), ("M", 3))``."""
        return cls(tuple(s if isinstance(s, SubsystemId) else SubsystemId(*s) for s in spec))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def __contains__(self, name) -> bool:
        if isinstance(name, SubsystemId):
            return name in self.factors
        return name in self.names

    def __len__(self):
        return len(self.factors)

    def __str__(self):
        return "+".join(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SpaceError(f"subsystem {name!r} is not part of {self}") from None

    def positions(self, names: Iterable[str | SubsystemId]) -> list[int]:
        """Canonical (sorted) factor positions of ``names``; rejects unknown or repeated labels."""
        names = [n.name if isinstance(n, SubsystemId) else n for n in names]
        if len(set(names)) != len(names):
            raise SpaceError(f"repeated subsystem labels in {names}")
        return sorted(self.index(n) for n in names)

    def subspace(self, names: Iterable[str | SubsystemId]) -> CompositeSpace:
        pos = self.positions(names)
        if not pos:
            raise SpaceError("empty subsystem selection")
        return CompositeSpace(tuple(self.factors[p] for p in pos))

    def complement(self, names: Iterable[str | SubsystemId]) -> list[int]:
        keep = set(self.positions(names))
        return [p for p in range(len(self.factors)) if p not in keep]

    def concat(self, other: CompositeSpace) -> CompositeSpace:
        shared = set(self.names) & set(other.names)
        if shared:
            raise SpaceError(f"spaces share subsystems {sorted(shared)}")
        return CompositeSpace(self.factors + other.factors)


def _as_names(subsystems) -> list[str]:
    if isinstance(subsystems, (str, SubsystemId)):
        subsystems = [subsystems]
    return [s.name if isinstance(s, SubsystemId) else s for s in subsystems]


def fix_phase(v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Rotate ``v`` so its largest-magnitude entry is real and positive.

    Entries within ``tol`` of the maximum magnitude count as tied; the lowest
    index among them wins.
    """
    mags = np.abs(v)
    k = int(np.flatnonzero(mags >= mags.max() - tol)[0])
    if mags[k] == 0:
        return v
    return v * (abs(v[k]) / v[k])


@dataclass(frozen=True)
class PureState:
    space: CompositeSpace
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape != (self.space.dim,):
            raise InvariantError(f"expected {self.space.dim} amplitudes for {self.space}, got {amps.size}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1) > ATOL:
            raise InvariantError(f"state is not normalized (norm {norm:.3e})")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @classmethod
    def normalized(cls, space: CompositeSpace, amplitudes) -> PureState:
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        return cls(space, amps / np.linalg.norm(amps))

    @classmethod
    def basis(cls, space: CompositeSpace, *index: int) -> PureState:
        """Computational basis state; one index per factor, or a single flat index."""
        amps = np.zeros(space.dim, dtype=complex)
        flat = index[0] if len(index) == 1 else np.ravel_multi_index(index, space.dims)
        amps[flat] = 1
        return cls(space, amps)

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per factor."""
        return self.amplitudes.reshape(self.space.dims)

    def inner(self, other: PureState) -> complex:
        if other.space != self.space:
            raise SpaceError(f"inner product across different spaces {self.space} and {other.space}")
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True)
class DensityMatrix:
    space: CompositeSpace
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = self.space.dim
        if m.shape != (n, n):
            raise InvariantError(f"expected a {n}x{n} matrix for {self.space}, got {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > ATOL:
            raise InvariantError("density matrix is not hermitian")
        tr = np.trace(m).real
        if abs(tr - 1) > ATOL:
            raise InvariantError(f"density matrix trace is {tr:.12g}, not 1")
        if np.linalg.eigvalsh(m).min() < -ATOL:
            raise InvariantError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "matrix", _frozen(m))

    def tensor(self) -> np.ndarray:
        d = self.space.dims
        return self.matrix.reshape(d + d)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)[::-1]


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs in descending eigenvalue order.

    ``clusters`` lists groups of indices whose eigenvalues lie within
    ``DEGENERACY_GAP`` of a neighbour; a non-empty list sets ``degenerate``.
    """

    space: CompositeSpace
    eigenvalues: np.ndarray
    eigenvectors: tuple[PureState, ...]
    clusters: tuple[tuple[int, ...], ...] = ()
    tainted: bool = False

    @property
    def degenerate(self) -> bool:
        return bool(self.clusters)

    def __len__(self):
        return len(self.eigenvectors)

    def matrix(self) -> np.ndarray:
        """Eigenvectors as columns."""
        if not self.eigenvectors:
            return np.zeros((self.space.dim, 0), dtype=complex)
        return np.column_stack([v.amplitudes for v in self.eigenvectors])

    def reconstruct(self) -> np.ndarray:
        V = self.matrix()
        return (V * self.eigenvalues) @ V.conj().T

    def support(self, tol: float = ATOL) -> SpectralDecomposition:
        """Restrict to eigenvalues above ``tol``; degeneracy is re-evaluated on what remains."""
        keep = [i for i, lam in enumerate(self.eigenvalues) if lam > tol]
        vals = np.asarray(self.eigenvalues)[keep]
        return SpectralDecomposition(
            self.space,
            _frozen_real(vals),
            tuple(self.eigenvectors[i] for i in keep),
            _clusters(vals),
            self.tainted,
        )


def _frozen_real(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _clusters(vals: Sequence[float], gap: float = DEGENERACY_GAP) -> tuple[tuple[int, ...], ...]:
    out, cur = [], [0] if len(vals) else []
    for i in range(1, len(vals)):
        if abs(vals[i - 1] - vals[i]) < gap:
            cur.append(i)
        else:
            if len(cur) > 1:
                out.append(tuple(cur))
            cur = [i]
    if len(cur) > 1:
        out.append(tuple(cur))
    return tuple(out)


def _canonical_subspace_basis(V: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis for the column span of ``V``.

    Standard basis vectors are projected onto the span and orthonormalized,
    always taking the candidate with the largest remaining norm (lowest index
    on ties).  Near-diagonal blocks thus come back as standard basis vectors
    regardless of how the eigensolver rotated them.
    """
    P = V @ V.conj().T
    k = V.shape[1]
    cands = [P[:, i].copy() for i in range(P.shape[0])]
    basis: list[np.ndarray] = []
    for _ in range(k):
        norms = np.array([np.linalg.norm(c) for c in cands])
        i = int(np.flatnonzero(norms >= norms.max() - 1e-12)[0])
        v = cands[i] / norms[i]
        basis.append(v)
        cands = [c - v * np.vdot(v, c) for c in cands]
    return np.column_stack(basis)


def tensor(a: PureState, b: PureState) -> PureState:
    """Product state ``a ⊗ b`` over the concatenated space."""
    space = a.space.concat(b.space)
    return PureState(space, np.kron(a.amplitudes, b.amplitudes))


def pure_to_density(psi: PureState) -> DensityMatrix:
    v = psi.amplitudes
    return DensityMatrix(psi.space, np.outer(v, v.conj()))


def _keep_positions(space: CompositeSpace, keep) -> list[int]:
    names = _as_names(keep)
    if not names:
        raise SpaceError("partial trace needs a non-empty set of subsystems to keep")
    return space.positions(names)


def partial_trace(rho: DensityMatrix, keep) -> DensityMatrix:
    """Trace out everything except ``keep``; result in canonical factor order."""
    space = rho.space
    pos = _keep_positions(space, keep)
    n = len(space)
    traced = [p for p in range(n) if p not in pos]
    # einsum labels: kets 0..n-1, bras n..2n-1, traced bras share the ket label
    ket = list(range(n))
    bra = [p if p in traced else n + p for p in range(n)]
    out = pos + [n + p for p in pos]
    t = np.einsum(rho.tensor(), ket + bra, out)
    sub = space.subspace([space.names[p] for p in pos])
    return DensityMatrix(sub, t.reshape(sub.dim, sub.dim))


def reduced_density(psi: PureState, keep) -> DensityMatrix:
    """``partial_trace(pure_to_density(psi), keep)`` without forming the full dyad."""
    space = psi.space
    pos = _keep_positions(space, keep)
    rest = [p for p in range(len(space)) if p not in pos]
    sub = space.subspace([space.names[p] for p in pos])
    A = np.transpose(psi.tensor(), pos + rest).reshape(sub.dim, -1)
    return DensityMatrix(sub, A @ A.conj().T)


def eig_hermitian(rho: DensityMatrix | np.ndarray, space: CompositeSpace | None = None) -> SpectralDecomposition:
    """Full eigendecomposition with descending eigenvalues.

    Eigenvectors inside a degenerate cluster are replaced by a canonical basis
    of the cluster's eigenspace, then every vector gets the largest-component
    phase convention.  The result's ``clusters`` record the degeneracies.
    """
    if isinstance(rho, DensityMatrix):
        space, m = rho.space, rho.matrix
    else:
        m = np.asarray(rho, dtype=complex)
        if space is None:
            raise TypeError("space is required for a bare matrix")
    w, V = np.linalg.eigh(m)
    w, V = w[::-1], V[:, ::-1].copy()
    clusters = _clusters(w)
    for cl in clusters:
        idx = list(cl)
        V[:, idx] = _canonical_subspace_basis(V[:, idx])
        # recompute the (nearly equal) eigenvalues as Rayleigh quotients
        for i in idx:
            w[i] = np.vdot(V[:, i], m @ V[:, i]).real
    vecs = tuple(PureState(space, fix_phase(V[:, i])) for i in range(V.shape[1]))
    return SpectralDecomposition(space, _frozen_real(w), vecs, clusters)


@dataclass(frozen=True)
class SchmidtForm:
    left_space: CompositeSpace
    right_space: CompositeSpace
    coefficients: np.ndarray
    left_vectors: tuple[PureState, ...]
    right_vectors: tuple[PureState, ...]

    def __len__(self):
        return len(self.coefficients)

    def reconstruct(self) -> np.ndarray:
        """Amplitudes of ``Σ c_j left_j ⊗ right_j`` over left_space + right_space."""
        out = np.zeros(self.left_space.dim * self.right_space.dim, dtype=complex)
        for c, l, r in zip(self.coefficients, self.left_vectors, self.right_vectors):
            out += c * np.kron(l.amplitudes, r.amplitudes)
        return out


def schmidt_decompose(psi: PureState, left, tol: float = ATOL) -> SchmidtForm:
    """Schmidt form across the cut ``left | rest``.

    Coefficients are real, nonnegative and descending; only the nonzero ones
    (above ``tol``) are kept, so the number of terms is the Schmidt rank.
    Right vectors carry the phase convention and left vectors absorb the rest.
    """
    space = psi.space
    names = _as_names(left)
    lpos = space.positions(names)
    if not lpos or len(lpos) == len(space):
        raise SpaceError("Schmidt decomposition needs a proper, non-empty bipartition")
    rpos = [p for p in range(len(space)) if p not in lpos]
    lsp = space.subspace([space.names[p] for p in lpos])
    rsp = space.subspace([space.names[p] for p in rpos])
    M = np.transpose(psi.tensor(), lpos + rpos).reshape(lsp.dim, rsp.dim)
    U, s, Vh = np.linalg.svd(M, full_matrices=False)
    rank = int(np.sum(s > tol))
    lefts, rights = [], []
    for j in range(rank):
        r = Vh[j]
        r_fixed = fix_phase(r)
        # r_fixed = r * phase, so u * s * r = (u / phase) * s * r_fixed
        phase = r_fixed[np.argmax(np.abs(r))] / r[np.argmax(np.abs(r))]
        lefts.append(PureState.normalized(lsp, U[:, j] / phase))
        rights.append(PureState.normalized(rsp, r_fixed))
    return SchmidtForm(lsp, rsp, _frozen_real(s[:rank]), tuple(lefts), tuple(rights))


def permute(psi: PureState, order: Sequence[str]) -> PureState:
    """Same state with its factors listed in ``order``."""
    pos = [psi.space.index(n) for n in order]
    if sorted(pos) != list(range(len(psi.space))):
        raise SpaceError(f"{list(order)} is not a permutation of {list(psi.space.names)}")
    space = CompositeSpace(tuple(psi.space.factors[p] for p in pos))
    return PureState(space, np.transpose(psi.tensor(), pos).reshape(-1))


def embed_operator(op: np.ndarray, sub: CompositeSpace, space: CompositeSpace) -> np.ndarray:
    """Dense matrix of ``op ⊗ identity`` on ``space`` (``sub`` in canonical order)."""
    pos = space.positions(sub.names)
    if [space.factors[p] for p in pos] != list(sub.factors):
        raise SpaceError(f"{sub} is not a canonically ordered subspace of {space}")
    n = len(space)
    rest = [p for p in range(n) if p not in pos]
    rest_dim = int(np.prod([space.dims[p] for p in rest])) if rest else 1
    full = np.kron(np.asarray(op, dtype=complex), np.eye(rest_dim))
    d = [space.dims[p] for p in pos + rest]
    t = full.reshape(d + d)
    perm = pos + rest
    inv = list(np.argsort(perm))
    t = np.transpose(t, inv + [n + i for i in inv])
    return t.reshape(space.dim, space.dim)


def apply_operator(op: np.ndarray, sub: CompositeSpace, psi: PureState) -> np.ndarray:
    """Amplitudes of ``(op ⊗ I) psi`` where ``op`` acts on the factors of ``sub``; not renormalized."""
    space = psi.space
    pos = space.positions(sub.names)
    if [space.factors[p] for p in pos] != list(sub.factors):
        raise SpaceError(f"{sub} is not a canonically ordered subspace of {space}")
    n = len(space)
    rest = [p for p in range(n) if p not in pos]
    t = np.transpose(psi.tensor(), pos + rest).reshape(sub.dim, -1)
    t = (np.asarray(op) @ t).reshape([space.dims[p] for p in pos + rest])
    return np.transpose(t, list(np.argsort(pos + rest))).reshape(-1)


def random_state(space: CompositeSpace, rng: np.random.Generator) -> PureState:
    """Haar-random pure state (complex Gaussian amplitudes, normalized)."""
    v = rng.normal(size=space.dim) + 1j * rng.normal(size=space.dim)
    return PureState.normalized(space, v)


def random_density(space: CompositeSpace, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    """``A A† / Tr(A A†)`` with complex Gaussian ``A``."""
    k = rank or space.dim
    A = rng.normal(size=(space.dim, k)) + 1j * rng.normal(size=(space.dim, k))
    m = A @ A.conj().T
    m = (m + m.conj().T) / 2
    return DensityMatrix(space, m / np.trace(m).real)
