import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bellsim.dynamics import Direction, spin_eigenbasis
from bellsim.postulates import (
    DegeneracyWarning,
    DegenerateSpectrumError,
    JointProbabilityTable,
    NotDisjointError,
    joint_probability,
    joint_probability_table,
    nondisturbing_observable,
    possible_internal_states,
    pseudo_joint_probability,
    sample_assignments,
    sample_table,
)
from bellsim.scenarios import (
    SINGLET,
    EprConfig,
    build_epr_state,
    device_basis,
    epr_final_state,
    p1m1_possible_state,
    M1,
    M2,
)
from bellsim.tensor import (
    CompositeSpace,
    InvariantError,
    PureState,
    SubsystemId,
    embed_operator,
    random_state,
    reduced_density,
    tensor,
)

from . import oracles

S2 = 1 / np.sqrt(2)
PM = CompositeSpace.of(("P", 2), ("M", 3))


def premeasured(a, b):
    amps = np.zeros(6, dtype=complex)
    amps[1], amps[5] = a, b
    return PureState(PM, amps)


def trace_formula(psi, items):
    """Tr[pi_1 ... pi_n rho_U] with every projector embedded in the full space (no reduction)."""
    rho = np.outer(psi.amplitudes, psi.amplitudes.conj())
    op = np.eye(psi.space.dim, dtype=complex)
    for names, v in items:
        op = op @ embed_operator(np.outer(v, v.conj()), psi.space.subspace(names), psi.space)
    return np.trace(op @ rho)


# possible internal states ----------------------------------------------------


def test_pointer_possible_states():
    a, b = np.sqrt(0.7), np.sqrt(0.3)
    spec = possible_internal_states(premeasured(a, b), "M")
    np.testing.assert_allclose(spec.eigenvalues, [0.7, 0.3], atol=1e-12)
    np.testing.assert_allclose(spec.eigenvectors[0].amplitudes, [0, 1, 0], atol=1e-12)
    np.testing.assert_allclose(spec.eigenvectors[1].amplitudes, [0, 0, 1], atol=1e-12)


def test_product_state_single_possible_state(rng):
    a = random_state(CompositeSpace.of(("A", 2)), rng)
    b = random_state(CompositeSpace.of(("B", 3)), rng)
    spec = possible_internal_states(tensor(a, b), "B")
    assert len(spec) == 1 and abs(spec.eigenvalues[0] - 1) < 1e-12
    assert abs(abs(np.vdot(spec.eigenvectors[0].amplitudes, b.amplitudes)) - 1) < 1e-12


def test_singlet_marginal_is_degenerate():
    psi = build_epr_state(*SINGLET)
    with pytest.raises(DegenerateSpectrumError):
        possible_internal_states(psi, "P1")
    with pytest.warns(DegeneracyWarning):
        spec = possible_internal_states(psi, "P1", on_degenerate="accept")
    assert spec.tainted
    np.testing.assert_allclose(spec.eigenvalues, [0.5, 0.5], atol=1e-12)


def test_candidate_basis_is_verified():
    psi = build_epr_state(*SINGLET)
    up, down = np.array([1, 0]), np.array([0, 1])
    spec = possible_internal_states(psi, "P1", basis=[up, down])
    np.testing.assert_allclose(spec.eigenvalues, [0.5, 0.5])
    assert not spec.tainted
    skewed = build_epr_state(np.sqrt(0.8), np.sqrt(0.2))
    plus, minus = spin_eigenbasis(Direction(1.0, 0.0, 0.0))
    with pytest.raises(InvariantError):
        possible_internal_states(skewed, "P1", basis=[plus, minus])
    with pytest.raises(InvariantError):
        possible_internal_states(skewed, "P1", basis=[down])  # misses weight


def test_unknown_policy_rejected():
    with pytest.raises(ValueError):
        possible_internal_states(premeasured(1, 0), "M", on_degenerate="ignore")


# joint probabilities -----------------------------------------------------------


def test_epr_possible_states_strictly_correlated():
    c = (np.sqrt(0.7), -np.sqrt(0.3))
    psi = build_epr_state(*c)
    for j, k in itertools.product(range(2), repeat=2):
        p = joint_probability(psi, {"P1": j, "P2": k})
        assert abs(p - abs(c[j]) ** 2 * (j == k)) < 1e-12


def test_singlet_joint_with_explicit_bases():
    psi = build_epr_state(*SINGLET)
    bases = {"P1": oracles.phi1(), "P2": oracles.phi2()}
    for j, k in itertools.product(range(2), repeat=2):
        assert abs(joint_probability(psi, {"P1": j, "P2": k}, bases=bases) - 0.5 * (j == k)) < 1e-12


@pytest.mark.parametrize("ta, tb", [(0.0, np.pi / 4), (0.3, 2.0), (np.pi / 2, 0.1)])
def test_device_joint_matches_closed_form(ta, tb):
    c = (np.sqrt(0.6), -np.sqrt(0.4) * np.exp(0.7j))
    cfg = EprConfig.coplanar(ta, tb, coefficients=c)
    final = epr_final_state(cfg)
    expected = oracles.pair_table(c, oracles.spin_pair(ta), oracles.spin_pair(tb))
    bases = {"M1": device_basis(M1), "M2": device_basis(M2)}
    for j, k in itertools.product(range(2), repeat=2):
        assert abs(joint_probability(final, {"M1": j, "M2": k}, bases=bases) - expected[j, k]) < 1e-12


def test_single_projector_is_eigenvalue():
    psi = premeasured(np.sqrt(0.7), np.sqrt(0.3))
    spec = possible_internal_states(psi, "M")
    for j, lam in enumerate(spec.eigenvalues):
        assert abs(joint_probability(psi, {"M": j}) - lam) < 1e-12


def test_overlap_is_rejected():
    psi = premeasured(np.sqrt(0.7), np.sqrt(0.3))
    with pytest.raises(NotDisjointError):
        joint_probability(psi, {("P", "M"): 0, "M": 0})
    with pytest.raises(NotDisjointError):
        joint_probability_table(psi, [("P", "M"), "M"])


def _random_system(rng, n):
    dims = [2, 3, 2, 2][:n]
    return random_state(CompositeSpace.of(*[(f"S{i}", d) for i, d in enumerate(dims)]), rng)


@given(st.integers(0, 2**32 - 1), st.sampled_from([3, 4]))
def test_table_matches_trace_formula(seed, n):
    rng = np.random.default_rng(seed)
    psi = _random_system(rng, n)
    groups = [["S0"], ["S1"], ["S2"]] if n == 3 else [["S0", "S3"], ["S1"], ["S2"]]
    table = joint_probability_table(psi, groups)
    assert abs(table.probabilities.sum() - 1) < 1e-9
    for idx, p in table.cells():
        items = [(g, s.eigenvectors[j].amplitudes) for g, s, j in zip(groups, table.states, idx)]
        ref = trace_formula(psi, items)
        assert abs(ref.imag) < 1e-12
        assert abs(ref.real - p) < 1e-10
        assert abs(joint_probability(psi, dict(zip(map(tuple, groups), idx))) - p) < 1e-10


@given(st.integers(0, 2**32 - 1), st.sampled_from([3, 4]))
def test_table_order_invariant_and_marginalizes(seed, n):
    rng = np.random.default_rng(seed)
    psi = _random_system(rng, n)
    names = [f"S{i}" for i in range(n)]
    full = joint_probability_table(psi, names)
    rev = joint_probability_table(psi, names[::-1])
    np.testing.assert_allclose(full.probabilities, np.transpose(rev.probabilities, range(n)[::-1]), atol=1e-12)
    for drop in names:
        keep = [x for x in names if x != drop]
        direct = joint_probability_table(psi, keep)
        np.testing.assert_allclose(full.marginal(keep).probabilities, direct.probabilities, atol=1e-10)


@given(st.integers(0, 2**32 - 1), st.sampled_from([3, 4]))
def test_possible_states_commute_with_marginal(seed, n):
    rng = np.random.default_rng(seed)
    psi = _random_system(rng, n)
    names = psi.space.names
    subsets = [names[:1], names[1:2], names[:2], names[1:]]
    for sub in subsets:
        rho = reduced_density(psi, sub).matrix
        for v in possible_internal_states(psi, sub).eigenvectors:
            pi = np.outer(v.amplitudes, v.amplitudes.conj())
            assert np.max(np.abs(rho @ pi - pi @ rho)) < 1e-9


@given(st.integers(0, 2**32 - 1))
def test_reference_system_uniqueness(seed):
    rng = np.random.default_rng(seed)
    inner = random_state(CompositeSpace.of(("A", 2), ("B", 3)), rng)
    outer = random_state(CompositeSpace.of(("C", 2), ("D", 2)), rng)
    whole = tensor(inner, outer)
    small = possible_internal_states(inner, "B")
    big = possible_internal_states(whole, "B")
    np.testing.assert_allclose(small.eigenvalues, big.eigenvalues, atol=1e-10)
    for u, v in zip(small.eigenvectors, big.eigenvectors):
        assert abs(abs(np.vdot(u.amplitudes, v.amplitudes)) - 1) < 1e-10


def test_table_invariants_enforced():
    with pytest.raises(InvariantError):
        JointProbabilityTable((("A",),), [0.5, 0.6])
    with pytest.raises(InvariantError):
        JointProbabilityTable((("A",),), [1.2, -0.2])


# pseudo-probabilities --------------------------------------------------------------


def _pseudo_setup(c, ta, tb):
    cfg = EprConfig.coplanar(ta, tb, coefficients=c)
    return cfg, epr_final_state(cfg)


@pytest.mark.parametrize(
    "c, ta, tb",
    [
        (SINGLET, 0.0, np.pi / 4),
        ((S2, -np.exp(1j * np.pi / 4) * S2), np.pi / 6, np.pi / 3),
        ((np.sqrt(0.3), 1j * np.sqrt(0.7)), 1.0, 2.5),
    ],
)
def test_pseudo_orderings_match_closed_forms(c, ta, tb):
    cfg, final = _pseudo_setup(c, ta, tb)
    xi1, xi2 = oracles.spin_pair(ta), oracles.spin_pair(tb)
    for l, j, k in itertools.product(range(2), repeat=3):
        s_l = p1m1_possible_state(cfg.direction_a, l)
        m_j, m_k = device_basis(M1)[j], device_basis(M2)[k]
        first = pseudo_joint_probability(final, [(("P1", "M1"), s_l), ("M1", m_j), ("M2", m_k)])
        second = pseudo_joint_probability(final, [("M1", m_j), (("P1", "M1"), s_l), ("M2", m_k)])
        assert abs(first - oracles.pseudo_first(c, xi1, xi2, l, j, k)) < 1e-12
        assert abs(second - oracles.pseudo_second(c, xi1, xi2, l, j, k)) < 1e-12
        full_reverse = pseudo_joint_probability(final, [("M2", m_k), ("M1", m_j), (("P1", "M1"), s_l)])
        assert abs(full_reverse - np.conj(first)) < 1e-12


def test_pseudo_z_axis_is_real():
    c = (S2, -np.exp(1j * np.pi / 4) * S2)
    cfg, final = _pseudo_setup(c, 0.0, np.pi / 4)
    s0 = p1m1_possible_state(cfg.direction_a, 0)
    v = pseudo_joint_probability(final, [(("P1", "M1"), s0), ("M1", device_basis(M1)[0]), ("M2", device_basis(M2)[0])])
    assert abs(v.imag) < 1e-12


def test_pseudo_generic_angles_have_imaginary_part():
    # a off the z axis and complex coefficients push the value off the real axis
    c = (S2, -np.exp(1j * np.pi / 4) * S2)
    cfg, final = _pseudo_setup(c, 0.3, 1.1)
    s0 = p1m1_possible_state(cfg.direction_a, 0)
    v = pseudo_joint_probability(final, [(("P1", "M1"), s0), ("M1", device_basis(M1)[0]), ("M2", device_basis(M2)[0])])
    assert abs(v.imag) > 1e-3


def test_pseudo_accepts_indices_with_bases():
    psi = premeasured(np.sqrt(0.7), np.sqrt(0.3))
    v = pseudo_joint_probability(psi, [("M", 0), (("P", "M"), 0)])
    # P+M is pure, so its only possible state is the whole state and the value is P(M=0)
    assert abs(v - 0.7) < 1e-12


def test_nondisturbing_observable_in_phi_basis():
    c = (np.sqrt(0.8), -np.sqrt(0.2))
    obs = nondisturbing_observable(build_epr_state(*c), "P1")
    np.testing.assert_allclose(obs.matrix, np.diag([0.8, 0.2]), atol=1e-12)
    prod = tensor(PureState(CompositeSpace.of(("A", 2)), [0.6, 0.8]), PureState(CompositeSpace.of(("B", 2)), [1, 0]))
    assert np.linalg.matrix_rank(nondisturbing_observable(prod, "A").matrix, tol=1e-10) == 1


# sampling ---------------------------------------------------------------------------------


def test_sampling_never_draws_zero_cells():
    psi = build_epr_state(*SINGLET)
    emp = sample_assignments(psi, ["P1", "P2"], 100_000, seed=3, bases={"P1": oracles.phi1(), "P2": oracles.phi2()})
    assert emp.counts[0, 1] == 0 and emp.counts[1, 0] == 0
    assert emp.counts.sum() == 100_000


def test_sampling_within_five_sigma():
    c = (np.sqrt(0.6), -np.sqrt(0.4))
    cfg = EprConfig.coplanar(0.2, 1.3, coefficients=c)
    final = epr_final_state(cfg)
    bases = {"M1": device_basis(M1), "M2": device_basis(M2)}
    n = 100_000
    emp = sample_assignments(final, ["M1", "M2"], n, seed=11, bases=bases)
    p = oracles.pair_table(c, oracles.spin_pair(0.2), oracles.spin_pair(1.3))
    sigma = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(emp.frequencies - p) <= 5 * sigma + 1e-12)


def test_sampling_is_deterministic():
    psi = premeasured(np.sqrt(0.7), np.sqrt(0.3))
    one = sample_assignments(psi, ["M"], 1, seed=2**64 - 1)
    again = sample_assignments(psi, ["M"], 1, seed=2**64 - 1)
    assert one.counts.sum() == 1
    np.testing.assert_array_equal(one.counts, again.counts)
    a = sample_assignments(psi, ["M"], 200_000, seed=5).counts
    b = sample_assignments(psi, ["M"], 200_000, seed=5).counts
    np.testing.assert_array_equal(a, b)


def test_sampling_rejects_zero_shots():
    psi = premeasured(np.sqrt(0.7), np.sqrt(0.3))
    with pytest.raises(ValueError):
        sample_table(joint_probability_table(psi, ["M"]), 0, 1)


def test_sampling_propagates_degeneracy():
    with pytest.raises(DegenerateSpectrumError):
        sample_assignments(build_epr_state(*SINGLET), ["P1", "P2"], 10, seed=0)


def test_degenerate_override_taints_table():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegeneracyWarning)
        table = joint_probability_table(build_epr_state(*SINGLET), ["P1", "P2"], on_degenerate="accept")
    assert table.tainted
