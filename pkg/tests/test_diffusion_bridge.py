import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from dta.diffusion_bridge import (
    CorrespondenceSet,
    bridge_cost,
    cross_operator,
    extract_blocks,
    inter_domain_cost,
    label_augment,
)
from dta.errors import BadCorrespondence, BadLabels, UnreachablePoint
from dta.kernel_graph import DiffusionOperator, KernelConfig, diffuse, diffusion_operator, row_normalize


def chain(n, t):
    W = np.eye(n)
    for i in range(n - 1):
        W[i, i + 1] = W[i + 1, i] = 1.0
    return diffuse(row_normalize(W), t)


def random_stochastic(rng, n):
    return DiffusionOperator(oracles.rownorm(rng.uniform(0.05, 1.0, (n, n))), steps=3)


# ---------------------------------------------------------------- correspondences


def test_correspondence_validation():
    c = CorrespondenceSet.from_pairs([(0, 2), (3, 1)], 4, 3)
    assert len(c) == 2
    assert c.left.tolist() == [0, 3] and c.right.tolist() == [2, 1]
    with pytest.raises(BadCorrespondence):
        CorrespondenceSet.from_pairs([(4, 0)], 4, 3)
    with pytest.raises(BadCorrespondence):
        CorrespondenceSet.from_pairs([(0, 0), (0, 1)], 4, 3)
    with pytest.raises(BadCorrespondence):
        CorrespondenceSet.from_pairs([(0, 1), (2, 1)], 4, 3)
    with pytest.raises(BadCorrespondence):
        CorrespondenceSet.from_pairs([], 4, 3)


# ---------------------------------------------------------------- blocks


def test_blocks_identity_full_correspondence():
    I = DiffusionOperator(np.eye(4), steps=2)
    corr = CorrespondenceSet.from_pairs([(i, i) for i in range(4)], 4, 4)
    b = extract_blocks(I, I, corr)
    np.testing.assert_array_equal(b.gamma1, np.eye(4))
    np.testing.assert_array_equal(b.gamma1_t, np.eye(4))
    np.testing.assert_array_equal(cross_operator(b).values, np.eye(4))


def test_single_pair_block_is_column():
    P = chain(5, 3)
    corr = CorrespondenceSet.from_pairs([(2, 4)], 5, 5)
    b = extract_blocks(P, P, corr)
    np.testing.assert_array_equal(b.gamma1[:, 0], P.values[:, 2])
    x = cross_operator(b).values
    np.testing.assert_allclose(x, np.tile(x[0], (5, 1)), atol=1e-15)


def test_chain_blocks_hand_extracted():
    P = chain(4, 2)
    P2 = oracles.matpow(row_normalize(chain(4, 1).values).values, 2)
    corr = CorrespondenceSet.from_pairs([(0, 0), (3, 3)], 4, 4)
    b = extract_blocks(P, P, corr)
    np.testing.assert_allclose(b.gamma1, P2[:, [0, 3]], atol=1e-15)
    np.testing.assert_allclose(b.gamma2_t, P2[[0, 3], :], atol=1e-15)


def test_cross_operator_matches_naive_product():
    P1, P2 = chain(5, 3), chain(5, 3)
    pairs = [(0, 1), (4, 3)]
    corr = CorrespondenceSet.from_pairs(pairs, 5, 5)
    want12, want21 = oracles.bridge(P1.values, P2.values, pairs)
    b = extract_blocks(P1, P2, corr)
    np.testing.assert_allclose(cross_operator(b, "1->2").values, want12, atol=1e-14)
    np.testing.assert_allclose(cross_operator(b, "2->1").values, want21, atol=1e-14)


def test_unreachable_point_reported():
    # two disconnected components; the correspondence sits in the first one
    W = np.kron(np.eye(2), np.ones((3, 3)))
    P = diffuse(row_normalize(W), 2)
    corr = CorrespondenceSet.from_pairs([(0, 0)], 6, 6)
    with pytest.raises(UnreachablePoint) as info:
        cross_operator(extract_blocks(P, P, corr))
    assert info.value.indices == [3, 4, 5]
    assert "increase --t" in str(info.value)


def test_mismatched_steps_rejected():
    corr = CorrespondenceSet.from_pairs([(0, 0)], 4, 4)
    with pytest.raises(ValueError):
        extract_blocks(chain(4, 2), chain(4, 3), corr)


# ---------------------------------------------------------------- cost


def test_cost_identical_rows_is_zero():
    A = DiffusionOperator(np.array([[0.2, 0.8], [0.5, 0.5]]))
    D = inter_domain_cost(A, A, A, A)
    assert D[0, 0] == pytest.approx(0.0, abs=1e-15)
    assert D[1, 1] == pytest.approx(0.0, abs=1e-15)


def test_cost_orthogonal_is_two():
    A = DiffusionOperator(np.eye(2))
    D = inter_domain_cost(A, A, A, A)
    assert D[0, 1] == 2.0 and D[1, 0] == 2.0


def test_cost_matches_elementwise_oracle():
    rng = np.random.default_rng(0)
    p12 = rng.uniform(size=(4, 3))
    pt2 = rng.uniform(size=(3, 3))
    p21 = rng.uniform(size=(3, 4))
    pt1 = rng.uniform(size=(4, 4))
    ops = [DiffusionOperator(a, square=False) for a in (p12, pt2, p21, pt1)]
    np.testing.assert_allclose(inter_domain_cost(*ops), oracles.cost(p12, pt2, p21, pt1), atol=1e-14)


def test_label_augment_examples():
    D = np.random.default_rng(1).uniform(size=(3, 3))
    np.testing.assert_array_equal(label_augment(D, [1, 1, 1], [1, 1, 1]), D)
    np.testing.assert_array_equal(label_augment(D, [0, 0, 0], [1, 2, 3]), D + 1)
    mask = np.array([[1, 1, 0], [0, 0, 1], [0, 0, 1]], dtype=float)
    np.testing.assert_array_equal(label_augment(D, [0, 1, 1], [1, 1, 0]), D + mask)
    with pytest.raises(BadLabels):
        label_augment(D, [0, 1], [0, 1, 2])


# ---------------------------------------------------------------- properties


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(3, 8), m=st.integers(3, 8), c=st.integers(1, 3))
def test_role_swap_transposes_cost(seed, n, m, c):
    rng = np.random.default_rng(seed)
    P1, P2 = random_stochastic(rng, n), random_stochastic(rng, m)
    left = rng.choice(n, c, replace=False)
    right = rng.choice(m, c, replace=False)
    D12, _, _ = bridge_cost(P1, P2, CorrespondenceSet(np.column_stack([left, right]), n, m))
    D21, _, _ = bridge_cost(P2, P1, CorrespondenceSet(np.column_stack([right, left]), m, n))
    np.testing.assert_allclose(D21, D12.T, atol=1e-12)
    assert D12.min() >= 0.0 and D12.max() <= 2.0
    labels1, labels2 = rng.integers(0, 2, n), rng.integers(0, 2, m)
    Dl = label_augment(D12, labels1, labels2)
    assert Dl.min() >= 0.0 and Dl.max() <= 3.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), scale=st.floats(1e-3, 1e3))
def test_cosine_term_is_scale_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    p12 = rng.uniform(size=(4, 3))
    pt2, p21, pt1 = rng.uniform(size=(3, 3)), rng.uniform(size=(3, 4)), rng.uniform(size=(4, 4))
    row = rng.integers(0, 4)
    scaled = p12.copy()
    scaled[row] *= scale
    ops = lambda a: [DiffusionOperator(x, square=False) for x in (a, pt2, p21, pt1)]
    np.testing.assert_allclose(inter_domain_cost(*ops(scaled)), inter_domain_cost(*ops(p12)), atol=1e-12)


def test_correspondence_self_cost_locally_minimal():
    rng = np.random.default_rng(5)
    centres = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    lab = np.repeat(np.arange(3), 15)
    X = centres[lab] + 0.5 * rng.standard_normal((45, 2))
    Y = np.column_stack([X[:, 1], -X[:, 0], 0.1 * X[:, 0]]) + 0.05 * rng.standard_normal((45, 3))
    cfg = KernelConfig(k=5, t=3)
    _, _, Pt1 = diffusion_operator(X, cfg)
    _, _, Pt2 = diffusion_operator(Y, cfg)
    pairs = [(0, 0), (15, 15), (30, 30)]
    D, _, _ = bridge_cost(Pt1, Pt2, CorrespondenceSet.from_pairs(pairs, 45, 45))
    for i, j in pairs:
        other = lab != lab[j]
        assert D[i, j] <= D[i, other].min()
