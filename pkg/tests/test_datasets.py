import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dta.datasets import (
    BLOB_MEANS_1,
    BLOB_MEANS_2,
    PairedDataset,
    ParseError,
    distort_images,
    gen_blob_chain,
    gen_double_helix,
    gen_gaussian_blobs,
    gen_mi_features,
    gen_mnist_double,
    gen_partial_overlap,
    gen_swiss_scurve,
    load_csv_pair,
    load_domain_csv,
    load_pairs_csv,
    read_idx,
    sample_correspondences,
    save_domain_csv,
    save_pairs_csv,
    write_idx,
)
from dta.errors import BadCorrespondence, BadFile, NoSharedMass
from dta.evaluation import knn_classify, stratified_split
from dta.kernel_graph import DomainData


def same(a: PairedDataset, b: PairedDataset):
    np.testing.assert_array_equal(a.domain1.features, b.domain1.features)
    np.testing.assert_array_equal(a.domain2.features, b.domain2.features)
    np.testing.assert_array_equal(a.ground_truth, b.ground_truth)


# ---------------------------------------------------------------- generators


def test_swiss_scurve_surfaces():
    ds = gen_swiss_scurve(1000, noise=0.0, seed=3)
    r, w = ds.latent.T
    u = 1.5 * np.pi + 3.0 * np.pi * r
    X, Y = ds.domain1.features, ds.domain2.features
    np.testing.assert_allclose(X[:, 0] ** 2 + X[:, 2] ** 2, u ** 2, atol=1e-9)
    u2 = -1.5 * np.pi + 3.0 * np.pi * r
    np.testing.assert_allclose(Y[:, 0], np.sin(u2), atol=1e-12)
    np.testing.assert_allclose(Y[:, 2], np.sign(u2) * (np.cos(u2) - 1), atol=1e-12)
    assert u.min() >= 1.5 * np.pi and u.max() <= 4.5 * np.pi
    np.testing.assert_array_equal(ds.ground_truth, np.column_stack([np.arange(1000)] * 2))


def test_swiss_scurve_deterministic():
    same(gen_swiss_scurve(200, 0.0, 5), gen_swiss_scurve(200, 0.0, 5))
    same(gen_swiss_scurve(200, 0.1, 5), gen_swiss_scurve(200, 0.1, 5))
    with pytest.raises(ValueError):
        gen_swiss_scurve(5)


def test_helix_unit_circle():
    ds = gen_double_helix(300, noise=0.0, seed=1)
    for F in (ds.domain1.features, ds.domain2.features):
        np.testing.assert_allclose(F[:, 0] ** 2 + F[:, 1] ** 2, 1.0, atol=1e-9)
    s = ds.latent[:, 0]
    assert s.min() >= 0 and s.max() <= 4 * np.pi
    same(gen_double_helix(100, 0.05, 2), gen_double_helix(100, 0.05, 2))


def test_helix_origin_point():
    # the map is evaluated at the latent, so s = 0 is read off the closed form
    s = np.array([0.0])
    d1 = np.column_stack([np.cos(s), np.sin(s), s / (4 * np.pi)])
    d2 = np.column_stack([np.cos(s + np.pi), np.sin(s + np.pi), s / (4 * np.pi)])
    np.testing.assert_allclose(d1, [[1.0, 0.0, 0.0]], atol=1e-15)
    np.testing.assert_allclose(d2, [[-1.0, 0.0, 0.0]], atol=1e-15)
    ds = gen_double_helix(50, 0.0, 0)
    i = int(np.argmin(ds.latent[:, 0]))
    s0 = ds.latent[i, 0]
    np.testing.assert_allclose(ds.domain1.features[i], [np.cos(s0), np.sin(s0), s0 / (4 * np.pi)], atol=1e-15)
    np.testing.assert_allclose(ds.domain2.features[i], -ds.domain1.features[i] * [1, 1, -1], atol=1e-15)


def test_blobs_design():
    np.testing.assert_array_equal(BLOB_MEANS_1, [[0, 0], [0, 0.3], [3, 3]])
    np.testing.assert_array_equal(BLOB_MEANS_2, [[3, 3], [0, 0.3], [0, 0]])
    ds = gen_gaussian_blobs(2000, seed=0)
    assert ds.domain1.labels.size == 6000 and ds.domain2.labels.size == 6000
    for c in range(3):
        rows = ds.domain1.labels == c
        np.testing.assert_allclose(ds.domain1.features[rows].mean(axis=0), BLOB_MEANS_1[c], atol=0.05)
        np.testing.assert_allclose(ds.domain2.features[rows].mean(axis=0), BLOB_MEANS_2[c], atol=0.05)
        np.testing.assert_allclose(np.cov(ds.domain1.features[rows].T), 0.5 * np.eye(2), atol=0.05)
    same(gen_gaussian_blobs(20, 4), gen_gaussian_blobs(20, 4))


def test_blobs_each_domain_confuses_one_pair():
    ds = gen_gaussian_blobs(200, seed=1)
    tr, te = stratified_split(ds.domain1.labels, 0.3, 0)
    for dom, pair in ((ds.domain1, {0, 1}), (ds.domain2, {1, 2})):
        pred, acc = knn_classify(dom.features[tr], dom.labels[tr], dom.features[te], 10, dom.labels[te])
        truth = dom.labels[te]
        other = ({0, 1, 2} - pair).pop()
        assert np.mean(pred[truth == other] == other) > 0.95
        inside = np.isin(truth, list(pair))
        assert np.mean(pred[inside] == truth[inside]) < 0.75


def test_blob_chain_connected_layout():
    ds = gen_blob_chain(30, 5, seed=0)
    assert ds.domain1.n == 150 and ds.domain2.dim == 3
    same(gen_blob_chain(30, 5, seed=2), gen_blob_chain(30, 5, seed=2))


def test_mi_features_planted_pairs():
    ds = gen_mi_features(500, n_features=10, seed=0)
    assert ds.domain1.dim == 10 and ds.domain2.dim == 10
    assert ds.meta["planted_pairs"] == [[0, 0], [1, 1], [2, 2]]
    with pytest.raises(ValueError):
        gen_mi_features(100, n_features=2)


# ---------------------------------------------------------------- MNIST


def test_mnist_identity_distortion_is_pooling():
    imgs = np.random.default_rng(0).integers(0, 256, (3, 28, 28)).astype(np.uint8)
    ds = gen_mnist_double(imgs, np.array([1, 2, 3]), rotation_deg=0.0, blur_sigma=0.0)
    orig = imgs.astype(float) / 255.0
    pooled = np.array([[orig[k, 2 * a:2 * a + 2, 2 * b:2 * b + 2].mean() for a in range(14) for b in range(14)]
                       for k in range(3)])
    assert ds.domain1.dim == 784 and ds.domain2.dim == 196
    np.testing.assert_allclose(ds.domain2.features, pooled, atol=1e-9)
    assert ds.domain1.features.max() <= 1.0
    assert ds.domain2.labels.tolist() == [1, 2, 3]


def test_constant_image_stays_constant_in_interior():
    img = np.full((1, 28, 28), 0.6)
    out = distort_images(img, rotation_deg=45.0, blur_sigma=1.0)[0]
    # after a 45 degree turn the filled region is a diamond around the centre;
    # pixels more than 3 sigma inside it never see the zero fill
    np.testing.assert_allclose(out[5:9, 5:9], 0.6, atol=1e-9)
    out = distort_images(img, rotation_deg=0.0, blur_sigma=1.0)[0]
    np.testing.assert_allclose(out[3:11, 3:11], 0.6, atol=1e-9)


def test_idx_round_trip(tmp_path):
    imgs = np.random.default_rng(1).integers(0, 256, (4, 28, 28)).astype(np.uint8)
    labels = np.array([0, 1, 2, 3], dtype=np.uint8)
    write_idx(tmp_path / "img.idx", imgs)
    write_idx(tmp_path / "lab.idx", labels)
    np.testing.assert_array_equal(read_idx(tmp_path / "img.idx"), imgs)
    np.testing.assert_array_equal(read_idx(tmp_path / "lab.idx"), labels)
    ds = gen_mnist_double(tmp_path / "img.idx", tmp_path / "lab.idx", n=2, seed=0)
    assert ds.domain1.n == 2


def test_idx_bad_header(tmp_path):
    (tmp_path / "bad.idx").write_bytes(b"\x00\x00\x09\x99" + bytes(20))
    with pytest.raises(BadFile):
        read_idx(tmp_path / "bad.idx")
    (tmp_path / "short.idx").write_bytes(b"\x00\x00\x08\x03" + bytes(4))
    with pytest.raises(BadFile):
        read_idx(tmp_path / "short.idx")


# ---------------------------------------------------------------- partial overlap


def balanced(n_classes=10, per=20):
    labels = np.repeat(np.arange(n_classes), per)
    X = np.random.default_rng(0).standard_normal((labels.size, 2))
    return PairedDataset(DomainData(X, labels), DomainData(X + 1.0, labels.copy()),
                         np.column_stack([np.arange(labels.size)] * 2))


def test_partial_overlap_fraction():
    base = balanced()
    out = gen_partial_overlap(base, range(8), range(2, 10), seed=0)
    assert out.shared_fraction == pytest.approx(6 / 8)
    assert out.domain1.n == 160 and out.domain2.n == 160
    l1, l2 = out.domain1.labels, out.domain2.labels
    assert all(l1[i] == l2[j] and 2 <= l1[i] <= 7 for i, j in out.ground_truth)
    # domain-2 features follow the truth map
    for i, j in out.ground_truth[:10]:
        np.testing.assert_array_equal(out.domain2.features[j], out.domain1.features[i] + 1.0)
    same(out, gen_partial_overlap(base, range(8), range(2, 10), seed=0))


def test_partial_overlap_same_keep():
    out = gen_partial_overlap(balanced(), [1, 2], [1, 2], seed=3)
    assert out.shared_fraction == 1.0


def test_partial_overlap_disjoint():
    with pytest.raises(NoSharedMass):
        gen_partial_overlap(balanced(), [0, 1], [2, 3])


def test_ground_truth_validated():
    d = DomainData(np.zeros((3, 1)) + np.arange(3)[:, None])
    with pytest.raises(BadCorrespondence):
        PairedDataset(d, d, [[0, 0], [1, 0]])
    with pytest.raises(BadCorrespondence):
        PairedDataset(d, d, [[0, 3]])


# ---------------------------------------------------------------- correspondences


def test_sample_counts():
    truth = np.column_stack([np.arange(1000), np.arange(1000)])
    assert len(sample_correspondences(truth, 0.01, 0)) == 10
    assert len(sample_correspondences(truth, 1.0, 0)) == 1000
    assert len(sample_correspondences(truth, 1e-6, 0)) == 1
    with pytest.raises(ValueError):
        sample_correspondences(truth, 0.0)


def test_sample_seeds_differ():
    truth = np.column_stack([np.arange(1000), np.arange(1000)])
    subsets = {tuple(sample_correspondences(truth, 0.01, s).left.tolist()) for s in range(100)}
    assert len(subsets) == 100
    a = sample_correspondences(truth, 0.01, 7).pairs
    np.testing.assert_array_equal(a, sample_correspondences(truth, 0.01, 7).pairs)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), frac=st.floats(0.01, 1.0))
def test_sample_is_subset_of_truth(seed, frac):
    rng = np.random.default_rng(seed)
    truth = np.column_stack([np.arange(50), rng.permutation(60)[:50]])
    c = sample_correspondences(truth, frac, seed, 50, 60)
    tset = {tuple(p) for p in truth.tolist()}
    assert all(tuple(p) in tset for p in c.pairs.tolist())


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_generators_finite_and_deterministic(seed):
    for make in (lambda: gen_swiss_scurve(50, 0.05, seed), lambda: gen_double_helix(50, 0.05, seed),
                 lambda: gen_gaussian_blobs(10, seed), lambda: gen_mi_features(60, seed=seed),
                 lambda: gen_blob_chain(10, 4, seed)):
        a, b = make(), make()
        same(a, b)
        assert np.isfinite(a.domain1.features).all() and np.isfinite(a.domain2.features).all()


# ---------------------------------------------------------------- CSV


def test_csv_round_trip_text_identical(tmp_path):
    d = DomainData(np.array([[0.1, -2.5], [1e-17, 3.0]]), labels=[1, 0], feature_names=["a", "b"])
    save_domain_csv(d, tmp_path / "x.csv")
    back = load_domain_csv(tmp_path / "x.csv", "label")
    np.testing.assert_array_equal(back.features, d.features)
    assert back.labels.tolist() == [1, 0] and back.feature_names == ["a", "b"]
    save_domain_csv(back, tmp_path / "y.csv")
    assert (tmp_path / "x.csv").read_text() == (tmp_path / "y.csv").read_text()


def test_label_column_excluded(tmp_path):
    (tmp_path / "x.csv").write_text("f0,label,f1\n1,0,2\n3,1,4\n")
    d = load_domain_csv(tmp_path / "x.csv", "label")
    assert d.features.tolist() == [[1.0, 2.0], [3.0, 4.0]]
    assert d.labels.tolist() == [0, 1]


def test_parse_errors_name_lines(tmp_path):
    (tmp_path / "ragged.csv").write_text("a,b\n1,2\n3\n")
    with pytest.raises(ParseError, match=":3:"):
        load_domain_csv(tmp_path / "ragged.csv")
    (tmp_path / "text.csv").write_text("a,b\n1,2\n3,x\n")
    with pytest.raises(ParseError, match=r":3:.*'x'"):
        load_domain_csv(tmp_path / "text.csv")
    (tmp_path / "c.csv").write_text("i,j\n0,0\n2,1\n")
    with pytest.raises(ParseError, match=":3:.*i=2"):
        load_pairs_csv(tmp_path / "c.csv", 2, 2)


def test_load_csv_pair(tmp_path):
    ds = gen_gaussian_blobs(5, seed=0)
    save_domain_csv(ds.domain1, tmp_path / "d1.csv")
    save_domain_csv(ds.domain2, tmp_path / "d2.csv")
    save_pairs_csv([(0, 0), (3, 3)], tmp_path / "c.csv")
    save_pairs_csv(ds.ground_truth, tmp_path / "t.csv")
    pair, corr = load_csv_pair(tmp_path / "d1.csv", tmp_path / "d2.csv", tmp_path / "c.csv", "label",
                               tmp_path / "t.csv")
    np.testing.assert_array_equal(pair.domain1.features, ds.domain1.features)
    np.testing.assert_array_equal(pair.domain2.labels, ds.domain2.labels)
    np.testing.assert_array_equal(pair.ground_truth, ds.ground_truth)
    assert corr.pairs.tolist() == [[0, 0], [3, 3]]
