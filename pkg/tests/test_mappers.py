import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anthrokit.errors import (
    DimensionMismatchError,
    InvalidValueError,
    RankDeficientError,
)
from anthrokit.mappers import (
    FeatureSpec,
    RatingMatrix,
    aggregate_ratings,
    apply_mapper,
    fit_mapper,
    load_mapper,
    mapper_jacobian,
    poly_features,
    predict_attribute_scores,
    save_mapper,
    transform_raw,
    variant_input_rows,
    variant_output_kind,
    variant_spec,
)


# ---------------------------------------------------------------------------
# aggregate_ratings


def test_aggregate_constant_ratings():
    scores = np.full((4, 3, 15), 3)
    means = aggregate_ratings(RatingMatrix(scores, ("a", "b", "c")))
    assert np.array_equal(means, np.full((4, 3), 3.0))


def test_aggregate_two_raters():
    scores = np.array([[[1, 5]]])
    means = aggregate_ratings(RatingMatrix(scores, ("a",)))
    assert means[0, 0] == 3.0


def test_aggregate_matches_bruteforce():
    rng = np.random.default_rng(0)
    scores = rng.integers(1, 6, size=(10, 4, 7))
    means = aggregate_ratings(RatingMatrix(scores, tuple("abcd")))
    brute = np.array([[sum(scores[i, j]) / 7 for j in range(4)] for i in range(10)])
    assert np.abs(means - brute).max() < 1e-12


def test_rating_range_validated():
    with pytest.raises(InvalidValueError):
        RatingMatrix(np.zeros((1, 1, 1), dtype=int), ("a",))


# ---------------------------------------------------------------------------
# poly_features


def test_poly_features_degree2_ordering():
    out = poly_features(np.array([2.0, 3.0]), 2)
    assert np.array_equal(out, [1.0, 2.0, 3.0, 4.0, 6.0, 9.0])


def test_poly_features_degree1():
    assert np.array_equal(poly_features(np.array([7.0]), 1), [1.0, 7.0])


def test_poly_features_count_15():
    out = poly_features(np.zeros(15), 2)
    assert out.shape[0] == 136  # C(17, 2)


# ---------------------------------------------------------------------------
# fit / apply


def _synthetic_exact(spec, n, seed=0, out_dim=3):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.5, 1.8, size=(n, spec.input_dim))
    w = rng.normal(size=(spec.num_poly_features, out_dim))
    y = poly_features(transform_raw(spec, x), spec.degree) @ w
    return x, y, w


def test_fit_recovers_exact_polynomial():
    spec = variant_spec("HWC2S")
    x, y, _ = _synthetic_exact(spec, 120)
    mapper = fit_mapper(x, y, spec, ridge=0.0)
    pred = apply_mapper(mapper, x)
    assert np.abs(pred - y).max() < 1e-8


def test_constant_targets_use_only_bias():
    spec = FeatureSpec(("chest_m", "waist_m"), (1, 1), 2)
    rng = np.random.default_rng(3)
    x = rng.uniform(0.5, 1.5, size=(40, 2))
    y = np.full((40, 2), 1.25)
    mapper = fit_mapper(x, y, spec, ridge=0.0)
    assert mapper.weights[0] == pytest.approx([1.25, 1.25], abs=1e-10)
    assert np.abs(mapper.weights[1:]).max() < 1e-10


def test_underdetermined_requires_ridge():
    spec = variant_spec("A2S", attribute_count=15)
    x = np.random.default_rng(0).uniform(1, 5, size=(30, 15))
    y = np.zeros((30, 2))
    with pytest.raises(RankDeficientError):
        fit_mapper(x, y, spec, ridge=0.0)
    fit_mapper(x, y, spec, ridge=1e-6)  # ok with regularization


def test_duplicate_column_rank_error():
    spec = FeatureSpec(("chest_m", "waist_m"), (1, 1), 1)
    rng = np.random.default_rng(1)
    col = rng.uniform(0.5, 1.5, size=(30, 1))
    x = np.concatenate([col, col], axis=1)
    with pytest.raises(RankDeficientError):
        fit_mapper(x, np.zeros((30, 1)), spec, ridge=0.0)


def test_apply_dimension_mismatch():
    spec = variant_spec("H2S")
    x, y, _ = _synthetic_exact(spec, 20)
    mapper = fit_mapper(x, y, spec)
    with pytest.raises(DimensionMismatchError):
        apply_mapper(mapper, np.zeros(3))


def test_zero_weight_mapper_zero_output():
    spec = variant_spec("H2S")
    x, y, _ = _synthetic_exact(spec, 20)
    mapper = fit_mapper(x, np.zeros((20, 4)), spec, ridge=0.0)
    assert np.abs(apply_mapper(mapper, x)).max() < 1e-12


def test_training_row_permutation_invariance():
    spec = variant_spec("HW2S")
    x, y, _ = _synthetic_exact(spec, 60, seed=5)
    m1 = fit_mapper(x, y, spec, ridge=0.0)
    perm = np.random.default_rng(7).permutation(60)
    m2 = fit_mapper(x[perm], y[perm], spec, ridge=0.0)
    probe = x[:10]
    assert np.abs(apply_mapper(m1, probe) - apply_mapper(m2, probe)).max() < 1e-9


def test_exact_interpolation_when_square():
    spec = FeatureSpec(("chest_m",), (1,), 2)  # 3 features
    x = np.array([[0.5], [1.0], [1.5]])
    y = np.array([[2.0], [-1.0], [0.5]])
    mapper = fit_mapper(x, y, spec, ridge=0.0)
    assert np.abs(apply_mapper(mapper, x) - y).max() < 1e-10


def test_height_unit_transform_equivalence():
    # fitting meters through the height channel == fitting pre-converted cm
    # through an identity channel
    rng = np.random.default_rng(11)
    h_m = rng.uniform(1.4, 2.0, size=(50, 1))
    y = rng.normal(size=(50, 2))
    spec_m = FeatureSpec(("height_cm",), (1,), 2)
    spec_raw = FeatureSpec(("chest_m",), (1,), 2)  # identity transform carrier
    m1 = fit_mapper(h_m, y, spec_m, ridge=0.0)
    m2 = fit_mapper(h_m * 100.0, y, spec_raw, ridge=0.0)
    p1 = apply_mapper(m1, h_m)
    p2 = apply_mapper(m2, h_m * 100.0)
    assert np.abs(p1 - p2).max() < 1e-10


def test_cbrt_weight_transform_applied():
    spec = variant_spec("HW2S")
    raw = np.array([[1.75, 64.0]])
    t = transform_raw(spec, raw)
    assert t[0, 0] == pytest.approx(175.0)
    assert t[0, 1] == pytest.approx(4.0)


# ---------------------------------------------------------------------------
# variants


def test_variant_specs():
    s = variant_spec("AHWC2S", attribute_count=15)
    assert s.channels == ("attributes", "height_cm", "cbrt_weight",
                          "chest_m", "waist_m", "hip_m")
    assert s.input_dim == 20
    assert variant_output_kind("AHWC2S") == "betas"
    s2a = variant_spec("S2A", beta_count=4)
    assert s2a.channels == ("betas",)
    assert variant_output_kind("S2A") == "attribute_scores"
    with pytest.raises(InvalidValueError):
        variant_spec("XZ2S")


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 9999))
def test_feature_subset_monotonicity(seed):
    # adding attribute channels never worsens the ridgeless training residual
    rng = np.random.default_rng(seed)
    n, num_attr = 120, 4
    attrs = rng.uniform(1, 5, size=(n, num_attr))
    meas = np.stack([
        rng.uniform(1.4, 2.0, n), rng.uniform(45, 110, n),
        rng.uniform(0.7, 1.3, n), rng.uniform(0.6, 1.2, n), rng.uniform(0.8, 1.4, n),
    ], axis=1)
    betas = rng.normal(size=(n, 3))
    for plain_name, a_name in (("H2S", "AH2S"), ("HW2S", "AHW2S"),
                               ("C2S", "AC2S"), ("HWC2S", "AHWC2S")):
        plain = variant_spec(plain_name)
        pref = variant_spec(a_name, attribute_count=num_attr)
        x_plain = variant_input_rows(plain, meas, attrs, None)
        x_pref = variant_input_rows(pref, meas, attrs, None)
        m_plain = fit_mapper(x_plain, betas, plain, ridge=0.0)
        m_pref = fit_mapper(x_pref, betas, pref, ridge=0.0)
        r_plain = np.sum((apply_mapper(m_plain, x_plain) - betas) ** 2)
        r_pref = np.sum((apply_mapper(m_pref, x_pref) - betas) ** 2)
        assert r_pref <= r_plain + 1e-9


# ---------------------------------------------------------------------------
# s2a


def _fit_pair(betas, scores, ridge=1e-8):
    num_b = betas.shape[1]
    num_a = scores.shape[1]
    s2a = fit_mapper(betas, scores, variant_spec("S2A", beta_count=num_b),
                     ridge=ridge, output_kind="attribute_scores")
    a2s = fit_mapper(scores, betas, variant_spec("A2S", attribute_count=num_a),
                     ridge=ridge, output_kind="betas")
    return s2a, a2s


def test_s2a_clamps_and_flags():
    rng = np.random.default_rng(2)
    betas = rng.normal(size=(40, 2))
    scores = np.clip(3.0 + 2.5 * betas[:, :1] + 0.5 * betas[:, 1:], 1, 5)
    s2a, _ = _fit_pair(betas, scores)
    wild = np.array([3.0, 3.0])  # far outside the training range
    raw = apply_mapper(s2a, wild)
    clamped, flags = predict_attribute_scores(s2a, wild)
    assert clamped.min() >= 1.0 and clamped.max() <= 5.0
    assert np.array_equal(flags, (raw < 1.0) | (raw > 5.0))


def test_s2a_mean_shape_predicts_mean_scores():
    rng = np.random.default_rng(8)
    betas = rng.normal(size=(200, 3)) * 0.4
    w = rng.normal(size=(3, 5))
    scores = np.clip(3.0 + betas @ w * 0.4, 1, 5)
    s2a, _ = _fit_pair(betas, scores)
    pred, _ = predict_attribute_scores(s2a, betas.mean(axis=0))
    assert np.abs(pred - scores.mean(axis=0)).max() < 0.15


def test_roundtrip_beats_mean_shape_baseline():
    rng = np.random.default_rng(21)
    n, num_b, num_a = 300, 4, 8
    betas = rng.normal(size=(n, num_b)) * 0.5
    w = rng.normal(size=(num_b, num_a))
    scores = np.clip(3.0 + 0.6 * betas @ w + 0.02 * rng.normal(size=(n, num_a)), 1, 5)
    train, test = slice(0, 240), slice(240, 300)
    s2a, a2s = _fit_pair(betas[train], scores[train])
    mean_shape = betas[train].mean(axis=0)
    wins = 0
    for i in range(240, 300):
        pred_scores, _ = predict_attribute_scores(s2a, betas[i])
        beta_hat = apply_mapper(a2s, pred_scores)
        if np.linalg.norm(betas[i] - beta_hat) < np.linalg.norm(betas[i] - mean_shape):
            wins += 1
    assert wins >= 0.9 * 60


# ---------------------------------------------------------------------------
# serialization


def test_serialization_bit_exact(tmp_path):
    spec = variant_spec("AHC2S", attribute_count=3)
    x, y, _ = _synthetic_exact(spec, 80, seed=9, out_dim=4)
    mapper = fit_mapper(x, y, spec, ridge=1e-6, attribute_names=("a", "b", "c"))
    save_mapper(mapper, tmp_path / "m")
    loaded = load_mapper(tmp_path / "m")
    assert np.array_equal(loaded.weights, mapper.weights)
    p1 = apply_mapper(mapper, x)
    p2 = apply_mapper(loaded, x)
    assert np.array_equal(p1, p2)  # bit-for-bit
    assert loaded.spec == mapper.spec
    assert loaded.attribute_names == ("a", "b", "c")


def test_mapper_jacobian_matches_fd():
    spec = variant_spec("AHW2S", attribute_count=2)
    x, y, _ = _synthetic_exact(spec, 60, seed=13, out_dim=3)
    mapper = fit_mapper(x, y, spec, ridge=0.0)
    x0 = x[7]
    jac = mapper_jacobian(mapper, x0)
    eps = 1e-6
    for k in range(len(x0)):
        e = np.zeros(len(x0))
        e[k] = eps
        fd = (apply_mapper(mapper, x0 + e) - apply_mapper(mapper, x0 - e)) / (2 * eps)
        assert np.abs(fd - jac[:, k]).max() < 1e-5 * max(1.0, np.abs(fd).max())
