"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines live.
Tolerances are pinned here and must not be loosened.
"""

import tempfile
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from anthrokit import oracles as pkg_oracles
from anthrokit.curation import balance_sample, make_synthetic_sites, match_identities
from anthrokit.fitting import FitConfig, FitTargets, fit_shape, loss_gradient, target_loss
from anthrokit.fixture import (
    capsule_person,
    icosphere,
    ngon_prism,
    sample_betas,
    synthetic_population,
    unit_cube,
)
from anthrokit.mappers import (
    apply_mapper,
    fit_mapper,
    poly_features,
    transform_raw,
    variant_input_rows,
    variant_spec,
)
from anthrokit.measurements import (
    circumference,
    measure,
    measure_gradients,
    signed_volume,
    weight,
)
from anthrokit.metrics import build_point_regressor, p2p_error, s2a_accuracy
from anthrokit.sampling import CounterRng
from golden_pipeline import GOLDEN_DIR, GOLDEN_FILES, run_pipeline
from oracles import central_difference, voxel_count_volume


@contextmanager
def criterion(name: str, budget_s: float | None = None):
    info: dict = {}
    start = time.perf_counter()
    try:
        yield info
    except BaseException:
        print(f"[FAIL] {name}")
        raise
    elapsed = time.perf_counter() - start
    detail = " ".join(f"{k}={v}" for k, v in info.items())
    print(f"[PASS] {name} ({elapsed:.1f}s) {detail}")
    if budget_s is not None:
        assert elapsed < budget_s, f"{name} exceeded runtime budget {budget_s}s"


@pytest.fixture(scope="module")
def capsule():
    return capsule_person()


def test_volume_weight_oracle(capsule):
    with criterion("volume-weight-oracle", budget_s=10.0) as info:
        cube, _ = unit_cube()
        assert weight(cube) == pytest.approx(985.0, abs=1e-9)

        worst_sphere = 0.0
        for subdiv in (4, 5):
            sph = icosphere(0.5, subdiv)
            analytic = 4.0 / 3.0 * np.pi * 0.5**3
            rel = abs(signed_volume(sph) - analytic) / analytic
            worst_sphere = max(worst_sphere, rel)
            assert rel < 0.005
        info["sphere_rel_err"] = f"{worst_sphere:.2e}"

        mesh = capsule.template
        voxel = voxel_count_volume(mesh.vertices, mesh.triangles, resolution=256)
        exact = signed_volume(mesh)
        rel = abs(voxel - exact) / exact
        info["voxel_rel_err"] = f"{rel:.2e}"
        assert rel < 0.01


def test_circumference_oracle(capsule):
    with criterion("circumference-oracle", budget_s=5.0) as info:
        prism, mid = ngon_prism(64, 0.15, 1.0)
        analytic = 2 * 64 * 0.15 * np.sin(np.pi / 64)
        got = circumference(prism, mid)
        assert got == pytest.approx(analytic, abs=1e-9)
        info["prism_err"] = f"{abs(got - analytic):.2e}"

        mesh = capsule.template
        worst = 0.0
        lm = capsule.landmarks
        for idx in (lm.chest, lm.waist, lm.hip):
            h = float(mesh.vertices[idx, 1])
            hull = circumference(mesh, idx)
            oracle = pkg_oracles.support_sampled_perimeter(mesh, h, 4096)
            worst = max(worst, abs(hull - oracle))
            assert abs(hull - oracle) < 1e-6
        info["slice_err_m"] = f"{worst:.2e}"


def test_gradient_suite(capsule):
    with criterion("gradient-suite", budget_s=30.0) as info:
        pop = synthetic_population(capsule, 50, seed=91)
        s2a = fit_mapper(pop.table.betas, pop.table.attributes,
                         variant_spec("S2A", beta_count=capsule.num_betas), ridge=1e-8,
                         output_kind="attribute_scores")
        m0 = measure(capsule, np.zeros(capsule.num_betas))
        targets = FitTargets(attributes=np.full(15, 3.1), height=m0.height * 1.02,
                             chest=m0.chest_circ * 1.05, waist=m0.waist_circ * 0.97,
                             hip=m0.hip_circ * 1.01)

        betas = sample_betas(20, capsule.num_betas, CounterRng(321))
        fields = ("height", "weight", "chest_circ", "waist_circ", "hip_circ")
        flagged = 0
        total_checks = 0
        worst_rel = 0.0
        for beta in betas:
            grads = measure_gradients(capsule, beta)
            mat = grads.as_matrix()
            for row, name in enumerate(fields):
                total_checks += 1
                if grads.non_smooth.get(name, False):
                    flagged += 1
                    continue
                fd = central_difference(
                    lambda x, n=name: getattr(measure(capsule, x), n), beta, eps=1e-5)
                rel = np.abs(fd - mat[row]).max() / max(np.abs(fd).max(), 1e-9)
                worst_rel = max(worst_rel, rel)
                assert rel < 1e-5, (name, beta)

            g, non_smooth = loss_gradient(capsule, s2a, beta, targets)
            total_checks += 1
            if non_smooth:
                flagged += 1
                continue
            fd = central_difference(
                lambda x: target_loss(capsule, s2a, x, targets)[0], beta, eps=1e-5)
            rel = np.abs(g - fd).max() / max(np.abs(fd).max(), 1e-9)
            worst_rel = max(worst_rel, rel)
            assert rel < 1e-5

        assert flagged < 0.10 * total_checks
        info["worst_rel"] = f"{worst_rel:.2e}"
        info["flagged"] = f"{flagged}/{total_checks}"


def test_polynomial_recovery():
    with criterion("polynomial-recovery") as info:
        spec = variant_spec("AHWC2S", attribute_count=4)
        rng = np.random.default_rng(0)
        x = np.concatenate([
            rng.uniform(1, 5, size=(140, 4)),
            rng.uniform(1.4, 2.0, size=(140, 1)),
            rng.uniform(45, 110, size=(140, 1)),
            rng.uniform(0.6, 1.4, size=(140, 3)),
        ], axis=1)
        w_true = rng.normal(size=(spec.num_poly_features, 5))
        y = poly_features(transform_raw(spec, x), 2) @ w_true
        mapper = fit_mapper(x, y, spec, ridge=0.0)
        err = np.abs(apply_mapper(mapper, x) - y).max()
        info["recovery_err"] = f"{err:.2e}"
        assert err < 1e-8

        pairs = (("H2S", "AH2S"), ("HW2S", "AHW2S"), ("C2S", "AC2S"), ("HWC2S", "AHWC2S"))
        for pop_seed in range(100):
            prng = np.random.default_rng(pop_seed)
            n, num_attr = 120, 4
            attrs = prng.uniform(1, 5, size=(n, num_attr))
            meas = np.stack([
                prng.uniform(1.4, 2.0, n), prng.uniform(45, 110, n),
                prng.uniform(0.7, 1.3, n), prng.uniform(0.6, 1.2, n),
                prng.uniform(0.8, 1.4, n),
            ], axis=1)
            betas = prng.normal(size=(n, 3))
            for plain_name, pref_name in pairs:
                plain = variant_spec(plain_name)
                pref = variant_spec(pref_name, attribute_count=num_attr)
                xp = variant_input_rows(plain, meas, attrs, None)
                xa = variant_input_rows(pref, meas, attrs, None)
                rp = np.sum((apply_mapper(fit_mapper(xp, betas, plain, ridge=0.0), xp)
                             - betas) ** 2)
                ra = np.sum((apply_mapper(fit_mapper(xa, betas, pref, ridge=0.0), xa)
                             - betas) ** 2)
                assert ra <= rp + 1e-9, (pop_seed, pref_name)
        info["populations"] = 100


def test_inverse_fitting(capsule):
    with criterion("inverse-fitting", budget_s=60.0) as info:
        betas = sample_betas(50, capsule.num_betas, CounterRng(777))
        config = FitConfig(max_iters=200)
        successes = 0
        for beta_star in betas:
            m = measure(capsule, beta_star)
            targets = FitTargets(height=m.height, chest=m.chest_circ,
                                 waist=m.waist_circ, hip=m.hip_circ,
                                 w_regularizer=0.0)
            res = fit_shape(capsule, None, targets, config)
            diffs = np.diff(res.loss_trace)
            assert (diffs <= 1e-15).all(), "accepted loss must be non-increasing"
            m_fit = measure(capsule, res.beta)
            resid = max(abs(m_fit.height - m.height), abs(m_fit.chest_circ - m.chest_circ),
                        abs(m_fit.waist_circ - m.waist_circ), abs(m_fit.hip_circ - m.hip_circ))
            if resid < 1e-6 and res.iterations <= 200:
                successes += 1
        info["successes"] = f"{successes}/50"
        assert successes >= 0.95 * 50


def test_p2p_suite(capsule):
    with criterion("p2p-suite") as info:
        mesh = capsule.template
        reg = build_point_regressor(mesh, 20000, seed=11)
        v = mesh.vertices
        assert p2p_error(reg, v, reg, v) == 0.0

        moved = v + np.array([3.7, -12.0, 0.9])
        t_err = p2p_error(reg, v, reg, moved)
        info["translated_mm"] = f"{t_err:.1e}"
        assert t_err <= 1e-9  # exactly zero up to float rounding

        sph = icosphere(0.5, 4)
        sreg = build_point_regressor(sph, 20000, seed=12)
        normals = sph.vertices / np.linalg.norm(sph.vertices, axis=1, keepdims=True)
        err = p2p_error(sreg, sph.vertices, sreg, sph.vertices + 0.001 * normals)
        info["radial_mm"] = f"{err:.4f}"
        assert abs(err - 1.0) < 0.01

        r2 = build_point_regressor(mesh, 20000, seed=11)
        assert np.array_equal(reg.weights, r2.weights)
        assert np.array_equal(reg.vertex_ids, r2.vertex_ids)

        tri_lookup = {tuple(t): i for i, t in enumerate(mesh.triangles.tolist())}
        tri_of_point = np.array([tri_lookup[tuple(r)] for r in reg.vertex_ids.tolist()])
        areas = mesh.triangle_areas()
        groups = np.array_split(np.argsort(-areas), 150)
        observed = np.array([np.isin(tri_of_point, g).sum() for g in groups])
        expected = np.array([areas[g].sum() for g in groups])
        expected = expected / expected.sum() * observed.sum()
        _, p = stats.chisquare(observed, expected)
        info["chi2_p"] = f"{p:.3f}"
        assert p > 0.01


def test_metric_constants():
    with criterion("metric-constants") as info:
        rng = np.random.default_rng(5)
        n = 100_000
        pred = rng.uniform(1, 5, size=(n, 1))
        gt = rng.integers(1, 6, size=(n, 1)).astype(float)
        acc = s2a_accuracy(pred, gt).overall_accuracy
        info["random_guess_acc"] = f"{acc:.4f}"
        assert abs(acc - 0.20) < 0.03


def test_identity_matching():
    with criterion("identity-matching") as info:
        site_a, site_b, expected = make_synthetic_sites(50, 50, seed=13)
        rep = match_identities(site_a, site_b, tau=0.3)
        got = {(q, t) for q, t, _ in rep.matches}
        exp = set(expected)
        precision = len(got & exp) / max(len(got), 1)
        recall = len(got & exp) / len(exp)
        info["precision"] = precision
        info["recall"] = recall
        assert precision == 1.0 and recall == 1.0

        sizes = [len(match_identities(site_a, site_b, tau=tau).matches)
                 for tau in (0.05, 0.15, 0.3, 0.45, 0.6, 0.75, 0.9)]
        info["tau_sweep"] = sizes
        assert all(a >= b for a, b in zip(sizes, sizes[1:]))


def test_curation_property():
    with criterion("curation-property") as info:
        from anthrokit.curation import SubjectRecord

        worst = 0
        for pop_seed in range(1000):
            rng = np.random.default_rng(pop_seed)
            n = int(rng.integers(1, 80))
            recs = [SubjectRecord(f"s{i}", "f",
                                  height_m=float(rng.uniform(1.4, 2.0)),
                                  weight_kg=float(rng.uniform(45, 120)))
                    for i in range(n)]
            selected, _ = balance_sample(recs, cap=3, seed=pop_seed)
            bins: dict[tuple[int, int], int] = {}
            by_id = {r.subject_id: r for r in recs}
            for sid in selected:
                r = by_id[sid]
                key = (int(np.floor(r.height_m / 0.05)), int(np.floor(r.weight_kg / 5.0)))
                bins[key] = bins.get(key, 0) + 1
            if bins:
                worst = max(worst, max(bins.values()))
            assert not bins or max(bins.values()) <= 3
            if pop_seed < 5:
                again, _ = balance_sample(recs, cap=3, seed=pop_seed)
                assert again == selected
        info["worst_bin"] = worst
        info["populations"] = 1000


def test_end_to_end_golden_run():
    with criterion("end-to-end-golden-run") as info:
        assert GOLDEN_DIR.is_dir(), "golden files missing; run tests/golden_pipeline.py"
        with tempfile.TemporaryDirectory() as tmp:
            run_pipeline(Path(tmp))
            mismatches = []
            for name in GOLDEN_FILES:
                fresh = (Path(tmp) / name).read_bytes()
                golden = (GOLDEN_DIR / name).read_bytes()
                if fresh != golden:
                    mismatches.append(name)
            info["files"] = len(GOLDEN_FILES)
            assert not mismatches, f"golden mismatch: {mismatches}"
