import numpy as np
import pytest

from repsim.errors import (
    AlignmentError,
    DegenerateInputError,
    DegenerateVarianceError,
    InvalidInputError,
)
from repsim.similarity import (
    Heatmap,
    Provenance,
    RepresentationMatrix,
    build_heatmap,
    canonical_correlations,
    compute_similarity,
    lincka,
    pool_frames,
    pooled_indices,
    svcca,
)


def rep(data, **prov):
    provenance = Provenance(**prov) if prov else None
    return RepresentationMatrix(data=np.asarray(data, dtype=np.float64), provenance=provenance)


def random_rep(seed, n=200, d=6):
    return rep(np.random.default_rng(seed).normal(size=(n, d)))


def random_orthogonal(rng, d):
    q, r = np.linalg.qr(rng.normal(size=(d, d)))
    return q * np.sign(np.diag(r))


class TestPooling:
    def test_no_subsampling_preserves_order(self):
        mats = [np.full((5, 3), i, dtype=float) for i in range(3)]
        out = pool_frames(mats, max_frames=100, seed=0)
        assert out.data.shape == (15, 3)
        assert np.array_equal(out.data, np.concatenate(mats))

    def test_indices_deterministic(self):
        i1 = pooled_indices(1000, 10, seed=5)
        i2 = pooled_indices(1000, 10, seed=5)
        assert np.array_equal(i1, i2)
        assert len(i1) == 10
        assert np.all(np.diff(i1) > 0)

    def test_same_seed_aligns_two_models(self):
        rng = np.random.default_rng(0)
        a = [rng.normal(size=(40, 4)) for _ in range(5)]
        b = [x * 2.0 for x in a]
        ra = pool_frames(a, max_frames=50, seed=9)
        rb = pool_frames(b, max_frames=50, seed=9)
        assert np.array_equal(rb.data, 2.0 * ra.data)

    def test_empty_rejected(self):
        with pytest.raises(DegenerateInputError):
            pool_frames([], max_frames=10, seed=0)


class TestLincka:
    def test_self_similarity(self):
        x = random_rep(0)
        assert abs(lincka(x, x).value - 1.0) < 1e-9

    def test_orthogonal_invariance(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(300, 8))
        q = random_orthogonal(rng, 8)
        s = lincka(rep(x), rep(x @ q))
        assert abs(s.value - 1.0) < 1e-9

    def test_isotropic_scaling_invariance(self):
        x = random_rep(2)
        y = rep(x.data * 7.3)
        assert abs(lincka(x, y).value - 1.0) < 1e-9

    def test_hand_value(self):
        x = rep([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        y = rep([[1.0], [-1.0], [1.0], [-1.0]])
        assert abs(lincka(x, y).value - 1.0 / np.sqrt(2.0)) < 1e-9

    def test_gram_hsic_oracle(self):
        # independent route: centered-Gram HSIC normalization
        rng = np.random.default_rng(3)
        x = rng.normal(size=(60, 5))
        y = rng.normal(size=(60, 7)) + 0.5 * x[:, :1]
        n = x.shape[0]
        h = np.eye(n) - np.ones((n, n)) / n
        k = h @ (x @ x.T) @ h
        l = h @ (y @ y.T) @ h
        hsic = lambda a, b: float(np.trace(a @ b))
        oracle = hsic(k, l) / np.sqrt(hsic(k, k) * hsic(l, l))
        mine = lincka(rep(x), rep(y)).value
        assert abs(mine - oracle) < 1e-10

    def test_symmetry(self):
        x, y = random_rep(4), random_rep(5)
        assert abs(lincka(x, y).value - lincka(y, x).value) < 1e-9

    def test_zero_variance_rejected(self):
        x = rep(np.ones((10, 3)))
        with pytest.raises(DegenerateVarianceError):
            lincka(x, x)

    def test_row_mismatch(self):
        with pytest.raises(AlignmentError):
            lincka(random_rep(0, n=10), random_rep(1, n=11))

    def test_provenance_mismatch(self):
        a = rep(np.random.default_rng(0).normal(size=(10, 2)),
                model="a", checkpoint_id="c", manifest_id="m1", pool_seed=1)
        b = rep(np.random.default_rng(1).normal(size=(10, 2)),
                model="b", checkpoint_id="c", manifest_id="m2", pool_seed=1)
        with pytest.raises(AlignmentError):
            lincka(a, b)


class TestSvcca:
    def test_self_similarity(self):
        # each canonical correlation carries a bias of about ridge, so the
        # 1e-6 check runs at a ridge safely under it
        x = random_rep(0, n=300, d=8)
        assert abs(svcca(x, x, ridge=1e-8).value - 1.0) < 1e-6

    def test_self_similarity_default_ridge_bias_is_ridge_sized(self):
        x = random_rep(0, n=300, d=8)
        assert abs(svcca(x, x).value - 1.0) < 5e-6

    def test_self_similarity_exact_without_ridge(self):
        x = random_rep(0, n=300, d=8)
        assert abs(svcca(x, x, ridge=0.0).value - 1.0) < 1e-9

    def test_invertible_invariance(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(500, 8))
        a = rng.normal(size=(8, 8)) + 3 * np.eye(8)
        s = svcca(rep(x), rep(x @ a), variance_keep=1.0, ridge=0.0)
        assert abs(s.value - 1.0) < 1e-5

    def test_independent_gaussians_low(self):
        rng = np.random.default_rng(7)
        x = rep(rng.normal(size=(2000, 10)))
        y = rep(rng.normal(size=(2000, 10)))
        value = svcca(x, y).value
        assert value < 0.25

    def test_matches_generalized_eig_oracle(self):
        # direct CCA route: eigенvalues of the generalized problem
        scipy_linalg = pytest.importorskip("scipy.linalg")
        rng = np.random.default_rng(8)
        for trial in range(20):
            n, dx, dy = 100, rng.integers(2, 8), rng.integers(2, 8)
            x = rng.normal(size=(n, dx))
            y = rng.normal(size=(n, dy))
            y[:, 0] += x[:, 0]
            xc = x - x.mean(0)
            yc = y - y.mean(0)
            ridge = 1e-6
            rho = canonical_correlations(xc, yc, ridge=ridge)
            sxx = xc.T @ xc / (n - 1) + ridge * np.eye(dx)
            syy = yc.T @ yc / (n - 1) + ridge * np.eye(dy)
            sxy = xc.T @ yc / (n - 1)
            m = sxy @ np.linalg.solve(syy, sxy.T)
            w = scipy_linalg.eigh(m, sxx, eigvals_only=True)
            oracle = np.sqrt(np.clip(w[::-1][: min(dx, dy)], 0.0, 1.0))
            assert np.allclose(rho[: min(dx, dy)], oracle, atol=1e-6)

    def test_variance_keep_truncates(self):
        rng = np.random.default_rng(9)
        base = rng.normal(size=(400, 2))
        x = np.concatenate([base * 100, rng.normal(size=(400, 4)) * 0.01], axis=1)
        s = svcca(rep(x), rep(x[:, :2] @ rng.normal(size=(2, 3))), variance_keep=0.99)
        assert s.value > 0.99

    def test_invalid_variance_keep(self):
        x = random_rep(0)
        with pytest.raises(InvalidInputError):
            svcca(x, x, variance_keep=0.0)

    def test_symmetry(self):
        x, y = random_rep(10, n=300), random_rep(11, n=300)
        assert abs(svcca(x, y).value - svcca(y, x).value) < 1e-9


def test_similarity_range_property():
    rng = np.random.default_rng(12)
    for _ in range(1000):
        n, d1, d2 = 20, int(rng.integers(2, 4)), int(rng.integers(2, 4))
        x = rep(rng.normal(size=(n, d1)))
        y = rep(rng.normal(size=(n, d2)))
        for measure in ("lincka", "svcca"):
            v = compute_similarity(x, y, measure).value
            assert -1e-9 <= v <= 1.0 + 1e-9


class TestHeatmap:
    def test_two_models(self):
        x, y = random_rep(0), random_rep(1)
        hm = build_heatmap([("a", x), ("b", y)])
        hm.check()
        assert hm.values.shape == (2, 2)
        assert np.allclose(np.diag(hm.values), 1.0, atol=1e-6)
        assert hm.values[0, 1] == hm.values[1, 0]

    def test_permutation_consistency(self):
        reps = [("m0", random_rep(0)), ("m1", random_rep(1)), ("m2", random_rep(2))]
        hm = build_heatmap(reps)
        hm_perm = build_heatmap([reps[2], reps[0], reps[1]])
        order = [2, 0, 1]
        for i in range(3):
            for j in range(3):
                assert hm_perm.values[i, j] == pytest.approx(
                    hm.values[order[i], order[j]], abs=1e-12
                )

    def test_parallel_matches_serial(self):
        reps = [(f"m{i}", random_rep(i)) for i in range(4)]
        serial = build_heatmap(reps)
        parallel = build_heatmap(reps, jobs=2)
        assert np.array_equal(serial.values, parallel.values)

    def test_csv_formatting_fixture(self, tmp_path):
        # fixed similarity-vs-data-scale values rendered at 6 decimals
        fixture = [0.957, 0.940, 0.911, 0.920]
        values = np.eye(4)
        for i, v in enumerate(fixture):
            j = (i + 1) % 4
            values[i, j] = values[j, i] = v
        hm = Heatmap(models=["m1", "m2", "m3", "m4"], values=values, measure="lincka")
        path = tmp_path / "h.csv"
        hm.to_csv(path)
        text = path.read_text()
        for v in fixture:
            assert f"{v:.6f}" in text
        header = text.splitlines()[0].split(",")
        assert header == ["model", "m1", "m2", "m3", "m4"]

    def test_json_roundtrip(self, tmp_path):
        import json

        hm = build_heatmap([("a", random_rep(0)), ("b", random_rep(1))])
        path = tmp_path / "h.json"
        hm.to_json(path, provenance={"seed": 1})
        obj = json.loads(path.read_text())
        assert obj["models"] == ["a", "b"]
        assert obj["provenance"] == {"seed": 1}
        assert obj["values"][0][1] == pytest.approx(hm.values[0, 1], abs=1e-6)

    def test_asymmetric_values_rejected(self):
        bad = np.array([[1.0, 0.5], [0.4, 1.0]])
        hm = Heatmap(models=["a", "b"], values=bad, measure="lincka")
        with pytest.raises(InvalidInputError):
            hm.check()
