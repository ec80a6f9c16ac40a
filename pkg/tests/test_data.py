import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypergrad.data import (
    DataError,
    Dataset,
    SyntheticSpec,
    compute_stats,
    generate_synthetic,
    load_csv,
    loo_downdate,
    loo_update,
    save_csv,
    spectral_radius,
)

from oracles import naive_stats


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestCsv:
    def test_parse(self, tmp_path):
        d = load_csv(_write(tmp_path, "1,0,3\n0,1,5"))
        np.testing.assert_array_equal(d.inputs, [[1, 0], [0, 1]])
        np.testing.assert_array_equal(d.labels, [3, 5])

    def test_header(self, tmp_path):
        d = load_csv(_write(tmp_path, "a,b,y\n1,0,3\n0,1,5\n"), header=True)
        assert d.n_samples == 2

    def test_bad_field_reports_line(self, tmp_path):
        with pytest.raises(DataError, match="line 1"):
            load_csv(_write(tmp_path, "1,a,3\n0,1,5\n"))

    def test_inconsistent_width(self, tmp_path):
        with pytest.raises(DataError, match="line 2"):
            load_csv(_write(tmp_path, "1,0,3\n0,1\n"))

    def test_empty(self, tmp_path):
        with pytest.raises(DataError, match="empty"):
            load_csv(_write(tmp_path, ""))

    def test_round_trip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(3)
        d = Dataset(rng.standard_normal((7, 3)), rng.standard_normal(7))
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        save_csv(d, a)
        d2 = load_csv(a)
        np.testing.assert_array_equal(d2.inputs, d.inputs)
        np.testing.assert_array_equal(d2.labels, d.labels)
        save_csv(d2, b)
        assert a.read_bytes() == b.read_bytes()


class TestDataset:
    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            Dataset(np.zeros((3, 2)), np.zeros(2))

    def test_non_finite(self):
        with pytest.raises(DataError):
            Dataset(np.array([[1.0], [np.nan]]), np.zeros(2))

    def test_too_small(self):
        with pytest.raises(DataError):
            Dataset(np.zeros((1, 2)), np.zeros(1))


class TestSynthetic:
    def test_default_shapes(self):
        tr, te, w = generate_synthetic(SyntheticSpec(seed=5))
        assert tr.inputs.shape == (200, 100)
        assert te.inputs.shape == (2000, 100)
        assert w.shape == (100,)
        assert np.count_nonzero(w) == 10

    def test_deterministic(self):
        a = generate_synthetic(SyntheticSpec(dim=20, sparsity=3, n_train=30, n_test=10, seed=9))
        b = generate_synthetic(SyntheticSpec(dim=20, sparsity=3, n_train=30, n_test=10, seed=9))
        for u, v in zip(a[:2], b[:2]):
            assert u.inputs.tobytes() == v.inputs.tobytes()
            assert u.labels.tobytes() == v.labels.tobytes()
        assert a[2].tobytes() == b[2].tobytes()

    def test_noiseless(self):
        tr, te, w = generate_synthetic(SyntheticSpec(dim=8, sparsity=2, n_train=20, n_test=5, snr=np.inf, seed=1))
        np.testing.assert_array_equal(tr.labels, tr.inputs @ w)

    def test_empirical_snr(self):
        tr, _, w = generate_synthetic(SyntheticSpec(dim=20, sparsity=5, n_train=100_000, n_test=2, snr=0.3, seed=2))
        signal = tr.inputs @ w
        noise = tr.labels - signal
        assert abs(signal.var() / noise.var() / 0.3 - 1) < 0.05

    @pytest.mark.parametrize("kw", [dict(sparsity=11, dim=10), dict(n_train=1), dict(snr=0.0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SyntheticSpec(**kw)


class TestStats:
    def test_two_samples(self):
        s = compute_stats(Dataset([[1, 0], [0, 1]], [3, 5]))
        np.testing.assert_array_equal(s.phi, 0.5 * np.eye(2))
        np.testing.assert_array_equal(s.r, [1.5, 2.5])
        assert s.count == 2

    def test_single_sample_downdate(self):
        # N=2 downdated by one sample leaves the other one: phi = x x^T, r = y x
        s = compute_stats(Dataset([[1, 0], [0, 1]], [3, 5]))
        d = loo_downdate(s, np.array([1.0, 0.0]), 3.0)
        np.testing.assert_array_equal(d.phi, np.diag([0.0, 1.0]))
        np.testing.assert_array_equal(d.r, [0.0, 5.0])
        assert d.count == 1

    def test_matches_naive(self):
        rng = np.random.default_rng(0)
        x, y = rng.standard_normal((50, 20)), rng.standard_normal(50)
        s = compute_stats(Dataset(x, y))
        phi, r = naive_stats(x, y)
        assert np.max(np.abs(s.phi - phi)) <= 1e-13 * np.max(np.abs(phi))
        assert np.max(np.abs(s.r - r)) <= 1e-13 * np.max(np.abs(r))

    def test_downdate_matches_recompute(self):
        rng = np.random.default_rng(1)
        x, y = rng.standard_normal((30, 10)), rng.standard_normal(30)
        s = compute_stats(Dataset(x, y))
        for j in range(30):
            d = loo_downdate(s, x[j], y[j])
            ref = compute_stats(Dataset(np.delete(x, j, 0), np.delete(y, j)))
            assert np.linalg.norm(d.phi - ref.phi) <= 1e-12 * np.linalg.norm(ref.phi)
            assert np.linalg.norm(d.r - ref.r) <= 1e-12 * np.linalg.norm(ref.r)

    def test_update_inverts_downdate(self):
        rng = np.random.default_rng(2)
        x, y = rng.standard_normal((12, 4)), rng.standard_normal(12)
        s = compute_stats(Dataset(x, y))
        back = loo_update(loo_downdate(s, x[3], y[3]), x[3], y[3])
        np.testing.assert_allclose(back.phi, s.phi, rtol=0, atol=1e-12)
        np.testing.assert_allclose(back.r, s.r, rtol=0, atol=1e-12)
        assert back.count == s.count

    def test_downdate_needs_two(self):
        s = compute_stats(Dataset([[1.0], [2.0]], [1, 2]))
        one = loo_downdate(s, [1.0], 1.0)
        with pytest.raises(DataError):
            loo_downdate(one, [2.0], 2.0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 15), st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_phi_psd(self, n, p, seed):
        rng = np.random.default_rng(seed)
        s = compute_stats(Dataset(rng.standard_normal((n, p)), rng.standard_normal(n)))
        ev = np.linalg.eigvalsh(s.phi)
        assert ev.min() >= -1e-10 * max(ev.max(), 1e-300)
        np.testing.assert_array_equal(s.phi, s.phi.T)


class TestSpectralRadius:
    def test_identity(self):
        assert spectral_radius(np.eye(3)) == pytest.approx(1.0, rel=1e-12)

    def test_diag(self):
        assert spectral_radius(np.diag([4.0, 1.0, 0.0])) == pytest.approx(4.0, rel=1e-6)

    def test_matches_eigh(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((10, 10))
        phi = x.T @ x
        ref = np.linalg.eigvalsh(phi).max()
        assert abs(spectral_radius(phi, tol=1e-13) - ref) <= 1e-8 * ref

    def test_ones_in_null_space(self):
        phi = np.array([[1.0, -1.0], [-1.0, 1.0]])
        assert spectral_radius(phi) == pytest.approx(2.0, rel=1e-6)

    def test_zero(self):
        with pytest.raises(ValueError):
            spectral_radius(np.zeros((2, 2)))
