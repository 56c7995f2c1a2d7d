import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import direct_eri
from vnet.synth import (
    KernelKind,
    KernelSpec,
    gen_series,
    model_orbitals,
    one_body,
    quadrature_eri,
    quadrature_tensor,
)
from vnet.tensors import Kind, Symmetry, symmetry_error

COULOMB = KernelSpec.soft_coulomb(0.3)
YUKAWA = KernelSpec.yukawa(0.5, 0.3)


class TestKernelSpec:
    def test_parse(self):
        assert KernelSpec.parse("soft_coulomb:0.3") == COULOMB
        assert KernelSpec.parse("soft_coulomb") == COULOMB
        assert KernelSpec.parse("yukawa:0.5,0.3") == YUKAWA
        assert KernelSpec.parse("gaussian:2").kind is KernelKind.GAUSSIAN

    @pytest.mark.parametrize("text", ["coulomb:1", "yukawa", "gaussian:", "soft_coulomb:a", "gaussian:1,2"])
    def test_parse_errors(self, text):
        with pytest.raises(ValueError):
            KernelSpec.parse(text)

    @pytest.mark.parametrize("text", ["soft_coulomb:0", "yukawa:0.5,-1", "yukawa:0", "gaussian:0"])
    def test_nonpositive_parameters(self, text):
        with pytest.raises(ValueError):
            KernelSpec.parse(text)

    def test_label_round_trip(self):
        for k in (COULOMB, YUKAWA, KernelSpec.gaussian(0.7)):
            assert KernelSpec.parse(k.label()) == k

    def test_finite_at_zero(self):
        d = np.array([0.0, 0.5, 5.0])
        assert COULOMB(d)[0] == pytest.approx(1 / 0.3)
        assert np.all(YUKAWA(d) <= COULOMB(d))


class TestOrbitals:
    def test_single_gaussian(self):
        orb = model_orbitals(1, 2.0)
        assert orb.centers[0] == -1.0 and orb.orders[0] == 0
        peak = orb.grid[np.argmax(orb.values[0])]
        assert abs(peak + 1.0) <= orb.grid[1] - orb.grid[0]

    @given(st.integers(1, 8), st.floats(0.5, 3.0))
    def test_normalized(self, n, R):
        S = model_orbitals(n, R).overlap()
        np.testing.assert_allclose(np.diag(S), 1.0, atol=1e-8)

    def test_overlap_falls_with_distance(self):
        s = [model_orbitals(2, R).overlap()[0, 1] for R in (1.0, 1.5, 2.0, 2.5)]
        assert all(a > b for a, b in zip(s, s[1:]))

    def test_layout(self):
        orb = model_orbitals(6, 1.6)
        np.testing.assert_array_equal(orb.orders, [0, 0, 1, 1, 2, 2])
        np.testing.assert_array_equal(orb.centers, [-0.8, 0.8] * 3)
        assert orb.half_length == pytest.approx(8.8)

    @pytest.mark.parametrize("R", [0.49, 3.01])
    def test_range(self, R):
        with pytest.raises(ValueError):
            model_orbitals(2, R)

    def test_min_grid(self):
        with pytest.raises(ValueError):
            model_orbitals(2, 1.0, n_q=32)

    def test_one_body_gaussian(self):
        """Width-1 Gaussian at c: kinetic 1/4, harmonic well (1/2)(1/2 + c^2)."""
        R = 1.4
        h = one_body(model_orbitals(2, R))
        expect = 0.25 + 0.5 * (0.5 + (R / 2) ** 2)
        assert h[0, 0] == pytest.approx(expect, abs=1e-8)
        assert h[1, 1] == pytest.approx(expect, abs=1e-8)
        np.testing.assert_array_equal(h, h.T)


class TestQuadrature:
    def test_matches_direct_double_sum(self):
        orb = model_orbitals(4, 1.3, n_q=96)
        T = quadrature_tensor(orb, YUKAWA)
        for t in [(0, 0, 0, 0), (0, 1, 2, 3), (3, 2, 1, 1), (2, 0, 2, 0)]:
            ref = direct_eri(orb.values, orb.grid, orb.weights, YUKAWA, *t)
            assert T[t] == pytest.approx(ref, rel=1e-12)
            assert quadrature_eri(orb, YUKAWA, *t) == pytest.approx(ref, rel=1e-12)

    def test_locality(self):
        orb = model_orbitals(2, 3.0)
        k = KernelSpec.gaussian(1e-3)
        assert abs(quadrature_eri(orb, k, 0, 0, 1, 1)) < 1e-3
        assert quadrature_eri(orb, k, 0, 0, 1, 1) < 0.02 * quadrature_eri(orb, k, 0, 0, 0, 0)

    @settings(max_examples=10)
    @given(st.integers(1, 5), st.floats(0.5, 3.0))
    def test_eightfold(self, n, R):
        T = quadrature_tensor(model_orbitals(n, R), COULOMB)
        assert symmetry_error(T, Symmetry.EIGHTFOLD) <= 1e-12

    @pytest.mark.parametrize("kernel", [COULOMB, YUKAWA, KernelSpec.gaussian(0.5)])
    def test_grid_convergence(self, kernel):
        for R in (0.5, 1.5, 3.0):
            a = quadrature_tensor(model_orbitals(6, R, 256), kernel)
            b = quadrature_tensor(model_orbitals(6, R, 512), kernel)
            assert np.max(np.abs(a - b)) < 1e-8

    def test_yukawa_below_coulomb_on_diagonal(self):
        orb = model_orbitals(6, 1.8)
        c, y = quadrature_tensor(orb, COULOMB), quadrature_tensor(orb, YUKAWA)
        for p in range(6):
            assert abs(y[p, p, p, p]) <= abs(c[p, p, p, p])

    def test_gaussian_gram_psd(self):
        n = 5
        M = quadrature_tensor(model_orbitals(n, 1.2), KernelSpec.gaussian(0.8)).reshape(n * n, n * n)
        assert np.linalg.eigvalsh(M).min() >= -1e-8


class TestGenSeries:
    def test_structure(self):
        d = gen_series([2.0, 1.0, 1.5], 3)
        assert list(d.bare.geometries) == [1.0, 1.5, 2.0]
        for e in d.bare:
            assert e.two_body.kind is Kind.BARE and e.two_body.symmetry is Symmetry.EIGHTFOLD
            assert symmetry_error(e.two_body.values, Symmetry.EIGHTFOLD) <= 1e-10
        for e in d.effective:
            assert e.two_body.kind is Kind.EFFECTIVE and e.two_body.symmetry is Symmetry.FOURFOLD
            assert e.scalar.value == 0.0
        assert len(d.one_body) == len(d.scalars) == 3
        assert d.bare_kernel == COULOMB and d.eff_kernel == YUKAWA

    def test_identical_kernels(self):
        d = gen_series([1.2, 2.2], 3, COULOMB, COULOMB)
        for b, e in zip(d.bare, d.effective):
            np.testing.assert_array_equal(b.two_body.values, e.two_body.values)

    def test_same_orbitals_both_series(self):
        d = gen_series([1.7], 3, COULOMB, YUKAWA)
        orb = model_orbitals(3, 1.7)
        np.testing.assert_array_equal(d.effective.entries[0].two_body.values, quadrature_tensor(orb, YUKAWA))
        np.testing.assert_array_equal(d.one_body[0].values, one_body(orb))

    def test_deterministic(self):
        a = gen_series([1.1, 2.3], 4)
        b = gen_series([1.1, 2.3], 4)
        assert a.effective.entries[1].two_body.values.tobytes() == b.effective.entries[1].two_body.values.tobytes()

    def test_rejections(self):
        with pytest.raises(ValueError):
            gen_series([1.0, 1.0], 2)
        with pytest.raises(ValueError):
            gen_series([], 2)
        with pytest.raises(ValueError):
            gen_series([0.2], 2)
