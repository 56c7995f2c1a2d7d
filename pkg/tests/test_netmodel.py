import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import EIGHT, _apply, naive_element, naive_mlp
from vnet import mlp
from vnet.netmodel import (
    KernelMatrix,
    MissingKernelError,
    ModelConfig,
    Phase,
    PHASE_GAMMAS,
    VNetModel,
    encode_input,
    eval_batch,
    eval_element,
    eval_tensor,
    init_model,
    init_params,
    orbital_forward,
    param_count,
    with_effective_kernel,
)
from vnet.tensors import IndexMask, Symmetry, canonical_key, canonical_unit, symmetry_error, symmetry_orbit

SMALL = ModelConfig(3, ell=8, hidden=10, depth=3)


def noisy_model(config, seed, scale=0.3):
    """Initialized model with every array (biases included) perturbed, plus a W^D."""
    rng = np.random.default_rng(seed + 1000)
    model = with_effective_kernel(init_model(config, seed))
    p = {k: v + scale * rng.standard_normal(v.shape) for k, v in model.params().items()}
    return VNetModel.from_params(config, p)


class TestEncodeInput:
    def test_examples(self):
        np.testing.assert_array_equal(encode_input(0, 1.0, 0, 3), [1.0, 0, 1, 0, 0])
        np.testing.assert_array_equal(encode_input(2, 1.45, 1, 3), [1.45, 1, 0, 0, 1])

    @given(st.integers(1, 9), st.data(), st.floats(0.5, 3.0), st.sampled_from([0, 1]))
    def test_one_hot(self, n, data, R, gamma):
        i = data.draw(st.integers(0, n - 1))
        x = encode_input(i, R, gamma, n)
        assert len(x) == n + 2
        assert x[2:].sum() == 1.0 and x[2 + i] == 1.0

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            encode_input(3, 1.0, 0, 3)
        with pytest.raises(IndexError):
            encode_input(-1, 1.0, 0, 3)


class TestSilu:
    def test_values(self):
        assert mlp.silu(0.0) == 0.0
        assert mlp.silu(1.0) == pytest.approx(0.7310585786300049, abs=1e-15)
        assert mlp.silu(60.0) == pytest.approx(60.0, rel=1e-15)

    def test_saturates_without_warnings(self):
        with np.errstate(all="raise"):
            out = mlp.silu(np.array([-1000.0, 1000.0]))
        assert out[0] == pytest.approx(0.0, abs=1e-300) and out[1] == 1000.0

    @given(st.floats(-30, 30))
    def test_derivative(self, x):
        h = 1e-6
        num = (mlp.silu(x + h) - mlp.silu(x - h)) / (2 * h)
        assert mlp.silu_grad(x) == pytest.approx(num, abs=1e-7)


class TestOrbitalForward:
    def test_zero_parameters(self):
        theta, _ = init_params(SMALL, 0)
        zero = {k: np.zeros_like(v) for k, v in theta.items()}
        np.testing.assert_array_equal(orbital_forward(zero, encode_input(1, 2.0, 1, 3)), np.zeros(8))

    def test_two_layer_affine(self):
        """With L=2 the network is W2^T silu(W1^T x + b1) + b2."""
        cfg = ModelConfig(4, ell=5, hidden=7, depth=2)
        rng = np.random.default_rng(3)
        theta = {k: rng.standard_normal(v.shape) for k, v in init_params(cfg, 0)[0].items()}
        x = encode_input(2, 1.3, 1, 4)
        z = x @ theta["W1"] + theta["b1"]
        expect = (z / (1 + np.exp(-z))) @ theta["W2"] + theta["b2"]
        np.testing.assert_allclose(orbital_forward(theta, x), expect, rtol=0, atol=1e-14)

    def test_matches_naive_loops(self):
        rng = np.random.default_rng(7)
        cfg = ModelConfig(5, ell=6, hidden=9, depth=4)
        for trial in range(5):
            theta = {k: rng.standard_normal(v.shape) * 0.5
                     for k, v in init_params(cfg, trial)[0].items()}
            x = encode_input(int(rng.integers(5)), rng.uniform(0.8, 2.5), int(rng.integers(2)), 5)
            np.testing.assert_allclose(orbital_forward(theta, x), naive_mlp(theta, x),
                                       rtol=0, atol=1e-14)

    def test_batched_equals_single(self):
        theta, _ = init_params(SMALL, 1)
        X = np.array([encode_input(i, 1.0 + 0.1 * i, i % 2, 3) for i in range(3)])
        batch = orbital_forward(theta, X)
        for i in range(3):
            np.testing.assert_allclose(batch[i], orbital_forward(theta, X[i]), rtol=0, atol=1e-15)

    def test_shape_mismatch(self):
        theta, _ = init_params(SMALL, 0)
        with pytest.raises(ValueError):
            orbital_forward(theta, np.zeros(7))


class TestEvalElement:
    def test_zero_kernel(self):
        model = init_model(SMALL, 0)
        zero = VNetModel(SMALL, model.theta, KernelMatrix(np.zeros_like(model.kernel_bare.packed)))
        keys = list(itertools.product(range(3), repeat=4))
        np.testing.assert_array_equal(eval_batch(zero, Phase.BARE, [1.2], keys), 0.0)

    def test_hand_contraction(self):
        """phi_0=[1,1], phi_1=[1,2], phi_2=[3,1] so (01|02) pairs u=[1,2], v=[3,1]; W=diag(1,2) gives 7."""
        cfg = ModelConfig(3, ell=2, hidden=3, depth=2)
        W1 = np.zeros((5, 3))
        W1[2:, :] = 50.0 * np.eye(3)  # silu(50) == 50 in double precision
        Phi = np.array([[1.0, 1.0], [1.0, 2.0], [3.0, 1.0]])
        theta = {"W1": W1, "b1": np.zeros(3), "W2": Phi / 50.0, "b2": np.zeros(2)}
        model = VNetModel(cfg, theta, KernelMatrix.from_matrix(np.diag([1.0, 2.0])))
        assert eval_element(model, Phase.BARE, 0, 1, 0, 2, 1.7) == pytest.approx(7.0, abs=1e-12)

    def test_matches_naive(self):
        model = noisy_model(SMALL, 4)
        rng = np.random.default_rng(0)
        for _ in range(10):
            t = tuple(int(v) for v in rng.integers(0, 3, 4))
            R = float(rng.uniform(0.8, 2.5))
            for phase in Phase:
                ref = naive_element(model.theta, model.kernel(phase).matrix(), *t, R,
                                    PHASE_GAMMAS[phase], 3)
                assert eval_element(model, phase, *t, R) == pytest.approx(ref, rel=1e-12, abs=1e-13)

    def test_bare_pair_commutes(self):
        model = noisy_model(SMALL, 2)
        assert eval_element(model, Phase.BARE, 0, 2, 1, 1, 1.4) == eval_element(model, Phase.BARE, 2, 0, 1, 1, 1.4)

    def test_missing_effective_kernel(self):
        model = init_model(SMALL, 0)
        with pytest.raises(MissingKernelError):
            eval_element(model, Phase.EFFECTIVE, 0, 0, 0, 0, 1.0)

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            eval_element(init_model(SMALL, 0), Phase.BARE, 0, 0, 0, 3, 1.0)

    def test_deterministic(self):
        model = noisy_model(SMALL, 5)
        a = eval_batch(model, Phase.EFFECTIVE, [1.1, 2.2], [(0, 1, 2, 0), (1, 1, 0, 2)])
        b = eval_batch(model.copy(), Phase.EFFECTIVE, [1.1, 2.2], [(0, 1, 2, 0), (1, 1, 0, 2)])
        assert a.tobytes() == b.tobytes()


class TestStructuralSymmetry:
    def test_eightfold_over_many_draws(self):
        """1000 random (parameters, tuple, R) draws; BARE values agree over the whole orbit."""
        rng = np.random.default_rng(11)
        configs = [ModelConfig(n, ell=l, hidden=m, depth=d)
                   for n, l, m, d in [(2, 3, 4, 2), (3, 5, 6, 3), (4, 7, 5, 4)]]
        worst = 0.0
        for draw in range(1000):
            cfg = configs[draw % 3]
            model = noisy_model(cfg, draw, scale=1.0)
            t = tuple(int(v) for v in rng.integers(0, cfg.n_act, 4))
            perms = [_apply(nm, t) for nm in EIGHT]
            vals = eval_batch(model, Phase.BARE, [rng.uniform(0.5, 3.0)], perms)
            worst = max(worst, float(np.ptp(vals)))
        assert worst <= 1e-12

    @settings(max_examples=200)
    @given(st.integers(0, 10 ** 6), st.tuples(*[st.integers(0, 2)] * 4), st.floats(0.5, 3.0))
    def test_effective_pair_swap(self, seed, t, R):
        model = noisy_model(SMALL, seed, scale=1.0)
        p, q, r, s = t
        a = eval_element(model, Phase.EFFECTIVE, p, q, r, s, R)
        b = eval_element(model, Phase.EFFECTIVE, r, s, p, q, R)
        assert abs(a - b) <= 1e-12

    def test_effective_within_pair_not_structural(self):
        """The gamma pattern (0,1,0,1) breaks p<->q; only replication restores it."""
        model = noisy_model(SMALL, 9)
        a = eval_element(model, Phase.EFFECTIVE, 0, 1, 2, 2, 1.3)
        b = eval_element(model, Phase.EFFECTIVE, 1, 0, 2, 2, 1.3)
        assert a != b


class TestEvalTensor:
    def test_all_masked(self):
        model = noisy_model(SMALL, 0)
        keys = canonical_unit(3, Symmetry.FOURFOLD)
        mask = IndexMask(3, keys, np.ones(len(keys), bool))
        for phase in Phase:
            assert not eval_tensor(model, phase, 1.2, mask).values.any()

    def test_class_symmetry_exact(self):
        model = noisy_model(SMALL, 1)
        mask = IndexMask.none_masked(3)
        assert symmetry_error(eval_tensor(model, Phase.BARE, 1.2, mask).values, Symmetry.EIGHTFOLD) == 0.0
        eff = eval_tensor(model, Phase.EFFECTIVE, 1.2, mask)
        assert eff.symmetry is Symmetry.FOURFOLD
        assert symmetry_error(eff.values, Symmetry.FOURFOLD) == 0.0

    @pytest.mark.parametrize("key", [(0, 1, 2, 0), (0, 0, 0, 0), (0, 1, 1, 0), (0, 2, 0, 2)])
    def test_single_retained_orbit(self, key):
        model = noisy_model(SMALL, 3)
        keys = canonical_unit(3, Symmetry.FOURFOLD)
        keep = np.array([tuple(k) == key for k in keys])
        assert keep.sum() == 1
        out = eval_tensor(model, Phase.EFFECTIVE, 1.5, IndexMask(3, keys, ~keep)).values
        orbit = symmetry_orbit(key, Symmetry.FOURFOLD)
        assert np.count_nonzero(out) == len(orbit)
        assert len({out[t] for t in orbit}) == 1

    def test_retained_match_elements(self):
        model = noisy_model(SMALL, 6)
        rng = np.random.default_rng(2)
        keys = canonical_unit(3, Symmetry.FOURFOLD)
        # masks built from bare data never split an EIGHTFOLD orbit
        eight = [canonical_key(*k, Symmetry.EIGHTFOLD) for k in keys]
        drop = {e for e in set(eight) if rng.random() < 0.4}
        masked = np.array([e in drop for e in eight])
        mask = IndexMask(3, keys, masked)
        for phase in Phase:
            out = eval_tensor(model, phase, 2.0, mask).values
            for k, m in zip(keys, masked):
                if m:
                    assert out[tuple(k)] == 0.0
                else:
                    assert out[tuple(k)] == pytest.approx(eval_element(model, phase, *k, 2.0), abs=1e-13)
            assert not out[mask.full_mask()].any()

    def test_mask_size_mismatch(self):
        with pytest.raises(ValueError):
            eval_tensor(init_model(SMALL, 0), Phase.BARE, 1.0, IndexMask.none_masked(4))


class TestParamCount:
    def test_reference_size(self):
        assert param_count(ModelConfig(8, ell=300, hidden=200, depth=4)) == 188050

    def test_minimal(self):
        assert param_count(ModelConfig(1, ell=1, hidden=1, depth=2)) == 7

    @given(st.integers(1, 6), st.integers(1, 20), st.integers(1, 12), st.integers(2, 5), st.integers(1, 10))
    def test_doubling_ell(self, n, ell, M, L, d):
        a = param_count(ModelConfig(n, ell=ell, hidden=M, depth=L))
        b = param_count(ModelConfig(n, ell=ell + d, hidden=M, depth=L))
        assert b - a == ((ell + d) * (ell + d + 1) - ell * (ell + 1)) // 2 + M * d + d

    @given(st.integers(1, 6), st.integers(1, 12), st.integers(1, 12), st.integers(2, 5))
    def test_literal_count(self, n, ell, M, L):
        cfg = ModelConfig(n, ell=ell, hidden=M, depth=L)
        model = init_model(cfg, 0)
        assert sum(v.size for v in model.params().values()) == param_count(cfg)
        assert sum(v.size for v in with_effective_kernel(model).params().values()) == param_count(cfg, 2)


class TestInit:
    def test_deterministic(self):
        a, b = init_model(SMALL, 42), init_model(SMALL, 42)
        for k in a.params():
            assert a.params()[k].tobytes() == b.params()[k].tobytes()
        assert init_model(SMALL, 43).params()["W1"].tobytes() != a.params()["W1"].tobytes()

    def test_biases_zero_and_ranges(self):
        cfg = ModelConfig(4, ell=6, hidden=9, depth=4)
        model = init_model(cfg, 0)
        sizes = cfg.layer_sizes
        for s in range(1, cfg.depth + 1):
            assert not model.theta[f"b{s}"].any()
            bound = math.sqrt(6.0 / (sizes[s - 1] + sizes[s]))
            assert np.abs(model.theta[f"W{s}"]).max() <= bound
        assert np.abs(model.kernel_bare.packed).max() <= 1.0 / 6
        W = model.kernel_bare.matrix()
        np.testing.assert_array_equal(W, W.T)

    @pytest.mark.parametrize("cfg", [SMALL, ModelConfig(8, ell=64, hidden=64, depth=4)])
    def test_layer_variance(self, cfg):
        """Each layer's linear output keeps its input variance within a factor of ten."""
        model = init_model(cfg, 0)
        x = np.random.default_rng(1).standard_normal((10000, cfg.n_act + 2))
        _, (inputs, pre, _) = mlp.forward(model.theta, x)
        for h, z in zip(inputs, pre):
            assert 0.1 <= z.var() / h.var() <= 10.0

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            ModelConfig(3, depth=1)
        with pytest.raises(ValueError):
            ModelConfig(3, ell=0)


class TestKernelMatrix:
    def test_round_trip(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((5, 5))
        A = A + A.T
        k = KernelMatrix.from_matrix(A)
        assert k.ell == 5 and len(k.packed) == 15
        np.testing.assert_array_equal(k.matrix(), A)

    def test_not_triangular(self):
        with pytest.raises(ValueError):
            KernelMatrix(np.zeros(5))

    def test_dimension_checked(self):
        model = init_model(SMALL, 0)
        with pytest.raises(ValueError):
            VNetModel(SMALL, model.theta, KernelMatrix(np.zeros(3)))
