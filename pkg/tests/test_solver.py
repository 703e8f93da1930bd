import numpy as np
import pytest

from gcmdisp.dataio import Layer, SynthSpec, cross_hair_baselines, synth_scene
from gcmdisp.errors import NumericalError, ParameterError
from gcmdisp.filtering import build_scale_stack
from gcmdisp.solver import (
    Couplings,
    LinearSystem,
    SolverConfig,
    assemble,
    cg_solve,
    closed_form_update,
    irls_data_weights,
    irls_reg_weights,
    limit_update,
    median_filter,
    solve_iteration,
    tv_energy,
    warp_target,
    warp_views,
)
from oracles import bilinear_oracle, dense_system, median_oracle
from test_gcm import fake_stack


def random_terms(rng, shape=(3, 1, 6, 7)):
    return (
        rng.uniform(0.5, 2.0, shape),
        rng.uniform(0.5, 2.0, shape),
        rng.normal(size=shape),
        rng.normal(scale=0.1, size=shape),
    )


def random_spd(rng, h, w):
    reg = irls_reg_weights(rng.normal(size=(h, w)), 1e-3)
    c = reg.scaled(0.01)
    diag = c.total() + rng.uniform(0.5, 2.0, (h, w))
    return LinearSystem(diag, c, rng.normal(size=(h, w)))


class TestWarp:
    def test_identity(self, rng):
        t = rng.uniform(size=(12, 9))
        r = rng.uniform(size=(12, 9))
        assert np.array_equal(warp_target(t, r, np.zeros((12, 9)), (1.5, -2.0)), t)

    def test_affine_exact(self):
        cols = np.tile(np.arange(20, dtype=float), (16, 1))
        out = warp_target(cols, np.zeros_like(cols), np.full(cols.shape, 0.5), (1, 0))
        assert np.max(np.abs(out[:, :-1] - (cols[:, :-1] + 0.5))) < 1e-12

    def test_affine_exact_2d(self):
        rows, cols = np.mgrid[0:16, 0:20].astype(float)
        img = 0.3 * cols - 0.7 * rows + 2.0
        out = warp_target(img, np.zeros_like(img), np.full(img.shape, 0.75), (1.0, 2.0))
        inner = (slice(0, 14), slice(0, 19))
        expected = 0.3 * (cols + 0.75) - 0.7 * (rows + 1.5) + 2.0
        assert np.max(np.abs(out[inner] - expected[inner])) < 1e-12

    def test_matches_per_pixel_oracle(self, rng):
        t = rng.uniform(size=(16, 16))
        r = rng.uniform(size=(16, 16))
        yy, xx = np.mgrid[0:16, 0:16]
        w = 1.5 * np.sin(xx / 5.0) * np.cos(yy / 7.0)
        for b in [(1, 0), (-2, 1), (0.5, -1.5)]:
            assert np.allclose(warp_target(t, r, w, b), bilinear_oracle(t, r, w, b), atol=1e-14)

    def test_outside_takes_reference(self, rng):
        t = rng.uniform(size=(6, 6))
        r = rng.uniform(size=(6, 6))
        out = warp_target(t, r, np.full((6, 6), 1.0), (2, 0))
        assert np.array_equal(out[:, 4:], r[:, 4:])
        assert np.array_equal(out[:, :4], t[:, 2:])

    def test_ground_truth_warp_reduces_residual(self, constant_scene):
        before = build_scale_stack(constant_scene, (0,)).delta_I
        after = build_scale_stack(warp_views(constant_scene, constant_scene.ground_truth), (0,)).delta_I
        assert np.sum(before ** 2) >= 100 * np.sum(after ** 2)


class TestClosedForm:
    def test_single_term(self):
        st = fake_stack(np.full((1, 1, 2, 2), -1.0), np.full((1, 1, 2, 2), 2.0))
        assert np.allclose(closed_form_update(np.ones((1, 1, 2, 2)), st), 0.5)

    def test_zero_differences(self, rng):
        st = fake_stack(np.zeros((2, 1, 3, 3)), rng.normal(size=(2, 1, 3, 3)))
        assert not closed_form_update(np.ones((2, 1, 3, 3)), st).any()

    def test_floor_on_textureless_pixels(self):
        st = fake_stack(np.full((1, 1, 2, 2), 0.3), np.zeros((1, 1, 2, 2)))
        assert np.all(np.isfinite(closed_form_update(np.ones((1, 1, 2, 2)), st)))

    def test_equals_unregularised_cg(self, rng):
        W, R, g, dI = random_terms(rng)
        st = fake_stack(dI, g)
        system = assemble(W, np.ones_like(W), st, 0.0, irls_reg_weights(np.zeros((6, 7)), 1e-3))
        x, _ = cg_solve(system, tol=1e-12)
        assert np.max(np.abs(x - closed_form_update(W, st))) < 1e-9


class TestIrlsWeights:
    @pytest.mark.parametrize("resid, delta, expected, tol", [(0.0, 1e-3, 1000.0, 1e-9), (1.0, 1e-9, 1.0, 1e-9), (0.3, 1e-3, 3.33333, 1e-4)])
    def test_data_examples(self, resid, delta, expected, tol):
        st = fake_stack(np.full((1, 1, 2, 2), resid), np.ones((1, 1, 2, 2)))
        assert np.allclose(irls_data_weights(st, np.zeros((2, 2)), delta), expected, atol=tol)

    def test_reg_constant(self):
        c = irls_reg_weights(np.full((5, 6), 2.0), 1e-3)
        assert np.allclose(c.east[:, :-1], 1000.0) and np.allclose(c.south[:-1], 1000.0)
        assert c.is_symmetric()

    def test_reg_ramp(self):
        ramp = np.tile(np.arange(8, dtype=float), (6, 1))
        c = irls_reg_weights(ramp, 1e-6)
        assert np.allclose(c.east[:-1, :-1], 1.0, atol=1e-9)

    def test_tv_energy_decreases(self, rng):
        # pure TV step: data term pins nothing, so the reweighted solve smooths w
        w = rng.normal(size=(10, 10))
        st = fake_stack(np.zeros((1, 1, 10, 10)), np.full((1, 1, 10, 10), 0.3))
        system = assemble(np.ones((1, 1, 10, 10)), np.ones((1, 1, 10, 10)), st, 1.0, irls_reg_weights(w, 1e-3), w)
        dw, _ = cg_solve(system, tol=1e-10)
        assert tv_energy(w + dw, 1e-3) < tv_energy(w, 1e-3)


class TestAssemble:
    def test_single_term_no_regulariser(self):
        st = fake_stack(np.full((1, 1, 3, 3), 0.4), np.full((1, 1, 3, 3), 2.0))
        W = np.full((1, 1, 3, 3), 0.5)
        R = np.full((1, 1, 3, 3), 3.0)
        sys_ = assemble(W, R, st, 0.0, irls_reg_weights(np.zeros((3, 3)), 1e-3))
        assert np.allclose(sys_.diag, 0.5 * 3.0 * 4.0)
        assert np.allclose(sys_.rhs, -0.5 * 3.0 * 2.0 * 0.4)

    def test_pure_diffusion(self, rng):
        st = fake_stack(rng.normal(size=(1, 1, 5, 5)), rng.normal(size=(1, 1, 5, 5)))
        sys_ = assemble(np.zeros((1, 1, 5, 5)), np.ones((1, 1, 5, 5)), st, 0.7, irls_reg_weights(np.zeros((5, 5)), 1e-3))
        assert not sys_.rhs.any()
        x, _ = cg_solve(sys_)
        assert not x.any()

    def test_dense_oracle(self, rng):
        W, R, g, dI = random_terms(rng, (2, 2, 8, 8))
        w = rng.normal(scale=0.3, size=(8, 8))
        st = fake_stack(dI, g, scales=(0, 1))
        sys_ = assemble(W, R, st, 0.8, irls_reg_weights(w, 1e-3), w)
        A, b = dense_system(W, R, g, dI, 0.8, w)
        assert np.allclose(sys_.to_dense(), A, rtol=1e-12, atol=1e-9)
        assert np.allclose(sys_.rhs.ravel(), b, rtol=1e-12, atol=1e-9)
        assert sys_.is_symmetric() and sys_.is_diagonally_dominant()
        assert np.all(np.linalg.eigvalsh(A) > 0)


class TestCG:
    def test_identity(self, rng):
        r = rng.normal(size=(4, 5))
        z = np.zeros((4, 5))
        x, k = cg_solve(LinearSystem(np.ones((4, 5)), Couplings(z, z, z, z), r))
        assert k == 1 and np.allclose(x, r, atol=1e-15)

    def test_zero_rhs(self, rng):
        system = random_spd(rng, 5, 5)
        x, k = cg_solve(LinearSystem(system.diag, system.couplings, np.zeros((5, 5))))
        assert k == 0 and not x.any()

    def test_matches_dense_solve(self, rng):
        system = random_spd(rng, 12, 12)
        x, _ = cg_solve(system, tol=1e-12)
        ref = np.linalg.solve(system.to_dense(), system.rhs.ravel())
        assert np.sqrt(np.mean((x.ravel() - ref) ** 2)) < 1e-7

    def test_stopping_rule(self, rng):
        system = random_spd(rng, 10, 10)
        x, _ = cg_solve(system, tol=1e-4)
        assert np.linalg.norm(system.rhs - system.matvec(x)) <= 1e-4 * np.linalg.norm(system.rhs)

    def test_error_energy_norm_monotone(self, rng):
        system = random_spd(rng, 10, 10)
        A = system.to_dense()
        ref = np.linalg.solve(A, system.rhs.ravel())
        errs = []

        def cb(k, x, r):
            e = x.ravel() - ref
            errs.append(e @ A @ e)

        cg_solve(system, tol=1e-12, callback=cb)
        assert all(b <= a * (1 + 1e-12) for a, b in zip(errs, errs[1:]))

    def test_non_finite(self, rng):
        system = random_spd(rng, 4, 4)
        bad = system.rhs.copy()
        bad[0, 0] = np.nan
        with pytest.raises(NumericalError):
            cg_solve(LinearSystem(system.diag, system.couplings, bad))


class TestLimitAndMedian:
    def test_limit_examples(self):
        out, clipped = limit_update(np.array([[0.4, -0.4, 0.1]]), 0.25)
        assert out.tolist() == [[0.25, -0.25, 0.1]] and clipped
        vals = np.array([[1.0, -1.0, 0.5]])
        out, clipped = limit_update(vals, 1.0)
        assert np.array_equal(out, vals) and not clipped
        with pytest.raises(ParameterError):
            limit_update(vals, 0.0)

    def test_median_constant_and_impulse(self):
        flat = np.full((9, 9), 2.5)
        assert np.array_equal(median_filter(flat), flat)
        spike = flat.copy()
        spike[4, 4] = 100.0
        assert np.array_equal(median_filter(spike), flat)

    def test_median_oracle(self, rng):
        w = rng.normal(size=(10, 10))
        assert np.array_equal(median_filter(w, 2), median_oracle(w, 2))


class TestSolveIteration:
    def test_aligned_views(self, constant_scene):
        # integer shifts are reproduced exactly by the bilinear warp
        spec = SynthSpec(64, 64, [Layer(1.0, 3)], cross_hair_baselines(2), min_freq=0.2, max_freq=2.0)
        scene = synth_scene(spec)
        _, report = solve_iteration(scene, scene.ground_truth.copy(), (0,), SolverConfig(), 0.5)
        assert report.solve_count == 1
        assert report.max_abs_dw < 1e-6
        # fractional shifts leave only the interpolation error
        _, report = solve_iteration(constant_scene, constant_scene.ground_truth.copy(), (0,), SolverConfig(), 0.5)
        assert report.max_abs_dw < 5e-3

    def test_constant_disparity_converges(self, constant_scene):
        w = np.zeros(constant_scene.shape)
        for n in range(10):
            w, report = solve_iteration(constant_scene, w, (0,), SolverConfig(), 0.5, solve_count=n)
        assert report.solve_count == 10
        assert np.sqrt(np.mean((w - 0.7) ** 2)) < 1e-3

    def test_clip_flag_matches_update(self, two_plane_small):
        w = np.zeros(two_plane_small.shape)
        for M in (0.01, 10.0):
            _, report = solve_iteration(two_plane_small, w, (0,), SolverConfig(), M)
            assert report.clipped == (report.max_abs_dw > M)


@pytest.mark.parametrize("bad", [dict(alpha=-1), dict(cg_tol=0.0), dict(cg_tol=1.0), dict(irls_delta=0.0), dict(cg_max_iter=0)])
def test_config_validation(bad):
    with pytest.raises(ParameterError):
        SolverConfig(**bad)
