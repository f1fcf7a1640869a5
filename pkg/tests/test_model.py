import numpy as np
import pytest

from nearcrit.errors import (
    OrthantViolation,
    ParamContractViolation,
    ProfileViolatesSmallO,
)
from nearcrit.exprs import ScalarExpr
from nearcrit.model import (
    CHI,
    ZETA,
    CounterexampleParams,
    DriftProfile,
    ExprProfile,
    LogDecayProfile,
    ModelSpec,
    OrthantGuard,
    PowerProfile,
    default_counterexample_params,
    make_counterexample_model,
    make_embedded_model,
    make_lamperti_model,
    noise_moments_check,
    step,
    step_batch,
    validate_counterexample_params,
)
from nearcrit.seeding import rng_from
from nearcrit.spectral import perron_decompose


def zero_noise_model(sd) -> ModelSpec:
    """Deterministic test double: g = 0, xi = 0."""
    d = sd.d

    def g(x):
        return np.zeros(d)

    def sigma(x):
        return 0.0

    def noise(x, rng, base=None):
        return np.zeros(d)

    def noise_batch(x, n, rng):
        return np.zeros((n, d))

    return ModelSpec(d=d, M=sd.M, sd=sd, g=g, sigma=sigma, noise=noise,
                     noise_batch=noise_batch, p=3.0, c_moment=1.0,
                     state_guard=OrthantGuard(), family="test_zero", params={})


class TestLampertiFamily:
    def test_theta_zero_has_no_drift(self, sd5):
        m = make_lamperti_model(sd5, 0.0)
        assert not m.g(np.array([5.0, 2.0])).any()

    def test_scalar_drift_vs_variance_calibration(self, sd1):
        # x * g(x) = (theta/2) * sigma_bar(x)^2, so theta=4 doubles sigma^2
        m = make_lamperti_model(sd1, 4.0, PowerProfile(0.5))
        x = np.array([64.0])
        assert abs(float(x[0] * m.g(x)[0]) - 2.0 * m.sigma(x) ** 2) < 1e-12

    def test_recurrent_side_calibration(self, sd5):
        m = make_lamperti_model(sd5, 0.5)
        x = 50.0 * sd5.r
        lx = float(x @ sd5.ell)
        lg = float(m.g(x) @ sd5.ell)
        assert abs(2.0 * lx * lg / m.sigma(x) ** 2 - 0.5) < 1e-12

    def test_profile_must_decay(self, sd1):
        with pytest.raises(ProfileViolatesSmallO):
            make_lamperti_model(sd1, 1.0, PowerProfile(1.0))
        with pytest.raises(ProfileViolatesSmallO):
            make_lamperti_model(sd1, 1.0, PowerProfile(1.2))

    def test_deterministic_construction(self, sd5):
        m1 = make_lamperti_model(sd5, 1.5)
        m2 = make_lamperti_model(sd5, 1.5)
        x = np.array([4.0, 7.0])
        s1 = [tuple(step(m1, x, rng_from(9))) for _ in range(1)]
        s2 = [tuple(step(m2, x, rng_from(9))) for _ in range(1)]
        assert s1 == s2
        traj1, traj2 = x.copy(), x.copy()
        r1, r2 = rng_from(123), rng_from(123)
        for _ in range(500):
            traj1 = step(m1, traj1, r1)
            traj2 = step(m2, traj2, r2)
        np.testing.assert_array_equal(traj1, traj2)

    def test_orthant_invariance_bulk(self, sd5, sd1):
        # 1e6 one-step samples per family from states along a trajectory
        for sd, theta in ((sd5, 4.0), (sd5, 0.2), (sd1, 1.0)):
            m = make_lamperti_model(sd, theta)
            rng = rng_from(31)
            x = 5.0 * sd.r
            for _ in range(100):
                batch = step_batch(m, x, 10_000, rng)
                assert np.all(batch >= 0.0)
                x = step(m, x, rng)

    def test_step_mean_matrix_only(self, sd5):
        m = zero_noise_model(sd5)
        x = np.array([2.0, 6.0])
        np.testing.assert_array_equal(step(m, x, rng_from(0)), sd5.M @ x)


class TestCounterexampleFamily:
    def test_default_params_contract(self):
        validate_counterexample_params(default_counterexample_params(0.75))

    def test_bad_params_rejected(self):
        sigma_bar = PowerProfile(1.0)  # sigma_bar = t violates sigma <= t/2
        params = CounterexampleParams(
            g_bar=DriftProfile(0.75, sigma_bar), sigma_bar=sigma_bar, theta=0.75)
        with pytest.raises(ParamContractViolation):
            validate_counterexample_params(params)

    def test_step_from_ray_state(self):
        params = default_counterexample_params(0.75)
        m = make_counterexample_model(params)
        sig1 = float(params.sigma_bar(1.0))
        gb1 = float(params.g_bar(1.0))
        seen_up = seen_down = False
        for seed in range(40):
            nxt = step(m, np.array([1.0, 1.0]), rng_from(seed))
            lx = float(nxt @ m.sd.ell)
            vcheck = abs(nxt[0] - nxt[1]) / 2
            assert abs(vcheck - sig1) < 1e-14
            up, down = 1.0 + gb1 + sig1, 1.0 + gb1 - sig1
            assert min(abs(lx - up), abs(lx - down)) < 1e-14
            seen_up |= abs(lx - up) < 1e-14
            seen_down |= abs(lx - down) < 1e-14
        assert seen_up and seen_down

    def test_transverse_norm_doubles_sigma_on_band(self):
        params = default_counterexample_params(0.75)
        m = make_counterexample_model(params)
        x = np.array([7.0, 7.0])  # on the ray
        sig = m.sigma(x)
        for seed in range(10):
            nxt = step(m, x, rng_from(seed))
            lx = float(nxt @ m.sd.ell)
            check_l1 = float(np.abs(nxt - lx * m.sd.r).sum())
            assert abs(check_l1 - 2.0 * sig) < 1e-13

    def test_off_band_suppression(self):
        params = default_counterexample_params(0.75)
        m = make_counterexample_model(params)
        x = np.array([3.0, 1.0])  # u=2, transverse l1 norm 2 > sigma_bar(2)
        assert float(np.abs(x - 2.0 * m.sd.r).sum()) > m.sigma(x)
        assert not m.g(x).any()
        xi = m.noise_batch(x, 64, rng_from(5))
        # only the ray component remains: xi = +-sigma * (1,1)
        assert np.allclose(np.abs(xi), m.sigma(x), atol=0)
        assert {tuple(v) for v in np.sign(xi)} <= {(1.0, 1.0), (-1.0, -1.0)}

    def test_fixed_vectors_are_exact(self):
        m = make_counterexample_model(default_counterexample_params())
        assert float(m.sd.ell @ ZETA) == 0.0
        assert float(m.sd.ell @ CHI) == 1.0

    def test_moment_contract_on_band(self):
        m = make_counterexample_model(default_counterexample_params())
        rep = noise_moments_check(m, np.array([5.0, 5.0]), 20_000, rng=4)
        assert rep.ok
        assert rep.var_ratio == 1.0  # only the ray component moves ell xi
        assert rep.p_moment_ratio <= m.c_moment


class TestEmbeddedFamily:
    def test_tau_squared_closed_form(self):
        params = default_counterexample_params(0.75)
        m = make_embedded_model(params)
        t = 123.0
        s = float(params.sigma_bar(t))
        mid = t + float(params.g_bar(t))
        expected = s * s + 0.5 * (float(params.sigma_bar(mid + s)) ** 2
                                  + float(params.sigma_bar(mid - s)) ** 2)
        assert abs(m.sigma(np.array([t])) ** 2 - expected) < 1e-9

    def test_moments(self):
        m = make_embedded_model(default_counterexample_params())
        rep = noise_moments_check(m, np.array([200.0]), 50_000, rng=6)
        assert rep.ok


class TestNoiseMoments:
    def test_scalar_two_point_ratios_are_exact(self, sd1):
        m = make_lamperti_model(sd1, 0.5)
        rep = noise_moments_check(m, np.array([100.0]), 5000, rng=1)
        assert rep.var_ratio == 1.0
        assert rep.p_moment_ratio == 1.0
        assert rep.ok

    def test_requires_enough_samples(self, sd1):
        m = make_lamperti_model(sd1, 0.5)
        with pytest.raises(ValueError):
            noise_moments_check(m, np.array([100.0]), 10, rng=1)


class TestExprProfiles:
    def test_expression_profile_roundtrip(self, sd1):
        prof = ExprProfile(ScalarExpr("sqrt(t)"))
        m = make_lamperti_model(sd1, 1.0, prof)
        assert abs(m.sigma(np.array([49.0])) - 7.0) < 1e-12

    def test_expression_rejects_unsafe_code(self):
        with pytest.raises(ValueError):
            ScalarExpr("__import__('os').system('true')")
        with pytest.raises(ValueError):
            ScalarExpr("t.__class__")


class TestOrthantGuard:
    def test_violation_raises(self, sd5):
        m = zero_noise_model(sd5)
        bad = ModelSpec(**{**m.__dict__, "noise": lambda x, rng, base=None: np.array([-100.0, 0.0])})
        with pytest.raises(OrthantViolation):
            step(bad, np.array([1.0, 1.0]), rng_from(0))
