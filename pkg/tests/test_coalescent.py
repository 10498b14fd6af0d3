"""Scale-function and comb-model tests.

Closed forms are checked against hand-derived expressions, the grid
solvers against closed forms and an event-driven simulation oracle,
the samplers against kernel streams and distributional tests, and the
transforms against independent thinning couplings run tip by tip.
"""

import math

import numpy as np
import pytest
from scipy.integrate import cumulative_trapezoid, quad
from scipy.stats import chisquare, gamma as gamma_dist, kstest

from phylocomb import chrono, coalescent as co, exact, trees
from phylocomb._backend import impl

# seeded distributional checks; failure odds ~1e-4 per test
ALPHA = 1e-4


def gen(seed):
    return np.random.Generator(np.random.PCG64(seed))


def exp_density(d):
    return lambda x: d * np.exp(-d * np.asarray(x, dtype=float))


def bd_tag(b, d):
    if d == 0.0:
        return 1
    return 0 if b == d else 2


def conditioned_depths(b, d, T, n, rng):
    """i.i.d. node depths given depth <= T, by closed inverse transform."""
    sc = co.scale_bd(b, d)
    u = rng.random(n) * (1.0 - 1.0 / sc(T))
    return np.array([co._closed_depth(bd_tag(b, d), b, d, x) for x in u])


class TestScaleBd:
    def test_critical_linear(self):
        s = co.scale_bd(0.1, 0.1)
        assert s(0.0) == 1.0
        assert s(10.0) == pytest.approx(2.0, abs=1e-15)
        assert s.derivative(7.3) == pytest.approx(0.1, abs=1e-15)

    def test_pure_birth_exponential(self):
        s = co.scale_bd(1.0, 0.0)
        assert s(2.0) == pytest.approx(math.e**2, rel=1e-14)
        assert s.derivative(2.0) == pytest.approx(math.e**2, rel=1e-14)

    def test_general_closed_form(self):
        b, d, t = 1.0, 0.4, 1.0
        s = co.scale_bd(b, d)
        want = 1.0 + (b / (b - d)) * math.expm1((b - d) * t)
        assert s(t) == pytest.approx(want, rel=1e-14)
        assert s(t) == pytest.approx(2.3701980006508485, rel=1e-12)
        assert s.derivative(t) == pytest.approx(b * math.exp((b - d) * t), rel=1e-14)

    def test_array_eval(self):
        s = co.scale_bd(0.7, 0.2)
        ts = np.array([0.0, 0.5, 2.0])
        got = s(ts)
        assert got.shape == (3,)
        assert got[0] == 1.0
        assert got[2] == s(2.0)

    def test_survival_and_cdf(self):
        s = co.scale_bd(1.0, 0.4)
        t = 1.7
        assert s.survival(t) == pytest.approx(1.0 / s(t), rel=1e-15)
        assert s.cdf(t) == pytest.approx(1.0 - 1.0 / s(t), rel=1e-14)

    def test_subcritical_depth_law_defective(self):
        # d > b: W(inf) = d/(d-b), so a lineage escapes to infinite depth
        # with probability (d-b)/d
        s = co.scale_bd(0.4, 1.0)
        assert s.cdf(200.0) == pytest.approx(1.0 - 0.6 / 1.0, rel=1e-9)

    def test_validation(self):
        with pytest.raises(ValueError):
            co.scale_bd(0.0, 0.1)
        with pytest.raises(ValueError):
            co.scale_bd(1.0, -0.1)
        s = co.scale_bd(1.0, 0.0)
        with pytest.raises(ValueError):
            s(-0.5)

    def test_direct_construction_guards(self):
        with pytest.raises(ValueError):
            co.ScaleFunction(
                _fn=lambda t: 2.0 + 0 * np.asarray(t),
                _deriv=lambda t: 0 * np.asarray(t),
                t_max=1.0,
                family="custom",
            )
        with pytest.raises(ValueError):
            co.ScaleFunction(
                _fn=lambda t: 1.0 + 0 * np.asarray(t),
                _deriv=lambda t: 0 * np.asarray(t),
                t_max=0.0,
                family="custom",
            )


class TestInhomogeneousScale:
    def test_constant_rates_match_closed_form(self):
        b, d, T = 1.0, 0.4, 3.0
        s = co.scale_inhomogeneous_bd(lambda u: b, lambda u: d, T, step=T * 1e-4)
        ref = co.scale_bd(b, d)
        ts = np.linspace(0.0, T, 500)
        assert np.max(np.abs(s(ts) - ref(ts))) < 1e-6

    def test_piecewise_birth_hand_integral(self):
        # d = 0 and piecewise-constant b: W(t) = exp of the birth mass on
        # the last t units of calendar time, integrable by hand
        T, b1, b2 = 2.0, 0.9, 0.4
        s = co.scale_inhomogeneous_bd(
            lambda u: b1 if u < T / 2 else b2, lambda u: 0.0, T, step=T * 1e-4
        )
        ts = np.linspace(0.0, T, 777)
        lo = T - ts
        mass = np.where(lo >= T / 2, b2 * (T - lo), b2 * (T / 2) + b1 * (T / 2 - lo))
        # one trapezoid cell straddles the rate jump, so first order there
        assert np.max(np.abs(s(ts) - np.exp(mass))) < 1e-3

    def test_zero_birth_is_flat(self):
        s = co.scale_inhomogeneous_bd(lambda u: 0.0, lambda u: 0.3, 1.0, step=1e-3)
        ts = np.linspace(0.0, 1.0, 100)
        assert np.array_equal(s(ts), np.ones(100))

    def test_domain_guard(self):
        s = co.scale_inhomogeneous_bd(lambda u: 1.0, lambda u: 0.0, 1.0, step=1e-3)
        with pytest.raises(ValueError):
            s(1.5)
        with pytest.raises(ValueError):
            s.derivative(1.5)

    def test_validation(self):
        with pytest.raises(ValueError):
            co.scale_inhomogeneous_bd(lambda u: 1.0, lambda u: 0.0, 1.0, step=0.5)
        with pytest.raises(ValueError):
            co.scale_inhomogeneous_bd(lambda u: -1.0, lambda u: 0.0, 1.0)


class TestLifespanSolver:
    # gentle rates keep the first-order error constant well under the
    # 1e-4 budget at the default step (measured 3.4e-5)
    B, D, T = 0.25, 0.1, 1.2

    def test_exponential_lifetimes_match_closed_form(self):
        s = co.scale_from_lifespan(self.B, exp_density(self.D), self.T,
                                   step=self.T * 1e-3)
        ref = co.scale_bd(self.B, self.D)
        ts = np.linspace(0.0, self.T, 700)
        assert np.max(np.abs(s(ts) - ref(ts))) < 1e-4

    def test_halving_the_step_halves_the_error(self):
        ref = co.scale_bd(self.B, self.D)
        ts = np.linspace(0.0, self.T, 700)
        errs = []
        for frac in (1e-3, 5e-4):
            s = co.scale_from_lifespan(self.B, exp_density(self.D), self.T,
                                       step=self.T * frac)
            errs.append(np.max(np.abs(s(ts) - ref(ts))))
        assert 1.7 < errs[0] / errs[1] < 2.3

    def test_immortal_lifetimes_give_pure_birth(self):
        b, T = 0.7, 2.0
        zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))
        ts = np.linspace(0.0, T, 500)
        s = co.scale_from_lifespan(b, zero, T, step=T * 1e-3)
        assert np.max(np.abs(s(ts) - np.exp(b * ts))) < 1e-2
        s2 = co.scale_from_lifespan(b, zero, T, step=T * 2e-4)
        assert np.max(np.abs(s2(ts) - np.exp(b * ts))) < 2e-3

    def test_long_lived_window_grows_like_pure_birth(self):
        # lifetimes tightly concentrated at 1.5: below that age nobody
        # has died yet, so W(t) = e^{bt} there, not 1 + bt
        b, v, T = 0.7, 1.5, 2.0
        shape = 400.0
        g = lambda x: gamma_dist.pdf(np.asarray(x, dtype=float), shape,
                                     scale=v / shape)
        s = co.scale_from_lifespan(b, g, T, step=T * 1e-3)
        ts = np.linspace(0.0, 1.2, 200)
        assert np.max(np.abs(s(ts) - np.exp(b * ts))) < 5e-3
        # deaths past 1.5 must slow the growth below pure birth
        assert s(T) < math.exp(b * T) - 0.3

    def test_event_driven_oracle_fixed_lifetimes(self):
        # grow real trees with deterministic lifetimes, truncate at T,
        # and compare tooth survival against the solver; the linear
        # candidate 1 + bt is rejected by the same data
        b, v, T = 0.7, 1.5, 2.0
        shape = 400.0
        g = lambda x: gamma_dist.pdf(np.asarray(x, dtype=float), shape,
                                     scale=v / shape)
        s = co.scale_from_lifespan(b, g, T, step=T * 1e-3)
        rng = gen(20240817)
        teeth = []
        for _ in range(1200):
            tr = chrono.sample_splitting_tree(chrono.fixed_lifespan(b, v), T, rng)
            if tr is None:
                continue
            cb = chrono.reduced_comb(chrono.contour(tr), T)
            if cb is None:
                continue
            teeth.extend(cb.heights())
        teeth = np.array(teeth)
        assert teeth.size > 1000
        wT = s(T)
        for t in (0.6, 1.0, 1.4):
            emp = float(np.mean(teeth > t))
            se = math.sqrt(emp * (1.0 - emp) / teeth.size)
            solver = (1.0 / s(t) - 1.0 / wT) / (1.0 - 1.0 / wT)
            assert abs(emp - solver) < 4.0 * se
        emp1 = float(np.mean(teeth > 1.0))
        se1 = math.sqrt(emp1 * (1.0 - emp1) / teeth.size)
        linear = (1.0 / (1.0 + b * 1.0) - 1.0 / wT) / (1.0 - 1.0 / wT)
        assert abs(emp1 - linear) > 5.0 * se1

    def test_defective_density_allowed(self):
        # only half the lineages ever die; growth sits between the
        # immortal and the fully mortal solutions
        b, d, T = 0.5, 0.8, 1.5
        g = lambda x: 0.5 * d * np.exp(-d * np.asarray(x, dtype=float))
        s = co.scale_from_lifespan(b, g, T, step=T * 1e-3)
        ts = np.linspace(0.0, T, 200)
        w = s(ts)
        assert np.all(np.diff(w) >= 0)
        assert np.all(w <= np.exp(b * ts) + 1e-9)
        full = co.scale_from_lifespan(b, exp_density(d), T, step=T * 1e-3)
        assert s(T) > full(T)

    def test_unstable_step_raises(self):
        # mass far above 1 is not a density; the scale turns back down
        g = lambda x: 50.0 * np.ones_like(np.asarray(x, dtype=float))
        with pytest.raises(ValueError, match="unstable"):
            co.scale_from_lifespan(1.0, g, 2.0, step=2e-3)

    def test_validation(self):
        with pytest.raises(ValueError, match="coarse"):
            co.scale_from_lifespan(1.0, exp_density(0.3), 1.0, step=0.2)
        with pytest.raises(ValueError, match="nonnegative"):
            co.scale_from_lifespan(1.0, lambda x: -np.ones_like(np.asarray(x)),
                                   1.0)


class TestGeneralSolver:
    B, D, T = 0.25, 0.1, 1.2

    def kernel(self):
        d = self.D
        return lambda s, xs: d * np.exp(-d * (np.asarray(xs, dtype=float) - s))

    def test_homogeneous_kernel_reduces_to_lifespan_solver(self):
        s_gen, _ = co.scale_general(lambda s: self.B, self.kernel(), self.T,
                                    step=self.T * 1e-3)
        s_life = co.scale_from_lifespan(self.B, exp_density(self.D), self.T,
                                        step=self.T * 1e-3)
        ts = np.linspace(0.0, self.T, 700)
        assert np.max(np.abs(s_gen(ts) - s_life(ts))) < 1e-12

    def test_age_kernel_constant_rate_matches_closed_form(self):
        kern = co.fk_age_density(
            lambda s, a: self.D * np.ones_like(np.asarray(a, dtype=float)),
            hazard_integral=lambda s, a: self.D * np.asarray(a, dtype=float),
        )
        s, _ = co.scale_general(lambda s: self.B, kern, self.T,
                                step=self.T * 1e-3)
        ref = co.scale_bd(self.B, self.D)
        ts = np.linspace(0.0, self.T, 700)
        assert np.max(np.abs(s(ts) - ref(ts))) < 1e-4

    def test_numeric_hazard_agrees_with_closed_hazard(self):
        rate = lambda s, a: self.D * np.ones_like(np.asarray(a, dtype=float))
        k1 = co.fk_age_density(rate,
                               hazard_integral=lambda s, a: self.D * np.asarray(a))
        k2 = co.fk_age_density(rate)
        s1, _ = co.scale_general(lambda s: self.B, k1, self.T, step=self.T * 1e-3)
        s2, _ = co.scale_general(lambda s: self.B, k2, self.T, step=self.T * 1e-3)
        ts = np.linspace(0.0, self.T, 300)
        assert np.max(np.abs(s1(ts) - s2(ts))) < 1e-10

    def test_zero_birth_flat_scale_and_doom_is_death_cdf(self):
        s, doom = co.scale_general(lambda s: 0.0, self.kernel(), self.T,
                                   step=self.T * 1e-3)
        ss = np.linspace(0.0, self.T, 300)
        assert np.max(np.abs(s(ss) - 1.0)) == 0.0
        want = -np.expm1(-self.D * (self.T - ss))
        assert np.max(np.abs(doom(ss) - want)) < 1e-8

    def test_growth_consistency_at_grid_nodes(self):
        # W'(t) = b(T-t) (1 - q(T-t)) W(t) holds node by node
        s, doom = co.scale_general(lambda s: self.B, self.kernel(), self.T,
                                   step=self.T * 1e-3)
        ts = np.linspace(0.0, self.T, 1201)
        lhs = s.derivative(ts)
        rhs = self.B * (1.0 - doom(self.T - ts)) * s(ts)
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_exponential_of_doomless_birth_mass(self):
        # integrating b(1-q) over the last t calendar units rebuilds W
        s, doom = co.scale_general(lambda s: self.B, self.kernel(), self.T,
                                   step=self.T * 1e-3)
        u = np.linspace(0.0, self.T, 1201)
        acc = cumulative_trapezoid(self.B * (1.0 - doom(u)), u, initial=0.0)
        tt = np.linspace(0.0, self.T, 300)
        west = np.exp(acc[-1] - np.interp(self.T - tt, u, acc))
        assert np.max(np.abs(west - s(tt))) < 2e-4

    def test_doom_endpoints_and_domain(self):
        s, doom = co.scale_general(lambda s: self.B, self.kernel(), self.T,
                                   step=self.T * 1e-3)
        assert doom(self.T) == 0.0
        assert 0.0 < doom(0.0) < 1.0
        with pytest.raises(ValueError):
            doom(self.T * 1.5)

    def test_kernel_shape_error(self):
        bad = lambda s, xs: np.zeros((2, 2))
        with pytest.raises(ValueError, match="death_density"):
            co.scale_general(lambda s: 1.0, bad, 1.0, step=1e-2)


class TestDepthDensity:
    def test_pure_birth_is_exponential(self):
        f = co.depth_density(co.scale_bd(1.3, 0.0))
        ts = np.linspace(0.0, 3.0, 50)
        assert np.max(np.abs(f(ts) - 1.3 * np.exp(-1.3 * ts))) < 1e-12

    def test_critical_closed_form(self):
        b = 0.5
        f = co.depth_density(co.scale_bd(b, b))
        ts = np.linspace(0.0, 4.0, 50)
        assert np.max(np.abs(f(ts) - b / (1.0 + b * ts) ** 2)) < 1e-13

    def test_normalization_closed_and_quadrature_scales(self):
        sb = co.scale_bd(1.0, 0.4)
        val, _ = quad(co.depth_density(sb), 0.0, 3.0, limit=300)
        assert abs(val - sb.cdf(3.0)) < 1e-9
        si = co.scale_inhomogeneous_bd(lambda s: 0.25 * (1 + 0.3 * math.sin(s)),
                                       lambda s: 0.1, 1.2, step=1.2e-4)
        val, _ = quad(co.depth_density(si), 0.0, 1.2, limit=300)
        assert abs(val - si.cdf(1.2)) < 1e-6

    def test_normalization_stepped_scale_first_order(self):
        # the stepped solver's value and slope tracks disagree at O(step),
        # so the defect shrinks linearly with the step
        defects = []
        for frac in (1e-3, 2.5e-4):
            s = co.scale_from_lifespan(0.25, exp_density(0.1), 1.2,
                                       step=1.2 * frac)
            val, _ = quad(co.depth_density(s), 0.0, 1.2, limit=300)
            defects.append(abs(val - s.cdf(1.2)))
        assert defects[0] < 1e-4
        assert defects[1] < defects[0] / 3.0


class TestCPPSampling:
    def test_model_validation(self):
        sc = co.scale_bd(1.0, 0.0)
        with pytest.raises(ValueError):
            co.CPPModel(horizon=1.0)
        with pytest.raises(ValueError):
            co.CPPModel(horizon=1.0, scale=sc, tail=co.nu_brownian())
        with pytest.raises(ValueError):
            co.CPPModel(horizon=0.0, scale=sc)
        grid = co.scale_from_lifespan(1.0, exp_density(0.3), 1.0, step=1e-3)
        with pytest.raises(ValueError):
            co.CPPModel(horizon=2.0, scale=grid)

    @pytest.mark.parametrize("b,d", [(1.0, 1.0), (1.0, 0.0), (1.0, 0.5)])
    def test_stream_matches_closed_inverse(self, b, d):
        T = 1.5
        model = co.CPPModel(horizon=T, scale=co.scale_bd(b, d))
        comb = co.sample_cpp(model, gen(123))
        r = gen(123)
        want = []
        while True:
            h = co._closed_depth(bd_tag(b, d), b, d, r.random())
            if h > T:
                break
            want.append(h)
        assert list(comb.heights()) == want
        assert comb.M == float(len(want) + 1)
        assert comb.positions() == tuple(range(1, len(want) + 1))

    @pytest.mark.parametrize("b,d,T", [(1.0, 1.0, 2.0), (0.8, 0.3, 2.5)])
    def test_tip_counts_match_batch_kernel(self, b, d, T):
        reps = 300
        model = co.CPPModel(horizon=T, scale=co.scale_bd(b, d))
        r = gen(9)
        got = [int(co.sample_cpp(model, r).M) for _ in range(reps)]
        want = impl.cpp_tip_counts(bd_tag(b, d), b, d, T, 10**7, reps, gen(9))
        assert got == list(want)

    def test_grid_scale_follows_closed_scale_streams(self):
        # same seed: the bisection path must stop at the same tooth count
        # and land within the solver's accuracy of the closed inverse
        b, d, T = 0.25, 0.1, 1.2
        mg = co.CPPModel(
            horizon=T,
            scale=co.scale_from_lifespan(b, exp_density(d), T, step=T * 1e-4),
        )
        mc = co.CPPModel(horizon=T, scale=co.scale_bd(b, d))
        worst = 0.0
        for seed in range(300):
            a = co.sample_cpp(mg, gen(seed))
            bb = co.sample_cpp(mc, gen(seed))
            ha, hb = list(a.heights()), list(bb.heights())
            assert len(ha) == len(hb)
            for x, y in zip(ha, hb):
                worst = max(worst, abs(x - y))
        assert worst < 1e-4

    def test_flat_scale_always_one_tip(self):
        flat = co.ScaleFunction(
            _fn=lambda t: np.ones_like(np.asarray(t, dtype=float)),
            _deriv=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
            t_max=math.inf,
            family="flat",
        )
        model = co.CPPModel(horizon=5.0, scale=flat)
        for seed in range(50):
            comb = co.sample_cpp(model, gen(seed))
            assert comb.M == 1.0 and comb.teeth == ()

    def test_mean_tip_count_is_scale_value(self):
        # E[tips | at least one] = W(T); critical case with bT = 5
        counts = impl.cpp_tip_counts(0, 1.0, 1.0, 5.0, 10**7, 20000, gen(11))
        m = counts.mean()
        se = counts.std(ddof=1) / math.sqrt(counts.size)
        assert abs(m - 6.0) < 3.0 * se

    def test_depth_law_pure_birth(self):
        u = gen(7).random(20000)
        draws = -np.log1p(-u) / 1.0
        assert kstest(draws, lambda x: 1.0 - np.exp(-x)).pvalue > ALPHA

    def test_conditioned_tooth_law(self):
        b, d, T = 1.0, 0.5, 2.0
        sc = co.scale_bd(b, d)
        model = co.CPPModel(horizon=T, scale=sc)
        r = gen(21)
        teeth = []
        for _ in range(5000):
            teeth.extend(co.sample_cpp(model, r).heights())
        teeth = np.array(teeth)
        FT = sc.cdf(T)
        assert kstest(teeth, lambda x: sc.cdf(np.asarray(x)) / FT).pvalue > ALPHA

    def test_tree_shape_law_is_uniform_on_ranked_shapes(self):
        codes = impl.cpp_codes(2, 1.0, 0.5, 1.5, 5, 20000, 10**7, gen(33))
        table = {
            trees.canonical_code(t): float(exact.shape_probability(t, exact.ERM))
            for t in trees.iter_trees(5, "shapes")
        }
        keys = sorted(table)
        obs = np.array([np.sum(codes == k) for k in keys], dtype=float)
        probs = np.array([table[k] for k in keys])
        p = chisquare(obs, obs.sum() * probs / probs.sum()).pvalue
        assert p > ALPHA

    def test_tail_model_requires_cutoff_and_delegates(self):
        model = co.CPPModel(horizon=1.0, tail=co.nu_brownian())
        with pytest.raises(ValueError, match="cutoff"):
            co.sample_cpp(model, gen(0))
        a = co.sample_cpp(model, gen(3), cutoff=0.1)
        b = co.sample_cpp_poisson(co.nu_brownian(), 1.0, 0.1, gen(3))
        assert a == b


class TestPoissonSampler:
    def test_width_and_count_means(self):
        # nu((1, inf)) = 1/2 so widths average 2; tooth intensity
        # nu((0.1, 1]) = 4.5 per unit width so counts average 9
        r = gen(5)
        widths, counts = [], []
        for _ in range(4000):
            cb = co.sample_cpp_poisson(co.nu_brownian(), 1.0, 0.1, r)
            widths.append(cb.M)
            counts.append(cb.n_teeth)
        widths, counts = np.array(widths), np.array(counts)
        se_w = widths.std(ddof=1) / math.sqrt(widths.size)
        se_c = counts.std(ddof=1) / math.sqrt(counts.size)
        assert abs(widths.mean() - 2.0) < 3.0 * se_w
        assert abs(counts.mean() - 9.0) < 3.0 * se_c

    def test_tooth_height_law(self):
        r = gen(5)
        heights = []
        for _ in range(4000):
            heights.extend(co.sample_cpp_poisson(co.nu_brownian(), 1.0, 0.1, r)
                           .heights())
        heights = np.array(heights)
        assert heights.min() > 0.1 and heights.max() <= 1.0
        cdf = lambda x: (5.0 - 1.0 / (2.0 * np.asarray(x))) / 4.5
        assert kstest(heights, cdf).pvalue > ALPHA

    def test_positions_sorted_inside_width(self):
        cb = co.sample_cpp_poisson(co.nu_brownian(), 1.0, 0.2, gen(8))
        pos = np.array(cb.positions())
        assert np.all(np.diff(pos) > 0)
        assert pos.size == 0 or (pos[0] > 0 and pos[-1] < cb.M)

    def test_no_mass_above_horizon_raises(self):
        tail = lambda x: max(1.0 - x, 0.0)
        with pytest.raises(ValueError, match="diverges"):
            co.sample_cpp_poisson(tail, 1.5, 0.2, gen(0))

    def test_cutoff_validation(self):
        with pytest.raises(ValueError):
            co.sample_cpp_poisson(co.nu_brownian(), 1.0, 0.0, gen(0))
        with pytest.raises(ValueError):
            co.sample_cpp_poisson(co.nu_brownian(), 1.0, 1.0, gen(0))

    def test_intensity_families(self):
        x = np.linspace(0.05, 4.0, 50)
        nb = co.nu_brownian()
        assert np.max(np.abs(nb(x) - 1.0 / (2.0 * x))) == 0.0
        n0 = co.nu_alpha(0.0, 0.7)
        assert np.max(np.abs(n0(x) - 0.7 / x)) == 0.0
        # vanishing clock rate recovers twice-the-mass Brownian tails
        na = co.nu_alpha(1e-9, 0.7)
        assert np.max(np.abs(na(x) - 1.4 * nb(x)) / (1.4 * nb(x))) < 1e-6
        with pytest.raises(ValueError):
            co.nu_alpha(-0.1, 1.0)
        with pytest.raises(ValueError):
            co.nu_alpha(1.0, 0.0)
        with pytest.raises(ValueError):
            nb(0.0)


class TestDepthSampleAndLoglik:
    def test_sample_validation(self):
        s = co.DepthSample(depths=(0.3, 0.7), horizon=1.0)
        assert s.n_tips == 3
        with pytest.raises(ValueError):
            co.DepthSample(depths=(1.0,), horizon=1.0)
        with pytest.raises(ValueError):
            co.DepthSample(depths=(0.0,), horizon=1.0)

    def test_from_comb(self):
        model = co.CPPModel(horizon=2.0, scale=co.scale_bd(1.0, 0.5))
        comb = co.sample_cpp(model, gen(2))
        s = co.DepthSample.from_comb(comb, 2.0)
        assert s.depths == comb.heights()
        assert s.n_tips == int(comb.M)

    def test_single_tip_value(self):
        sc = co.scale_bd(1.0, 0.4)
        s = co.DepthSample(depths=(), horizon=2.0)
        assert co.loglik_cpp(s, sc) == pytest.approx(-math.log(sc(2.0)), rel=1e-14)

    def test_critical_one_tooth_golden(self):
        b, h, T = 0.5, 1.0, 2.0
        sc = co.scale_bd(b, b)
        s = co.DepthSample(depths=(h,), horizon=T)
        want = math.log(b / (1.0 + b * h) ** 2) - math.log(1.0 + b * T)
        assert co.loglik_cpp(s, sc) == pytest.approx(want, rel=1e-14)

    def test_truth_dominates_on_average(self):
        b, d, T = 1.0, 0.3, 2.0
        truth = co.scale_bd(b, d)
        model = co.CPPModel(horizon=T, scale=truth)
        r = gen(61)
        samples = [co.DepthSample.from_comb(co.sample_cpp(model, r), T)
                   for _ in range(150)]
        def mean_ll(sc):
            return float(np.mean([co.loglik_cpp(s, sc) for s in samples]))
        ll = mean_ll(truth)
        assert ll > mean_ll(co.scale_bd(1.5, 0.3))
        assert ll > mean_ll(co.scale_bd(1.0, 0.9))
        assert ll > mean_ll(co.scale_bd(0.6, 0.1))

    def test_horizon_guard(self):
        grid = co.scale_from_lifespan(0.5, exp_density(0.3), 2.0, step=2e-3)
        with pytest.raises(ValueError, match="range"):
            co.loglik_cpp(co.DepthSample(depths=(0.5,), horizon=3.0), grid)


def thin_comb(teeth, p, bottlenecks, rng):
    """Tip-by-tip thinning oracle.

    Marks each of the len(teeth)+1 tips alive with probability p, then
    for each (depth, survival) pair kills whole sibling blocks, where a
    block is a maximal run of tips not separated by a tooth of height
    >= depth.  Returns the teeth between consecutive survivors: the max
    of the original teeth spanned.
    """
    n = len(teeth) + 1
    alive = rng.random(n) < p
    for s, eps in bottlenecks:
        cuts = np.array([h >= s for h in teeth], dtype=np.int64)
        bid = np.concatenate([[0], np.cumsum(cuts)]).astype(np.int64)
        marks = rng.random(int(bid[-1]) + 1) < eps
        alive &= marks[bid]
    idx = np.flatnonzero(alive)
    return [max(teeth[a:b]) for a, b in zip(idx[:-1], idx[1:])]


class TestBottleneck:
    def test_schedule_validation(self):
        with pytest.raises(ValueError):
            co.BottleneckSchedule(times=(1.0,), survival_probs=())
        with pytest.raises(ValueError):
            co.BottleneckSchedule(times=(0.0,), survival_probs=(0.5,))
        with pytest.raises(ValueError):
            co.BottleneckSchedule(times=(2.0, 1.0), survival_probs=(0.5, 0.5))
        with pytest.raises(ValueError):
            co.BottleneckSchedule(times=(1.0,), survival_probs=(1.5,))
        with pytest.raises(ValueError):
            co.BottleneckSchedule(sampling=0.0)

    def test_all_ones_is_identity(self):
        sc = co.scale_bd(1.0, 0.5)
        sched = co.BottleneckSchedule(times=(0.8, 1.8),
                                      survival_probs=(1.0, 1.0), sampling=1.0)
        w = co.bottleneck_transform(sc, sched, horizon=3.0)
        ts = np.linspace(0.0, 3.0, 400)
        assert np.array_equal(w(ts), sc(ts))
        assert np.array_equal(w.derivative(ts), sc.derivative(ts))

    def test_sampling_only_closed_forms(self):
        p = 0.35
        sched = co.BottleneckSchedule(sampling=p)
        lin = co.bottleneck_transform(co.scale_bd(0.4, 0.4), sched, horizon=5.0)
        ts = np.linspace(0.0, 5.0, 200)
        assert np.max(np.abs(lin(ts) - (1.0 + p * 0.4 * ts))) < 1e-14
        sc = co.scale_bd(1.0, 0.4)
        gen_w = co.bottleneck_transform(sc, sched, horizon=3.0)
        assert np.max(np.abs(gen_w(ts * 0.6) - (1.0 - p + p * sc(ts * 0.6)))) < 1e-13

    def test_piecewise_structure(self):
        sc = co.scale_bd(1.0, 0.5)
        sched = co.BottleneckSchedule(times=(0.8, 1.8),
                                      survival_probs=(0.65, 0.8), sampling=0.6)
        w = co.bottleneck_transform(sc, sched, horizon=3.0)
        assert w(0.0) == 1.0
        for knot in (0.8, 1.8):
            assert abs(w(knot) - w(knot - 1e-9)) < 1e-6
        ts = np.linspace(0.0, 3.0, 600)
        assert np.all(np.diff(w(ts)) >= 0)
        assert np.all(w(ts) <= sc(ts) + 1e-12)
        # inside a piece the slope is the kept fraction times the base slope
        keep = 0.6 * 0.65
        assert w.derivative(1.2) == pytest.approx(keep * sc.derivative(1.2),
                                                  rel=1e-12)

    def test_monotone_in_survival_probs(self):
        sc = co.scale_bd(1.0, 0.5)
        ts = np.linspace(0.0, 3.0, 400)
        lo = co.bottleneck_transform(
            sc, co.BottleneckSchedule(times=(0.8, 1.8),
                                      survival_probs=(0.5, 0.8), sampling=0.6),
            horizon=3.0)
        hi = co.bottleneck_transform(
            sc, co.BottleneckSchedule(times=(0.8, 1.8),
                                      survival_probs=(0.7, 0.8), sampling=0.6),
            horizon=3.0)
        assert np.all(hi(ts) - lo(ts) >= 0.0)

    def test_times_beyond_horizon_raise(self):
        sc = co.scale_bd(1.0, 0.5)
        sched = co.BottleneckSchedule(times=(3.5,), survival_probs=(0.5,))
        with pytest.raises(ValueError, match="below the horizon"):
            co.bottleneck_transform(sc, sched, horizon=3.0)

    def test_thinning_oracle_tooth_law(self):
        # simulate plain combs, thin them tip by tip, and test the
        # surviving teeth against the transformed scale's conditioned law
        b, d, T = 1.0, 0.5, 3.0
        sc = co.scale_bd(b, d)
        sched = co.BottleneckSchedule(times=(0.8, 1.8),
                                      survival_probs=(0.65, 0.8), sampling=0.6)
        weps = co.bottleneck_transform(sc, sched, horizon=T)
        model = co.CPPModel(horizon=T, scale=sc)
        r = gen(99)
        new_teeth = []
        for _ in range(4000):
            hs = list(co.sample_cpp(model, r).heights())
            new_teeth.extend(thin_comb(hs, 0.6, [(0.8, 0.65), (1.8, 0.8)], r))
        new_teeth = np.array(new_teeth)
        assert new_teeth.size > 4000
        FT = weps.cdf(T)
        cdf = lambda x: weps.cdf(np.asarray(x)) / FT
        assert kstest(new_teeth, cdf).pvalue > ALPHA


class TestDiversityLoss:
    def test_full_sampling_loses_nothing(self):
        sc = co.scale_bd(1.0, 0.4)
        assert co.pd_ratio(sc, 2.0, 1.0) == 1.0
        assert co.pd_ratio_inf(1.0, 0.4, 1.0) == 1.0

    def test_pure_birth_half_sampling_is_log_two(self):
        assert abs(co.pd_ratio_inf(0.1, 0.0, 0.5) - math.log(2.0)) < 1e-6
        got = co.pd_ratio_inf(0.1, 0.0, 0.5, method="quadrature")
        assert abs(got - math.log(2.0)) < 1e-6

    @pytest.mark.parametrize("ratio", [0.0, 0.5, 0.9])
    @pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
    def test_closed_matches_quadrature(self, ratio, p):
        b = 1.0
        closed = co.pd_ratio_inf(b, ratio * b, p)
        quadv = co.pd_ratio_inf(b, ratio * b, p, method="quadrature")
        assert abs(closed - quadv) < 1e-6

    def test_removable_singularity_branch(self):
        # p = 1 - d/b makes the generic logarithm ratio degenerate
        b, d = 1.0, 0.3
        p = b - d
        closed = co.pd_ratio_inf(b, d, p)
        assert closed == pytest.approx(-(1.0 - p) / math.log(p), rel=1e-12)
        quadv = co.pd_ratio_inf(b, d, p, method="quadrature")
        assert abs(closed - quadv) < 1e-6

    def test_validation(self):
        with pytest.raises(ValueError, match="diverge"):
            co.pd_ratio_inf(1.0, 1.0, 0.5)
        with pytest.raises(ValueError):
            co.pd_ratio_inf(1.0, 0.4, 0.0)
        with pytest.raises(ValueError):
            co.pd_ratio_inf(0.0, 0.0, 0.5)
        with pytest.raises(ValueError):
            co.pd_ratio_inf(1.0, 0.4, 0.5, method="mystery")
        with pytest.raises(ValueError):
            co.pd_ratio(co.scale_bd(1.0, 0.0), 2.0, 0.0)

    def test_increasing_and_concave_in_p(self):
        sc = co.scale_bd(1.0, 0.4)
        ps = np.linspace(0.05, 1.0, 20)
        vals = np.array([co.pd_ratio(sc, 2.0, float(p)) for p in ps])
        assert np.all(np.diff(vals) > 0)
        assert np.all(np.diff(vals, 2) < 1e-9)
        assert vals[-1] == 1.0

    def test_finite_horizon_converges_to_limit(self):
        got = co.pd_ratio(co.scale_bd(1.0, 0.4), 60.0, 0.5)
        want = co.pd_ratio_inf(1.0, 0.4, 0.5)
        assert abs(got - want) < 1e-6

    def test_monte_carlo_oracle(self):
        # thin a long comb tip by tip and compare the lost branch length
        # against the formula; the transform-row-first variant computed
        # below is rejected by the same simulation
        b, d, T, p = 1.0, 0.5, 3.0, 0.3
        sc = co.scale_bd(b, d)
        implv = co.pd_ratio(sc, T, p)
        rr = b - d
        FT = sc.cdf(T)
        r = gen(4242)
        ratios = []
        for _ in range(30):
            u = r.random(20000) * FT
            teeth = np.log1p(rr * u / (b * (1.0 - u))) / rr
            alive = r.random(20001) < p
            idx = np.flatnonzero(alive)
            new = np.maximum.reduceat(teeth, idx[:-1]) if idx.size > 1 else []
            ratios.append((T + np.sum(new)) / (T + teeth.sum()))
        ratios = np.array(ratios)
        se = ratios.std(ddof=1) / math.sqrt(ratios.size)
        assert abs(ratios.mean() - implv) < 4.0 * se
        weps = lambda t: 1.0 - p + p * sc(t)
        Se = lambda t: 1.0 / weps(t)
        FeT = 1.0 - Se(T)
        EB = quad(lambda t: (Se(t) - Se(T)) / FeT, 0.0, T, limit=200)[0]
        EA = quad(lambda t: (sc.survival(t) - sc.survival(T)) / FT, 0.0, T,
                  limit=200)[0]
        alt = p * EB / EA
        assert abs(ratios.mean() - alt) > 10.0 * se


class TestMLE:
    def test_recovers_birth_rate(self):
        # 500 conditioned depths, mortality known: the estimate lands
        # within a few percent, asserted at the 15% mark
        b, d, T = 1.0, 0.5, 6.0
        depths = conditioned_depths(b, d, T, 500, gen(4))
        s = co.DepthSample(depths=tuple(depths), horizon=T)
        fit = co.mle_fit(s, family="bd", fixed={"d": 0.5})
        assert fit.converged
        assert abs(fit.params["b"] - b) / b < 0.15

    def test_free_fit_not_worse_than_truth(self):
        # b and d are only weakly identified jointly at this sample
        # size, so assert optimality, not parameter recovery
        b, d, T = 1.0, 0.5, 3.0
        depths = conditioned_depths(b, d, T, 500, gen(1))
        s = co.DepthSample(depths=tuple(depths), horizon=T)
        fit = co.mle_fit(s, family="bd")
        ll_truth = co.loglik_cpp(s, co.scale_bd(b, d))
        assert fit.loglik >= ll_truth - 1e-9
        assert fit.params["b"] > 0 and fit.params["d"] >= 0

    def test_lifespan_family_nests_exponential(self):
        b, d, T = 0.8, 0.4, 3.0
        depths = conditioned_depths(b, d, T, 200, gen(12))
        s = co.DepthSample(depths=tuple(depths), horizon=T)
        nested = co.mle_fit(s, family="lifespan_gamma", fixed={"shape": 1.0},
                            budget=150, step=T / 400)
        free = co.mle_fit(s, family="lifespan_gamma", budget=150, step=T / 400)
        assert free.loglik >= nested.loglik - 1e-9
        assert 0.3 < nested.params["b"] < 3.0

    def test_lifespan_loglik_near_closed_form_at_matched_params(self):
        # the stepped scale biases the likelihood at O(step); at this
        # grid the two families agree to within about one unit
        b, d, T = 0.8, 0.4, 3.0
        depths = conditioned_depths(b, d, T, 200, gen(12))
        s = co.DepthSample(depths=tuple(depths), horizon=T)
        ll_bd = co.loglik_cpp(s, co.scale_bd(b, d))
        fit = co.mle_fit(s, family="lifespan_gamma",
                         fixed={"b": b, "shape": 1.0, "scale": 1.0 / d},
                         step=T / 400)
        assert fit.converged and fit.n_iter == 0
        assert abs(fit.loglik - ll_bd) < 1.5

    def test_empty_sample_flagged(self):
        fit = co.mle_fit(co.DepthSample(depths=(), horizon=2.0), family="bd")
        assert not fit.converged
        assert math.isnan(fit.loglik)
        assert fit.message

    def test_all_parameters_fixed(self):
        s = co.DepthSample(depths=(0.5, 0.8), horizon=2.0)
        fit = co.mle_fit(s, family="bd", fixed={"b": 1.0, "d": 0.2})
        assert fit.converged and fit.n_iter == 0
        want = co.loglik_cpp(s, co.scale_bd(1.0, 0.2))
        assert fit.loglik == pytest.approx(want, rel=1e-14)

    def test_start_override(self):
        s = co.DepthSample(depths=(0.5, 0.8, 1.1), horizon=2.0)
        fit = co.mle_fit(s, family="bd", start={"b": 2.0, "d": 0.1})
        assert fit.params["b"] > 0

    def test_unknown_names_raise(self):
        s = co.DepthSample(depths=(0.5,), horizon=2.0)
        with pytest.raises(ValueError, match="family"):
            co.mle_fit(s, family="weird")
        with pytest.raises(ValueError, match="parameter"):
            co.mle_fit(s, family="bd", fixed={"zeta": 1.0})


class TestHospitalStay:
    B, M, STAY = 0.7, 2.0, staticmethod(lambda y: np.exp(-y / 2.0))

    @pytest.mark.parametrize("delta", [0.1, 1.0, 10.0])
    def test_inverse_matches_quadratic_root(self, delta):
        # exponential stays close the transform to a quadratic in x
        phi = co.phi_inverse(self.B, self.M, lambda y: np.exp(-y / self.M),
                             delta)
        A = self.M
        Bc = 1.0 - delta * self.M - self.B * self.M
        root = (-Bc + math.sqrt(Bc * Bc + 4.0 * A * delta)) / (2.0 * A)
        assert abs(phi - root) < 1e-10

    @pytest.mark.parametrize("delta", [0.1, 1.0, 10.0])
    def test_round_trip(self, delta):
        S = lambda y: np.exp(-y / self.M)
        phi = co.phi_inverse(self.B, self.M, S, delta)
        integ = quad(lambda y: -np.expm1(-phi * y) * S(y), 0.0, np.inf,
                     limit=300)[0]
        assert abs((phi - (self.B / self.M) * integ) - delta) < 1e-10

    def test_density_normalizes(self):
        S = lambda y: np.exp(-y / self.M)
        phi = co.phi_inverse(self.B, self.M, S, 1.0)
        f = lambda y: co.hospital_stay_density(y, self.B, self.M, S, 1.0,
                                               phi=phi)
        mass = quad(f, 0.0, np.inf, limit=300)[0]
        assert abs(mass - 1.0) < 1e-6
        assert f(0.0) == 0.0
        ys = np.linspace(0.1, 15.0, 40)
        assert all(f(float(y)) >= 0.0 for y in ys)

    def test_density_computes_inverse_when_missing(self):
        S = lambda y: np.exp(-y / self.M)
        phi = co.phi_inverse(self.B, self.M, S, 1.0)
        a = co.hospital_stay_density(1.3, self.B, self.M, S, 1.0)
        b = co.hospital_stay_density(1.3, self.B, self.M, S, 1.0, phi=phi)
        assert a == pytest.approx(b, rel=1e-12)

    def test_misstated_mean_fails_bracket(self):
        # survival decays far slower than the claimed mean allows, so no
        # root exists in the guaranteed window
        with pytest.raises(ValueError, match="bracket"):
            co.phi_inverse(1.0, 1.0, lambda y: np.exp(-0.01 * y), 1.0)

    def test_degenerate_inverse_rejected(self):
        with pytest.raises(ValueError, match="degenerate"):
            co.hospital_stay_density(1.0, self.B, self.M,
                                     lambda y: np.exp(-y / self.M), 1.0,
                                     phi=1.0)

    def test_validation(self):
        S = lambda y: np.exp(-y)
        with pytest.raises(ValueError):
            co.phi_inverse(0.0, 1.0, S, 1.0)
        with pytest.raises(ValueError):
            co.phi_inverse(1.0, 0.0, S, 1.0)
        with pytest.raises(ValueError):
            co.phi_inverse(1.0, 1.0, S, 0.0)
        with pytest.raises(ValueError):
            co.hospital_stay_density(-1.0, 1.0, 1.0, S, 1.0)
