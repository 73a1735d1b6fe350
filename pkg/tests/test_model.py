import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from goaldyn.errors import (
    AngleOutOfRange,
    DimensionMismatch,
    DomainPole,
    InvalidProbabilities,
    InvalidSpec,
    NegativeDiffusion,
    ZeroPayoff,
)
from goaldyn.model import (
    ControlMatrix,
    DiffusionSpec,
    MatchContext,
    OppositionMix,
    WeatherSpec,
    attendance,
    belief_profile,
    check_lipschitz,
    opposition_payoff,
    pressure,
    scalar_model,
    sigma_star,
    softplus,
    toss_branches,
    toss_expectation,
    vapor_pressure,
    weierstrass,
    weierstrass_tail_bound,
)

# 0.6108 * exp(17.27 * 20 / 257.3) at 50 digits (mpmath)
VP_20C = 2.3382812709274462440195361075816797331125154752621
# s_w = 1.5, base 2, u = 1 summed to 2200 terms at 800 digits (mpmath);
# the remaining terms are below 1e-330
W_FULL = 0.729624805899390049256809470134


def test_vapor_pressure_values():
    assert vapor_pressure(0.0) == pytest.approx(0.6108, rel=1e-15)
    assert vapor_pressure(20.0) == pytest.approx(VP_20C, rel=1e-14)
    with pytest.raises(DomainPole):
        vapor_pressure(-237.3)
    with pytest.raises(DomainPole):
        vapor_pressure(-300.0)


def test_weierstrass_against_high_precision():
    spec = WeatherSpec(1.5, 1.5, 0.5, truncation=50)
    assert spec.base == 2.0
    res = weierstrass(spec, 1.0)
    assert abs(res.value - W_FULL) <= res.tail_bound
    longer = weierstrass(spec, 1.0, 64)
    assert abs(longer.value - W_FULL) <= longer.tail_bound
    # the truncated sum itself agrees with the 64-term extended-precision sum
    assert longer.value == pytest.approx(0.729624805997075734875866870066, abs=1e-14)
    assert weierstrass(spec, 0.0).value == 0.0


@settings(max_examples=40, deadline=None)
@given(
    s_w=st.floats(1.05, 1.95),
    base=st.floats(1.1, 6.0),
    u=st.floats(-5, 5),
    n=st.integers(1, 30),
    extra=st.integers(1, 40),
)
def test_weierstrass_tail_bound_holds(s_w, base, u, n, extra):
    spec = WeatherSpec(s_w, base - 0.5, 0.5)
    a = weierstrass(spec, u, n)
    b = weierstrass(spec, u, n + extra)
    assert abs(b.value - a.value) <= a.tail_bound * (1 + 1e-9) + 1e-12
    assert a.tail_bound == weierstrass_tail_bound(spec, n)


def test_weather_invariants():
    with pytest.raises(InvalidSpec):
        WeatherSpec(2.0, 1.0, 1.0)
    with pytest.raises(InvalidSpec):
        WeatherSpec(1.5, 0.3, 0.3)
    with pytest.raises(InvalidSpec):
        WeatherSpec(1.5, 1.0, 1.0, truncation=0)
    spec = WeatherSpec.from_dew_point(20.0, 1.0)
    assert spec.lambda_dew == pytest.approx(VP_20C, rel=1e-14)


def test_toss_examples():
    ctx = MatchContext(1, 2, 3, 4)
    assert toss_expectation(ctx) == pytest.approx(0.5 * (0.5 * 2 + 0.5 * 3) + 0.5 * (0.5 * 1 + 0.5 * 4))
    won = MatchContext(1, 2, 3, 4, toss_won=True)
    assert toss_expectation(won) == pytest.approx(0.5 * (0.5 * 2 + 0.5 * 3))
    assert toss_expectation(MatchContext(2.5, 2.5, 2.5, 2.5)) == pytest.approx(2.5)
    with pytest.raises(InvalidSpec):
        MatchContext(-1, 0, 0, 0)


@given(st.lists(st.floats(0, 100), min_size=4, max_size=4))
def test_toss_mixture_is_branch_average(vals):
    ctx = MatchContext(*vals)
    winner, loser = toss_branches(ctx)
    assert toss_expectation(ctx, mixture=True) == pytest.approx(0.5 * (winner + loser))


def test_pressure_examples():
    spec = DiffusionSpec(p0=1.0, kappa_p=2.0)
    assert pressure(0, [0.7], [0.7], spec)[0] == pytest.approx(1 + 2 * math.log(2))
    assert pressure(0, [50.0], [0.0], DiffusionSpec(kappa_p=1.0))[0] < 1e-20
    assert pressure(0, [3.0], [-1.0], DiffusionSpec(p0=0.4))[0] == 0.4
    with pytest.raises(DimensionMismatch):
        pressure(0, [1.0, 2.0], [0.0, 0.0, 0.0], spec)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=5), st.floats(0, 5), st.floats(0, 5))
def test_pressure_nonnegative(z, p0, kp):
    p = pressure(0, z, np.zeros(len(z)), DiffusionSpec(p0=p0, kappa_p=kp))
    assert np.all(p >= 0)


def test_attendance_examples():
    ctx = MatchContext(0, 0, 0, 0, crowd_fraction=0.5)
    spec = DiffusionSpec(a0=1.0)
    assert attendance(0, [[1.0, 2.0]], ctx, spec)[0] == pytest.approx(0.5 * math.log(4))
    assert np.all(attendance(0, [[0.0, 0.0]], ctx, spec) == 0)


@given(
    st.lists(st.floats(0, 5), min_size=4, max_size=4),
    st.integers(0, 3),
    st.floats(1e-3, 2),
)
def test_attendance_strictly_increasing(w, k, bump):
    ctx = MatchContext(0, 0, 0, 0, crowd_fraction=0.7)
    spec = DiffusionSpec(a0=0.9)
    w = np.array(w).reshape(2, 2)
    w2 = w.copy()
    w2.flat[k] += bump
    a, b = attendance(0, w, ctx, spec), attendance(0, w2, ctx, spec)
    player = k // 2
    assert np.all(b[2 * player : 2 * player + 2] > a[2 * player : 2 * player + 2])


def test_sigma_star_examples():
    # p = 1, A = 2, toss = 3, no weather, rho = (0.5, -0.5, 0) -> 4
    w = [[1.0]]
    ctx = MatchContext(3, 3, 3, 3, crowd_fraction=0.5)
    a0 = 2.0 / (0.5 * math.log(2.0))
    spec = DiffusionSpec(rho1=0.5, rho2=-0.5, p0=1.0, a0=a0)
    assert sigma_star(0, w, [0.0], ctx, None, spec, [0.0])[0] == pytest.approx(4.0)
    plain = DiffusionSpec(p0=1.0, a0=a0)
    assert sigma_star(0, w, [0.0], ctx, None, plain, [0.0])[0] == pytest.approx(6.0)
    # only the weather term left
    weather = WeatherSpec(1.5, 1.5, 0.5)
    zero_ctx = MatchContext(0, 0, 0, 0)
    got = sigma_star(0.3, [[1.0, 1.0]], [0.0, 0.0], zero_ctx, weather, DiffusionSpec(), [0.0, 0.0])
    assert np.allclose(got, max(weierstrass(weather, 0.3).value, 0.0))


def test_sigma_star_clamps_with_warning():
    ctx = MatchContext(3, 3, 3, 3, crowd_fraction=1.0)
    spec = DiffusionSpec(rho2=-0.99, p0=0.0, a0=5.0)
    with pytest.warns(NegativeDiffusion):
        out = sigma_star(0, [[5.0]], [0.0], ctx, None, spec, [0.0])
    assert out[0] == 0.0


def test_diffusion_is_gamma_sigma_hat_plus_sigma_star():
    m = scalar_model(gamma_opp=0.3, p0=0.2, kappa_p=0.5, a0=0.4, expectations=(1, 2, 3, 4), rho_corr=(0.1, 0.2, 0.3))
    rng = np.random.default_rng(0)
    for z in rng.normal(size=(20, 1)):
        direct = m.diffusion_spec.gamma_opp * m.sigma_hat() + m.sigma_star(0.0, z)
        assert np.array_equal(m.diffusion(0.0, z)[..., 0], direct)


def test_opposition_payoff_examples():
    consts = [lambda *a, c=c: c for c in (1.0, 2.0, 3.0)]
    mix = OppositionMix((0.2, 0.3, 0.5), *consts)
    assert opposition_payoff(mix, 20, 100, 0, 0, 0.5) == pytest.approx(2.3)
    only_first = OppositionMix((1.0, 0.0, 0.0))
    assert opposition_payoff(only_first, 20, 100, 0.3, 0.1, 0.5) == pytest.approx(only_first.a1(20, 100, 0.5))
    same = OppositionMix((0.1, 0.6, 0.3), *[lambda *a: 1.7] * 3)
    assert opposition_payoff(same, 10, 10, 0, 0, 0.2) == pytest.approx(1.7)
    with pytest.raises(InvalidProbabilities):
        OppositionMix((0.5, 0.5, 0.1))
    with pytest.raises(AngleOutOfRange):
        opposition_payoff(OppositionMix(k_bound=1), 20, 100, 3.5, 0, 0.5)


@given(st.permutations([0, 1, 2]), st.lists(st.floats(0.01, 1), min_size=3, max_size=3))
def test_opposition_payoff_permutation_invariant(perm, raw):
    probs = np.array(raw) / sum(raw)
    probs[-1] = 1.0 - probs[0] - probs[1]
    vals = (0.7, -1.3, 2.9)
    evals = [lambda *a, c=c: c for c in vals]
    base = opposition_payoff(OppositionMix(tuple(probs), *evals), 20, 100, 0, 0, 0.5)
    mix = OppositionMix(tuple(probs[list(perm)]), *[evals[k] for k in perm])
    assert opposition_payoff(mix, 20, 100, 0, 0, 0.5) == pytest.approx(base, abs=1e-12)


def test_belief_profile_table():
    assert belief_profile(3, 2, 0.25) == (0.75, 0.25)
    assert belief_profile(2, 2, 0.4)[0] == 0.4
    assert belief_profile(5, 1, 0.0)[0] == 1.0
    with pytest.raises(ZeroPayoff):
        belief_profile(1, 0, 0.5)


def test_drift_examples():
    m = scalar_model(z_star=0.7, kappa_d=1.3)
    assert m.drift(0, [0.7])[0] == 0.0
    z = np.linspace(-3, 3, 11)[:, None]
    diffs = np.abs(np.diff(m.drift(0, z)[:, 0]))
    assert np.all(diffs <= 1.3 * np.diff(z[:, 0]) + 1e-15)


def test_control_matrix_bounds():
    with pytest.raises(InvalidSpec):
        ControlMatrix([[1.0, -0.1]], 5.0)
    with pytest.raises(InvalidSpec):
        ControlMatrix([[6.0]], 5.0)
    assert np.allclose(ControlMatrix([[1.0, 3.0], [2.0, 2.0]], 5.0).intensities(), [2.0, 2.0])


def test_lipschitz_certificate():
    m = scalar_model(kappa_d=0.8, c_w=0.3, p0=0.1, kappa_p=0.7, a0=0.2, expectations=(1, 1, 2, 2), rho_corr=(0.3, -0.2, 0.4))
    observed = check_lipschitz(m, -4.0, 4.0, n_pairs=10_000, seed=1)
    assert observed <= m.lipschitz_constant()


def test_two_player_lipschitz_certificate():
    from goaldyn.scenario import build_model, load_scenario

    m = build_model(load_scenario("two-players"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        observed = check_lipschitz(m, -3.0, 3.0, n_pairs=10_000, seed=2)
    assert observed <= m.lipschitz_constant()


def test_running_reward_discount_and_weights():
    m = scalar_model(alpha=2.0, rho=0.25, h0="unit", w=1.5, n_matches=3)
    expected = 2.0 * 1.5 * sum(math.exp(-0.25 * k) for k in (1, 2, 3))
    assert m.running_reward(0.0, [0.3]) == pytest.approx(expected)


def test_h0_sqrt_is_concave_along_segments():
    m = scalar_model(h0="sqrt", w=1.0)
    rng = np.random.default_rng(3)
    for a, b in rng.uniform(0, 5, size=(200, 2)):
        for lam in (0.25, 0.5, 0.75):
            mid = m.h0(0, [lam * a + (1 - lam) * b])[0]
            chord = lam * m.h0(0, [a])[0] + (1 - lam) * m.h0(0, [b])[0]
            assert mid >= chord - 1e-12


def test_softplus_stable():
    assert softplus(np.array([1000.0]))[0] == pytest.approx(1000.0)
    assert softplus(np.array([-1000.0]))[0] >= 0.0
    assert softplus(np.array([0.0]))[0] == pytest.approx(math.log(2))
