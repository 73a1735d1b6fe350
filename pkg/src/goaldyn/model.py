"""Goal-dynamics model ingredients: drift, composite diffusion, weather,
match context, opposition payoff mixture and the running objective.

All state-dependent evaluators broadcast over leading axes of ``z`` so a
whole batch of paths (shape ``(n, d)``) or a grid of nodes can be pushed
through in one call.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import (
    AngleOutOfRange,
    DimensionMismatch,
    DomainPole,
    InvalidProbabilities,
    InvalidSpec,
    NegativeDiffusion,
    ZeroPayoff,
)

DEW_POLE = -237.3


def vapor_pressure(t_d: float) -> float:
    """Saturation vapour pressure in kPa at dew-point temperature ``t_d`` (Celsius)."""
    if t_d <= DEW_POLE:
        raise DomainPole(f"dew temperature {t_d} at or below the pole {DEW_POLE}")
    return 0.6108 * math.exp(17.27 * t_d / (t_d + 237.3))


def softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GoalState:
    z: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.z, dtype=float))
        if z.ndim != 1 or z.size < 1:
            raise DimensionMismatch("goal state must be a non-empty vector")
        if not np.all(np.isfinite(z)):
            raise InvalidSpec("goal state has non-finite entries")
        if self.time < 0:
            raise InvalidSpec("time must be >= 0")
        object.__setattr__(self, "z", z)


@dataclass(frozen=True)
class ControlMatrix:
    """Control intensities, one row per player and one column per slot."""

    w: np.ndarray
    w_max: float = 10.0

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.w, dtype=float))
        if np.any(w < 0) or np.any(w > self.w_max):
            raise InvalidSpec(f"control entries must lie in [0, {self.w_max}]")
        object.__setattr__(self, "w", w)

    def row(self, i: int) -> np.ndarray:
        return self.w[i]

    def intensities(self) -> np.ndarray:
        """Per-player scalar control W_i (row mean)."""
        return self.w.mean(axis=1)


@dataclass(frozen=True)
class WeatherSpec:
    s_w: float
    lambda_dew: float
    lambda_wind: float
    dew_temp: float | None = None
    truncation: int = 64

    def __post_init__(self):
        if not 1.0 < self.s_w < 2.0:
            raise InvalidSpec(f"weather.s_w must lie in (1, 2), got {self.s_w}")
        if self.lambda_dew + self.lambda_wind <= 1.0:
            raise InvalidSpec("weather.lambda_dew + weather.lambda_wind must exceed 1")
        if self.truncation < 1:
            raise InvalidSpec("weather.truncation must be >= 1")
        if self.dew_temp is not None and self.dew_temp <= DEW_POLE:
            raise InvalidSpec("weather.dew_temp must exceed -237.3")

    @classmethod
    def from_dew_point(cls, dew_temp, lambda_wind, s_w=1.5, truncation=64):
        return cls(s_w, vapor_pressure(dew_temp), lambda_wind, dew_temp, truncation)

    @property
    def base(self) -> float:
        return self.lambda_dew + self.lambda_wind


class WeierstrassValue(NamedTuple):
    value: np.ndarray | float
    tail_bound: float


def weierstrass_tail_bound(spec: WeatherSpec, n_terms: int | None = None) -> float:
    n = spec.truncation if n_terms is None else n_terms
    ratio = spec.base ** (spec.s_w - 2.0)
    return ratio ** (n + 1) / (1.0 - ratio)


def weierstrass(spec: WeatherSpec, u, n_terms: int | None = None) -> WeierstrassValue:
    """Truncated Weierstrass weather term and the geometric bound on what was dropped."""
    n = spec.truncation if n_terms is None else int(n_terms)
    if n < 1:
        raise InvalidSpec("truncation must be >= 1")
    lam = spec.base
    u_arr = np.asarray(u, dtype=float)
    # terms below 1e-300 in amplitude cannot change a double
    amp_decay = (spec.s_w - 2.0) * math.log(lam)
    n_eff = n if amp_decay == 0 else min(n, int(-700.0 / amp_decay) + 1)
    a = np.arange(1, n_eff + 1, dtype=float)
    with np.errstate(over="ignore"):
        freq = lam**a
    keep = np.isfinite(freq)
    amps, freq = np.exp(amp_decay * a[keep]), freq[keep]
    total = np.sin(u_arr[..., None] * freq) @ amps
    value = float(total) if np.ndim(total) == 0 else total
    return WeierstrassValue(value, weierstrass_tail_bound(spec, n))


@dataclass(frozen=True)
class MatchContext:
    e_zd1: float
    e_zd2: float
    e_zdn1: float
    e_zdn2: float
    toss_won: bool = False
    crowd_fraction: float = 0.5
    venue_home: bool = True

    def __post_init__(self):
        if min(self.e_zd1, self.e_zd2, self.e_zdn1, self.e_zdn2) < 0:
            raise InvalidSpec("pre-match goal expectations must be >= 0")
        if not 0.0 <= self.crowd_fraction <= 1.0:
            raise InvalidSpec("context.crowd_fraction must lie in [0, 1]")


def toss_branches(ctx: MatchContext) -> tuple[float, float]:
    """(toss-winner half-mix, toss-loser half-mix) before the outer 1/2 weight."""
    winner = 0.5 * ctx.e_zd2 + 0.5 * ctx.e_zdn1
    loser = 0.5 * ctx.e_zd1 + 0.5 * ctx.e_zdn2
    return winner, loser


def toss_expectation(ctx: MatchContext, mixture: bool | None = None) -> float:
    """Day / day-night toss term.

    ``mixture=None`` follows ``ctx.toss_won``: the winner keeps only its own
    half-weighted branch, otherwise the full two-branch mixture is returned.
    """
    winner, loser = toss_branches(ctx)
    use_mixture = (not ctx.toss_won) if mixture is None else mixture
    if use_mixture:
        return 0.5 * winner + 0.5 * loser
    return 0.5 * winner


@dataclass(frozen=True)
class DiffusionSpec:
    gamma_opp: float = 0.1
    rho1: float = 0.0
    rho2: float = 0.0
    rho3: float = 0.0
    p0: float = 0.0
    kappa_p: float = 0.0
    a0: float = 0.0
    sigma_hat_max: float = 1.0

    def __post_init__(self):
        if self.gamma_opp <= 0:
            raise InvalidSpec("diffusion.gamma_opp must be > 0")
        for name in ("rho1", "rho2", "rho3"):
            if not -1.0 < getattr(self, name) < 1.0:
                raise InvalidSpec(f"diffusion.{name} must lie in (-1, 1)")
        for name in ("p0", "kappa_p", "a0"):
            if getattr(self, name) < 0:
                raise InvalidSpec(f"diffusion.{name} must be >= 0")
        if self.sigma_hat_max <= 0:
            raise InvalidSpec("diffusion.sigma_hat_max must be > 0")


@dataclass(frozen=True)
class DriftSpec:
    z_star: np.ndarray
    kappa_d: float = 0.5
    c_w: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "z_star", np.atleast_1d(np.asarray(self.z_star, dtype=float)))
        if self.kappa_d <= 0:
            raise InvalidSpec("drift.kappa_d must be > 0")


# ---------------------------------------------------------------------------
# Opposition payoff mixture
# ---------------------------------------------------------------------------


def free_kick_payoff(v_ball, x, g_guess):
    return g_guess * math.tanh(v_ball / 30.0) * math.exp(-x / 400.0)


def dribble_payoff(v_ball, x, theta1, g_guess):
    return g_guess * math.tanh(v_ball / 30.0) * math.cos(theta1 / 2.0) ** 2 * math.exp(-x / 400.0)


def tackle_payoff(v_ball, x, theta1, theta2, g_guess):
    return (
        g_guess
        * math.tanh(v_ball / 30.0)
        * math.cos(theta1 / 2.0) ** 2
        * math.cos(theta2 / 2.0) ** 2
        * math.exp(-x / 400.0)
    )


PAYOFF_REGISTRY: dict[str, Callable] = {
    "free_kick": free_kick_payoff,
    "dribble": dribble_payoff,
    "tackle": tackle_payoff,
    "zero": lambda *args: 0.0,
}


@dataclass(frozen=True)
class OppositionMix:
    probs: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    a1: Callable = free_kick_payoff
    a2: Callable = dribble_payoff
    a3: Callable = tackle_payoff
    k_bound: int = 1

    def __post_init__(self):
        p = tuple(float(v) for v in self.probs)
        if len(p) != 3 or min(p) < 0:
            raise InvalidProbabilities("opposition probabilities must be three non-negative numbers")
        if abs(sum(p) - 1.0) > 1e-12:
            raise InvalidProbabilities(f"opposition probabilities sum to {sum(p)!r}, not 1")
        object.__setattr__(self, "probs", p)


@dataclass(frozen=True)
class OppositionState:
    """Ball speed (mph), distance (inches), angles and guess G at which the mixture is read."""

    v_ball: float = 20.0
    x: float = 100.0
    theta1: float = 0.0
    theta2: float = 0.0
    g_guess: float = 0.5


def opposition_payoff(mix: OppositionMix, v_ball, x, theta1, theta2, g_guess) -> float:
    p1, p2, p3 = mix.probs
    if abs(p1 + p2 + p3 - 1.0) > 1e-12:
        raise InvalidProbabilities("opposition probabilities do not sum to 1")
    bound = mix.k_bound * math.pi
    for name, angle in (("theta1", theta1), ("theta2", theta2)):
        if abs(angle) > bound:
            raise AngleOutOfRange(f"{name}={angle} outside [-{mix.k_bound}pi, {mix.k_bound}pi]")
    if not 0.0 <= g_guess <= 1.0:
        raise InvalidSpec("guess G must lie in [0, 1]")
    if v_ball < 0 or x < 0:
        raise InvalidSpec("ball speed and distance must be >= 0")
    return (
        p1 * mix.a1(v_ball, x, g_guess)
        + p2 * mix.a2(v_ball, x, theta1, g_guess)
        + p3 * mix.a3(v_ball, x, theta1, theta2, g_guess)
    )


def sigma_hat_from_payoff(payoff: float, sigma_hat_max: float) -> float:
    return float(_sigmoid(payoff)) * sigma_hat_max


# ---------------------------------------------------------------------------
# Diffusion ingredients
# ---------------------------------------------------------------------------


def pressure(s, z, expected_prev, spec: DiffusionSpec):
    z = np.asarray(z, dtype=float)
    expected_prev = np.asarray(expected_prev, dtype=float)
    if z.shape[-1:] != expected_prev.shape[-1:]:
        raise DimensionMismatch(f"z has {z.shape[-1]} slots, expectation has {expected_prev.shape[-1]}")
    return spec.p0 + spec.kappa_p * softplus(expected_prev - z)


def attendance(s, w, ctx: MatchContext, spec: DiffusionSpec):
    """Crowd term per goal slot: each player's value is shared by its slots."""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    per_player = spec.a0 * ctx.crowd_fraction * np.log1p(w.sum(axis=1))
    return np.repeat(per_player, w.shape[1])


def sigma_star(s, w, z, ctx, weather, spec: DiffusionSpec, expected_prev, warn=True):
    """Environment part of the diffusion, one non-negative entry per goal slot.

    Correlated cross terms are inner products of the slot vectors; the
    weather term carries no cross term. Negative entries are clamped to zero.
    """
    z = np.asarray(z, dtype=float)
    p = pressure(s, z, expected_prev, spec)
    a = attendance(s, w, ctx, spec)
    if a.shape[-1] != z.shape[-1]:
        raise DimensionMismatch("control shape does not match goal dimension")
    b = toss_expectation(ctx)
    z_e = 0.0 if weather is None else weierstrass(weather, s).value
    z_e = np.asarray(z_e, dtype=float)
    if z_e.ndim:
        z_e = z_e[..., None]
    cross = (
        spec.rho1 * np.sum(p * a, axis=-1, keepdims=True)
        + spec.rho2 * b * np.sum(a)
        + spec.rho3 * b * np.sum(p, axis=-1, keepdims=True)
    )
    raw = p + a + b + z_e + cross
    if np.any(raw < 0):
        if warn:
            warnings.warn(
                f"sigma* had {int(np.sum(raw < 0))} negative entries; clamped to 0",
                NegativeDiffusion,
                stacklevel=2,
            )
        raw = np.maximum(raw, 0.0)
    return raw


def belief_profile(payoff_a: float, payoff_c: float, v_mix: float) -> tuple[float, float]:
    """Beliefs of the two wing players about receiving the pass."""
    if payoff_c == 0 or payoff_a == 0:
        raise ZeroPayoff("wing payoffs must be non-zero")
    if payoff_a < 0 or payoff_c < 0:
        raise InvalidSpec("wing payoffs must be positive")
    if not 0.0 <= v_mix <= 1.0:
        raise InvalidSpec("v_mix must lie in [0, 1]")
    ratio = payoff_a / payoff_c
    belief_a = 1.0 - v_mix if ratio > 1 else v_mix
    belief_b = 1.0 - v_mix if 1.0 / ratio > 1 else v_mix
    return belief_a, belief_b


# ---------------------------------------------------------------------------
# Objective
# ---------------------------------------------------------------------------


def h0_sqrt(s, w, z):
    """sqrt(1 + W_i . z_i) per player, argument clipped at zero."""
    w = np.atleast_2d(w)
    n_players, n_slots = w.shape
    zb = np.asarray(z, dtype=float).reshape(np.shape(z)[:-1] + (n_players, n_slots))
    return np.sqrt(np.maximum(1.0 + np.sum(zb * w, axis=-1), 0.0))


def h0_goals(s, w, z):
    """sqrt(1 + total goals of player i); ignores the control."""
    w = np.atleast_2d(w)
    n_players, n_slots = w.shape
    zb = np.asarray(z, dtype=float).reshape(np.shape(z)[:-1] + (n_players, n_slots))
    return np.sqrt(np.maximum(1.0 + zb.sum(axis=-1), 0.0))


def h0_unit(s, w, z):
    n_players = np.atleast_2d(w).shape[0]
    return np.ones(np.shape(z)[:-1] + (n_players,))


def h0_zero(s, w, z):
    return np.zeros_like(h0_unit(s, w, z))


H0_REGISTRY: dict[str, Callable] = {
    "sqrt": h0_sqrt,
    "goals": h0_goals,
    "unit": h0_unit,
    "zero": h0_zero,
}


@dataclass(frozen=True)
class ObjectiveSpec:
    alpha: np.ndarray
    rho_disc: np.ndarray
    h0: Callable = h0_sqrt
    h0_star: float = 0.0
    n_matches: int = 1
    epsilon_floor: float = 0.0

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        rho = np.atleast_1d(np.asarray(self.rho_disc, dtype=float))
        if rho.shape != alpha.shape:
            rho = np.broadcast_to(rho, alpha.shape).copy()
        if not np.all(np.isfinite(alpha)):
            raise InvalidSpec("objective.alpha must be finite")
        # rho = 0 admitted for undiscounted checks
        if np.any(rho < 0) or np.any(rho >= 1):
            raise InvalidSpec("objective.rho_disc must lie in [0, 1)")
        if self.h0_star < 0:
            raise InvalidSpec("objective.h0_star must be >= 0")
        if self.n_matches < 1:
            raise InvalidSpec("objective.n_matches must be >= 1")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "rho_disc", rho)

    @property
    def n_players(self) -> int:
        return self.alpha.size

    def discount_sums(self) -> np.ndarray:
        """sum_{m=1..M} exp(-rho_i m) per player."""
        m = np.arange(1, self.n_matches + 1)
        return np.exp(-np.outer(self.rho_disc, m)).sum(axis=1)


# ---------------------------------------------------------------------------
# Full model
# ---------------------------------------------------------------------------


@dataclass
class ModelSpec:
    """Every ingredient of the controlled goal SDE and its objective.

    Goal slots are laid out player-major: slot ``i * n_slots + j`` belongs
    to player ``i``. ``noise=False`` switches the stochastic term off.
    """

    drift_spec: DriftSpec
    diffusion_spec: DiffusionSpec
    context: MatchContext
    objective: ObjectiveSpec
    control: ControlMatrix
    weather: WeatherSpec | None = None
    opposition: OppositionMix = field(default_factory=OppositionMix)
    opposition_state: OppositionState = field(default_factory=OppositionState)
    expected_prev: np.ndarray | None = None
    noise_dim: int | None = None
    loading: np.ndarray | None = None
    noise: bool = True

    def __post_init__(self):
        n_players, n_slots = self.control.w.shape
        d = n_players * n_slots
        if self.drift_spec.z_star.size == 1 and d > 1:
            self.drift_spec = DriftSpec(
                np.full(d, self.drift_spec.z_star[0]), self.drift_spec.kappa_d, self.drift_spec.c_w
            )
        if self.drift_spec.z_star.size != d:
            raise DimensionMismatch(f"z_star has {self.drift_spec.z_star.size} entries, expected {d}")
        if self.objective.n_players != n_players:
            raise DimensionMismatch(
                f"objective has {self.objective.n_players} players, control has {n_players}"
            )
        if self.expected_prev is None:
            self.expected_prev = np.zeros(d)
        self.expected_prev = np.broadcast_to(np.asarray(self.expected_prev, dtype=float), (d,)).copy()
        if self.noise_dim is None:
            self.noise_dim = d if self.loading is None else np.shape(self.loading)[1]
        if self.loading is None:
            if self.noise_dim == d:
                self.loading = np.eye(d)
            else:
                self.loading = np.ones((d, self.noise_dim)) / math.sqrt(self.noise_dim)
        self.loading = np.asarray(self.loading, dtype=float)
        if self.loading.shape != (d, self.noise_dim):
            raise DimensionMismatch(f"loading must be {d}x{self.noise_dim}")
        # fails fast on bad angles / probabilities
        self.sigma_hat()

    @property
    def dim(self) -> int:
        return self.control.w.size

    @property
    def n_players(self) -> int:
        return self.control.w.shape[0]

    def _w(self, w):
        return self.control.w if w is None else np.atleast_2d(np.asarray(w, dtype=float))

    def drift(self, s, z, w=None):
        w = self._w(w)
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dim:
            raise DimensionMismatch(f"z has {z.shape[-1]} slots, model has {self.dim}")
        return self.drift_spec.kappa_d * (self.drift_spec.z_star - z) + self.drift_spec.c_w * w.ravel()

    def sigma_hat(self) -> float:
        st = self.opposition_state
        payoff = opposition_payoff(self.opposition, st.v_ball, st.x, st.theta1, st.theta2, st.g_guess)
        return sigma_hat_from_payoff(payoff, self.diffusion_spec.sigma_hat_max)

    def sigma_star(self, s, z, w=None, warn=True):
        return sigma_star(
            s, self._w(w), z, self.context, self.weather, self.diffusion_spec, self.expected_prev, warn=warn
        )

    def diffusion_vector(self, s, z, w=None, warn=True):
        """gamma * sigma_hat + sigma*, one entry per slot."""
        return self.diffusion_spec.gamma_opp * self.sigma_hat() + self.sigma_star(s, z, w, warn=warn)

    def diffusion(self, s, z, w=None):
        """Diffusion matrix of shape ``(..., d, p)``."""
        vec = self.diffusion_vector(s, z, w)
        if not self.noise:
            vec = np.zeros_like(vec)
        return vec[..., :, None] * self.loading

    def covariance(self, s, z, w=None):
        sig = self.diffusion(s, z, w)
        return sig @ np.swapaxes(sig, -1, -2)

    def h0(self, s, z, w=None):
        return self.objective.h0(s, self._w(w), z)

    def running_reward(self, s, z, w=None, alpha=None, h0_control=None):
        """sum_i sum_m exp(-rho_i m) alpha_i W_i h0_i at (s, w, z)."""
        w = self._w(w)
        alpha = self.objective.alpha if alpha is None else np.asarray(alpha, dtype=float)
        hw = w if h0_control is None else h0_control
        h = self.objective.h0(s, hw, z)
        weights = self.objective.discount_sums() * alpha * w.mean(axis=1)
        return np.sum(h * weights, axis=-1)

    def lipschitz_constant(self) -> float:
        """K2 bounding |mu(z)-mu(z~)| + |sigma(z)-sigma(z~)|_F by K2 |z - z~|.

        Only pressure depends on z inside sigma; softplus is 1-Lipschitz and
        clamping at zero is 1-Lipschitz, so the bound is analytic.
        """
        ds = self.diffusion_spec
        a = attendance(0.0, self.control.w, self.context, ds)
        b = toss_expectation(self.context)
        d = self.dim
        cross = np.linalg.norm(ds.rho1 * a + ds.rho3 * b * np.ones(d))
        row_norm = float(np.max(np.linalg.norm(self.loading, axis=1))) if self.noise else 0.0
        k_sigma = row_norm * ds.kappa_p * (1.0 + math.sqrt(d) * cross)
        return self.drift_spec.kappa_d + k_sigma + abs(self.drift_spec.c_w) * self.control.w_max


def check_lipschitz(model: ModelSpec, low, high, n_pairs=10_000, seed=0, s=0.0) -> float:
    """Largest observed ratio (|dmu| + |dsigma|_F) / |dz| over random pairs in a box."""
    rng = np.random.default_rng(seed)
    d = model.dim
    z1 = rng.uniform(low, high, size=(n_pairs, d))
    z2 = rng.uniform(low, high, size=(n_pairs, d))
    dmu = np.linalg.norm(model.drift(s, z1) - model.drift(s, z2), axis=-1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativeDiffusion)
        dsig = np.linalg.norm(model.diffusion(s, z1) - model.diffusion(s, z2), axis=(-2, -1))
    dz = np.linalg.norm(z1 - z2, axis=-1)
    return float(np.max((dmu + dsig) / dz))


def scalar_model(
    z_star=0.0,
    kappa_d=1.0,
    c_w=0.0,
    w=1.0,
    alpha=1.0,
    rho=0.1,
    h0="sqrt",
    gamma_opp=0.1,
    p0=0.0,
    kappa_p=0.0,
    a0=0.0,
    crowd=0.5,
    expectations: Sequence[float] = (0.0, 0.0, 0.0, 0.0),
    weather: WeatherSpec | None = None,
    rho_corr=(0.0, 0.0, 0.0),
    h0_star=0.0,
    n_matches=1,
    noise=True,
    sigma_hat_max=1.0,
    w_max=10.0,
    opposition: OppositionMix | None = None,
    opposition_state: OppositionState | None = None,
    expected_prev=0.0,
) -> ModelSpec:
    """One player, one slot: the configuration most checks run on."""
    h0_fn = H0_REGISTRY[h0] if isinstance(h0, str) else h0
    return ModelSpec(
        drift_spec=DriftSpec([z_star], kappa_d, c_w),
        diffusion_spec=DiffusionSpec(
            gamma_opp, *rho_corr, p0=p0, kappa_p=kappa_p, a0=a0, sigma_hat_max=sigma_hat_max
        ),
        context=MatchContext(*expectations, crowd_fraction=crowd),
        objective=ObjectiveSpec([alpha], [rho], h0_fn, h0_star, n_matches),
        control=ControlMatrix([[w]], w_max),
        weather=weather,
        opposition=opposition or OppositionMix(),
        opposition_state=opposition_state or OppositionState(),
        expected_prev=[expected_prev],
        noise=noise,
    )
