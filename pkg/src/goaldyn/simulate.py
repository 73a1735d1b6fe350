"""Seeded SDE paths, rain stoppage, objective estimates and generator estimates.

Every path owns its own random stream, derived from ``(seed, stream)``
through :class:`numpy.random.SeedSequence`, so results do not depend on how
paths are batched and a single path can be regenerated in isolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

import numpy as np

from .errors import InvalidSpec, NonFinite, NonPositiveH

CHUNK = 4096


@dataclass(frozen=True)
class BrownianDriver:
    seed: int
    p_dims: int
    dt: float
    stream: int = 0
    phase: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidSpec("dt must be > 0")
        if self.p_dims < 1:
            raise InvalidSpec("Brownian dimension must be >= 1")

    def generator(self, stream: int | None = None) -> np.random.Generator:
        s = self.stream if stream is None else stream
        key = (s,) if self.phase == 0 else (s, self.phase)
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=key)))

    def normals(self, n_steps: int, n_paths: int = 1) -> np.ndarray:
        """Standard normals of shape ``(n_paths, n_steps, p)``; path k uses stream ``stream + k``."""
        out = np.empty((n_paths, n_steps, self.p_dims))
        for k in range(n_paths):
            out[k] = self.generator(self.stream + k).standard_normal((n_steps, self.p_dims))
        return out

    def resumed(self) -> "BrownianDriver":
        """Fresh, independent driver for play after a stoppage."""
        return replace(self, phase=self.phase + 1)

    def with_stream(self, stream: int) -> "BrownianDriver":
        return replace(self, stream=stream)


def time_grid(t0: float, t1: float, dt: float) -> np.ndarray:
    """t0, t0+dt, ... with a final partial step landing exactly on t1."""
    if t1 < t0:
        raise InvalidSpec("horizon precedes start time")
    n = int(math.floor((t1 - t0) / dt + 1e-9))
    grid = t0 + dt * np.arange(n + 1)
    if t1 - grid[-1] > 1e-12 * max(1.0, abs(t1)):
        grid = np.append(grid, t1)
    else:
        grid[-1] = t1
    return grid


@dataclass
class Path:
    """Trajectories on a shared grid; ``states`` has shape ``(n_paths, len(times), d)``."""

    times: np.ndarray
    states: np.ndarray
    stopped_at: float | None = None
    resumed_at: float | None = None
    epsilon_resume: float | None = None
    post_rain_from: int | None = None

    def __post_init__(self):
        if self.states.ndim == 2:
            self.states = self.states[None]
        if self.states.shape[1] != self.times.size:
            raise InvalidSpec("states and times disagree in length")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise InvalidSpec("path times must be strictly increasing")

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def final(self) -> np.ndarray:
        return self.states[:, -1, :]


def _as_start(z0, d: int) -> np.ndarray:
    z = np.atleast_1d(np.asarray(getattr(z0, "z", z0), dtype=float))
    if z.shape[-1] != d:
        raise InvalidSpec(f"start state has {z.shape[-1]} slots, model has {d}")
    return z


def _euler_steps(model, times, z, dW, w):
    """March the batch ``z`` (n, d) along ``times`` using unit normals ``dW`` (n, T-1, p)."""
    n, d = z.shape
    out = np.empty((n, times.size, d))
    out[:, 0] = z
    for k in range(times.size - 1):
        s = times[k]
        h = times[k + 1] - s
        mu = model.drift(s, z, w)
        sig = model.diffusion(s, z, w)
        z = z + mu * h + np.einsum("ndp,np->nd", sig, dW[:, k]) * math.sqrt(h)
        if not np.all(np.isfinite(z)):
            raise NonFinite(f"state left the finite range at step {k + 1} (t={times[k + 1]:.6g})", step=k + 1)
        out[:, k + 1] = z
    return out


def euler_maruyama(model, z0, horizon: float, driver: BrownianDriver, n_paths: int = 1, t0: float = 0.0, w=None) -> Path:
    """Euler-Maruyama paths on ``[t0, horizon]``."""
    if driver.p_dims != model.noise_dim:
        raise InvalidSpec(f"driver has {driver.p_dims} dims, model expects {model.noise_dim}")
    times = time_grid(t0, horizon, driver.dt)
    z = np.broadcast_to(_as_start(z0, model.dim), (n_paths, model.dim)).copy()
    dW = driver.normals(times.size - 1, n_paths)
    return Path(times, _euler_steps(model, times, z, dW, w))


# ---------------------------------------------------------------------------
# Rain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StoppingConfig:
    b: float
    epsilon_resume: float
    rain_driver: BrownianDriver

    def __post_init__(self):
        if math.isnan(self.b):
            raise InvalidSpec("rain threshold b must not be NaN")
        if self.epsilon_resume < 0:
            raise InvalidSpec("epsilon_resume must be >= 0")
        if self.rain_driver.p_dims != 1:
            raise InvalidSpec("rain driver must be one-dimensional")


def first_passage_times(cfg: StoppingConfig, horizon: float, n_paths: int, chunk: int = CHUNK) -> np.ndarray:
    """First grid time each rain path exceeds ``b``; ``inf`` where it never does."""
    if horizon <= 0:
        raise InvalidSpec("horizon must be > 0")
    out = np.full(n_paths, np.inf)
    if cfg.b < 0:
        out[:] = 0.0
        return out
    if math.isinf(cfg.b):
        return out
    times = time_grid(0.0, horizon, cfg.rain_driver.dt)
    scale = np.sqrt(np.diff(times))
    drv = cfg.rain_driver
    for start in range(0, n_paths, chunk):
        m = min(chunk, n_paths - start)
        incr = drv.with_stream(drv.stream + start).normals(times.size - 1, m)[..., 0] * scale
        b_path = np.cumsum(incr, axis=1)
        hit = b_path > cfg.b
        any_hit = hit.any(axis=1)
        first = np.argmax(hit, axis=1)
        out[start : start + m] = np.where(any_hit, times[first + 1], np.inf)
    return out


def first_passage_rain(cfg: StoppingConfig, horizon: float) -> float | None:
    """Rain stoppage time of the driver's own stream, or ``None`` within the horizon."""
    t = first_passage_times(cfg, horizon, 1)[0]
    return None if math.isinf(t) else float(t)


def reflection_cdf(b: float, t):
    """P(first passage of level b >= 0 by time t) = 2 Phi(-b / sqrt t)."""
    from scipy.special import ndtr

    t = np.asarray(t, dtype=float)
    return 2.0 * ndtr(-b / np.sqrt(t))


def simulate_match(model, z0, cfg: StoppingConfig, horizon: float, driver: BrownianDriver, w=None) -> Path:
    """One match with a possible rain stoppage.

    Play runs on [0, t~]; the state is held during the stoppage and play
    resumes on (t~, horizon - eps] with a fresh noise stream. When
    ``eps = horizon - t~`` the match is abandoned at t~.
    """
    t_rain = first_passage_rain(cfg, horizon)
    if t_rain is None:
        return euler_maruyama(model, z0, horizon, driver, 1, w=w)
    eps = min(cfg.epsilon_resume, horizon - t_rain)
    if t_rain > 0:
        first = euler_maruyama(model, z0, t_rain, driver, 1, w=w)
    else:
        first = Path(np.array([0.0]), _as_start(z0, model.dim)[None, None, :])
    end = horizon - eps
    if end - t_rain <= 1e-12:
        return Path(first.times, first.states, stopped_at=t_rain, epsilon_resume=eps)
    second = euler_maruyama(model, first.final[0], end, driver.resumed(), 1, t0=t_rain, w=w)
    times = np.concatenate([first.times, second.times[1:]])
    states = np.concatenate([first.states, second.states[:, 1:]], axis=1)
    return Path(times, states, t_rain, t_rain, eps, post_rain_from=first.times.size - 1)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


class Estimate(NamedTuple):
    value: float
    std_error: float
    n_paths: int
    floor_violated: bool = False


def path_rewards(model, path: Path, w=None, alpha=None, start_index: int = 0) -> np.ndarray:
    """Trapezoidal time integral of the running reward along each path."""
    times = path.times[start_index:]
    if times.size < 2:
        return np.zeros(path.n_paths)
    states = path.states[:, start_index:]
    reward = np.stack([model.running_reward(s, states[:, k], w, alpha) for k, s in enumerate(times)], axis=1)
    return np.trapezoid(reward, times, axis=1)


def _summarize(model, samples: np.ndarray) -> Estimate:
    n = samples.size
    mean = float(np.mean(samples)) if n else 0.0
    se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    value = model.objective.h0_star + mean
    return Estimate(value, se, n, bool(value < model.objective.epsilon_floor))


def objective_estimate(
    model,
    z0,
    horizon: float,
    n_paths: int,
    driver: BrownianDriver,
    post_rain: bool = False,
    cfg: StoppingConfig | None = None,
    w=None,
    alpha=None,
) -> Estimate:
    """h0* plus the Monte Carlo mean of the integrated running reward.

    With ``post_rain`` each path is a rain-interrupted match and only the
    resumed stretch is integrated; a path with no stoppage (or an abandoned
    match) contributes zero.
    """
    if n_paths < 2:
        raise InvalidSpec("n_paths must be >= 2")
    if not post_rain:
        samples = np.concatenate(
            [
                path_rewards(
                    model,
                    euler_maruyama(model, z0, horizon, driver.with_stream(driver.stream + a), min(CHUNK, n_paths - a), w=w),
                    w,
                    alpha,
                )
                for a in range(0, n_paths, CHUNK)
            ]
        )
        return _summarize(model, samples)
    if cfg is None:
        raise InvalidSpec("post-rain objective needs a stopping config")
    samples = np.zeros(n_paths)
    for k in range(n_paths):
        kcfg = replace(cfg, rain_driver=cfg.rain_driver.with_stream(cfg.rain_driver.stream + k))
        path = simulate_match(model, z0, kcfg, horizon, driver.with_stream(driver.stream + k), w)
        if path.post_rain_from is not None:
            samples[k] = path_rewards(model, path, w, alpha, path.post_rain_from)[0]
    return _summarize(model, samples)


def _step_ahead(model, z, s, delta, n_paths, driver, n_sub, w=None):
    drv = replace(driver, dt=delta / n_sub)
    return euler_maruyama(model, z, s + delta, drv, n_paths, t0=s, w=w).final


class GeneratorEstimate(NamedTuple):
    value: float
    std_error: float


def estimate_generator(h: Callable, model, z, s: float, delta: float, n_paths: int, driver: BrownianDriver, n_sub: int = 1, w=None) -> GeneratorEstimate:
    """(E h(Z_{s+delta}) - h(z)) / delta by Monte Carlo from the point z at time s."""
    if delta <= 0:
        raise InvalidSpec("delta must be > 0")
    z = _as_start(z, model.dim)
    zt = _step_ahead(model, z, s, delta, n_paths, driver, n_sub, w)
    diff = (np.asarray(h(zt), dtype=float) - float(h(z))) / delta
    se = float(np.std(diff, ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    return GeneratorEstimate(float(np.mean(diff)), se)


def quantum_quotient(mean_h: float, h_z: float, eps: float) -> float:
    """[log E(eps^2 h) - log(eps^2 h(z))] / log E(eps^2), written in stable form."""
    return math.log(mean_h / h_z) / (2.0 * math.log(eps))


def estimate_quantum_operator(
    h: Callable, model, z, s: float, eps_sequence, n_paths: int, driver: BrownianDriver, n_sub: int = 8, w=None
) -> np.ndarray:
    """Quotient sequence with Z read at time s + eps for each eps."""
    z = _as_start(z, model.dim)
    h_z = float(h(z))
    if not h_z > 0:
        raise NonPositiveH(f"h(z) = {h_z} must be > 0")
    out = []
    for eps in eps_sequence:
        if not 0 < eps < 1:
            raise InvalidSpec("each eps must lie in (0, 1) so that log(eps^2) != 0")
        zt = _step_ahead(model, z, s, eps, n_paths, driver, n_sub, w)
        mean_h = float(np.mean(h(zt)))
        if not mean_h > 0:
            raise NonPositiveH(f"E h(Z) = {mean_h} must be > 0 at eps={eps}")
        out.append(quantum_quotient(mean_h, h_z, eps))
    return np.asarray(out)
