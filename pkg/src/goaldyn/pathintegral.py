"""Action density, Laplace step, kernel propagation and the optimal player weight.

The action integrand ``f`` collects the discounted running reward, a smooth
penalization ``g`` and the Ito terms of ``g`` along the goal SDE. Its
Gaussian (Laplace) integral drives a grid transition kernel, and the
derivative of ``f`` in a player's control gives the first-order condition
whose root is the optimal weight.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidSpec, MassLoss, NoSignChange, SingularFOC, SingularHessian
from .simulate import BrownianDriver, euler_maruyama

GAMMA_LQG = math.sqrt(8.0 / 3.0)


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------


def fd_gradient(fn: Callable, z: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order central gradient of a batched scalar field ``fn(z) -> (...)``."""
    z = np.asarray(z, dtype=float)
    d = z.shape[-1]
    out = np.empty(z.shape)
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        out[..., k] = (-fn(z + 2 * e) + 8 * fn(z + e) - 8 * fn(z - e) + fn(z - 2 * e)) / (12 * h)
    return out


def fd_hessian(fn: Callable, z: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order central Hessian of a batched scalar field."""
    z = np.asarray(z, dtype=float)
    d = z.shape[-1]
    out = np.empty(z.shape + (d,))
    f0 = fn(z)
    eye = np.eye(d) * h
    for i in range(d):
        ei = eye[i]
        out[..., i, i] = (
            -fn(z + 2 * ei) + 16 * fn(z + ei) - 30 * f0 + 16 * fn(z - ei) - fn(z - 2 * ei)
        ) / (12 * h * h)
        for j in range(i + 1, d):
            ej = eye[j]

            def mixed(a):
                return fn(z + a * ei + a * ej) - fn(z + a * ei - a * ej) - fn(z - a * ei + a * ej) + fn(z - a * ei - a * ej)

            val = (16 * mixed(1.0) - mixed(2.0)) / (48 * h * h)
            out[..., i, j] = val
            out[..., j, i] = val
    return out


# ---------------------------------------------------------------------------
# Penalization g and action settings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PenalizationG:
    """Smooth penalization g(s, z) with optional analytic derivatives.

    Missing derivatives fall back to central differences: step ``h_fd`` for
    first derivatives and ``h_hess`` for second derivatives.
    """

    g: Callable
    grad: Callable | None = None
    hess: Callable | None = None
    dtime: Callable | None = None
    h_fd: float = 1e-5
    h_hess: float = 1e-3

    def value(self, s, z):
        return np.asarray(self.g(s, np.asarray(z, dtype=float)), dtype=float)

    def gradient(self, s, z):
        if self.grad is not None:
            return np.asarray(self.grad(s, z), dtype=float)
        return fd_gradient(lambda x: self.g(s, x), z, self.h_fd)

    def hessian(self, s, z):
        if self.hess is not None:
            return np.asarray(self.hess(s, z), dtype=float)
        return fd_hessian(lambda x: self.g(s, x), z, self.h_hess)

    def time_derivative(self, s, z):
        if self.dtime is not None:
            return np.asarray(self.dtime(s, z), dtype=float)
        h = self.h_fd * np.maximum(1.0, np.abs(s))
        return (self.value(s + h, z) - self.value(s - h, z)) / (2 * h)

    def numeric(self) -> "PenalizationG":
        """Same g with every derivative taken by finite differences."""
        return PenalizationG(self.g, h_fd=self.h_fd, h_hess=self.h_hess)

    @classmethod
    def saturating(cls, c: float = 0.5, g0: float = 0.1) -> "PenalizationG":
        """1 - exp(-c |z|^2) + g0: positive, bounded, non-decreasing in |z|."""
        if c <= 0 or g0 <= 0:
            raise InvalidSpec("penalization needs c > 0 and g0 > 0")

        def g(s, z):
            return 1.0 - np.exp(-c * np.sum(z * z, axis=-1)) + g0

        def grad(s, z):
            z = np.asarray(z, dtype=float)
            return 2 * c * z * np.exp(-c * np.sum(z * z, axis=-1))[..., None]

        def hess(s, z):
            z = np.asarray(z, dtype=float)
            e = np.exp(-c * np.sum(z * z, axis=-1))[..., None, None]
            d = z.shape[-1]
            return e * (2 * c * np.eye(d) - 4 * c * c * z[..., :, None] * z[..., None, :])

        return cls(g, grad, hess, lambda s, z: np.zeros(np.shape(z)[:-1]))

    @classmethod
    def quadratic(cls, scale: float = 1.0, g0: float = 0.0) -> "PenalizationG":
        """scale * |z|^2 + g0."""

        def g(s, z):
            return scale * np.sum(np.asarray(z) ** 2, axis=-1) + g0

        def grad(s, z):
            return 2 * scale * np.asarray(z, dtype=float)

        def hess(s, z):
            z = np.asarray(z, dtype=float)
            d = z.shape[-1]
            return np.broadcast_to(2 * scale * np.eye(d), z.shape + (d,)).copy()

        return cls(g, grad, hess, lambda s, z: np.zeros(np.shape(z)[:-1]))

    @classmethod
    def constant(cls, c: float) -> "PenalizationG":
        def g(s, z):
            return np.full(np.shape(z)[:-1], float(c))

        return cls(
            g,
            lambda s, z: np.zeros(np.shape(z)),
            lambda s, z: np.zeros(np.shape(z) + (np.shape(z)[-1],)),
            lambda s, z: np.zeros(np.shape(z)[:-1]),
        )


G_REGISTRY = {
    "saturating": PenalizationG.saturating,
    "quadratic": PenalizationG.quadratic,
    "constant": PenalizationG.constant,
}


@dataclass(frozen=True)
class ActionSpec:
    lambda_dyn: float = 0.0
    lambda_lqg: float = 0.0
    field_sample: Callable | float = 0.0

    def __post_init__(self):
        if self.lambda_dyn < 0 or self.lambda_lqg < 0:
            raise InvalidSpec("action multipliers must be >= 0")

    def field_at(self, s) -> float:
        return float(self.field_sample(s)) if callable(self.field_sample) else float(self.field_sample)


def action_density(
    s,
    z,
    model,
    action: ActionSpec,
    g: PenalizationG,
    w=None,
    alpha=None,
    increment=None,
    dt: float | None = None,
    h0_control=None,
):
    """Integrand of the action at time ``s`` and state(s) ``z``.

    When ``increment`` (with ``dt``) is given, the dynamics multiplier adds
    ``lambda_dyn * sum(increment - mu dt) / dt``; on-dynamics evaluation
    leaves it out.
    """
    z = np.asarray(z, dtype=float)
    mu = model.drift(s, z, w)
    cov = model.covariance(s, z, w)
    out = model.running_reward(s, z, w, alpha, h0_control)
    out = out + g.value(s, z) + g.time_derivative(s, z)
    out = out + np.sum(g.gradient(s, z) * mu, axis=-1)
    out = out + 0.5 * np.sum(cov * g.hessian(s, z), axis=(-2, -1))
    if action.lambda_lqg:
        out = out + action.lambda_lqg * math.exp(GAMMA_LQG * action.field_at(s))
    if increment is not None:
        if dt is None or dt <= 0:
            raise InvalidSpec("an off-dynamics increment needs dt > 0")
        resid = np.asarray(increment, dtype=float) - mu * dt
        out = out + action.lambda_dyn * np.sum(resid, axis=-1) / dt
    return out


@dataclass
class ActionField:
    """f(s, z) bound to a model, action settings and penalization."""

    model: object
    action: ActionSpec
    g: PenalizationG
    w: np.ndarray | None = None
    alpha: np.ndarray | None = None

    def __call__(self, s, z):
        return action_density(s, z, self.model, self.action, self.g, self.w, self.alpha)


# ---------------------------------------------------------------------------
# Laplace step
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LaplaceApprox:
    theta: np.ndarray
    r_vec: np.ndarray
    f0: float
    n_norm: float
    eps_step: float
    floored: bool = False

    @property
    def integral(self) -> float:
        """Gaussian integral of exp(-eps f) about the expansion point."""
        quad = float(self.r_vec @ np.linalg.solve(self.theta, self.r_vec))
        return self.n_norm * math.exp(-self.eps_step * self.f0 + 0.5 * self.eps_step * quad)

    @property
    def log_integral(self) -> float:
        quad = float(self.r_vec @ np.linalg.solve(self.theta, self.r_vec))
        return math.log(self.n_norm) - self.eps_step * self.f0 + 0.5 * self.eps_step * quad


def regularize_hessian(theta: np.ndarray, floor: float = 1e-10) -> tuple[np.ndarray, bool]:
    sym = 0.5 * (theta + theta.T)
    vals, vecs = np.linalg.eigh(sym)
    clipped = np.maximum(vals, floor)
    changed = bool(np.any(vals < floor))
    return (vecs * clipped) @ vecs.T, changed


def laplace_step(
    f: Callable,
    point,
    eps_step: float,
    h: float = 1e-2,
    floor: float = 1e-10,
    det_factor: float = 1.0 + 1e-6,
    grad: Callable | None = None,
    hess: Callable | None = None,
) -> LaplaceApprox:
    """Second-order expansion of ``f`` at ``point`` and its closed-form Gaussian integral.

    The normaliser is sqrt((2 pi)^d / det(eps * Theta)).
    """
    if eps_step <= 0:
        raise InvalidSpec("eps_step must be > 0")
    x = np.atleast_1d(np.asarray(point, dtype=float))
    d = x.size
    f0 = float(f(x))
    r = np.asarray(grad(x), dtype=float) if grad else fd_gradient(f, x, h)
    raw = np.asarray(hess(x), dtype=float) if hess else fd_hessian(f, x, h)
    theta, changed = regularize_hessian(np.atleast_2d(raw), floor)
    floored = False
    if changed:
        det_raw = abs(np.linalg.det(0.5 * (raw + raw.T)))
        det_new = np.linalg.det(theta)
        if det_raw == 0 or det_new / det_raw > det_factor or det_raw / det_new > det_factor:
            floored = True
            warnings.warn("Hessian eigenvalue floor changed its determinant", SingularHessian, stacklevel=2)
    sign, logdet = np.linalg.slogdet(theta)
    n_norm = math.exp(0.5 * (d * math.log(2 * math.pi) - d * math.log(eps_step) - logdet))
    return LaplaceApprox(theta, np.atleast_1d(r), f0, n_norm, eps_step, floored)


def gaussian_integral(q: np.ndarray, f0: float, eps_step: float) -> float:
    """Exact integral of exp(-eps (f0 + x'Qx/2)) over R^d."""
    q = np.atleast_2d(q)
    d = q.shape[0]
    return math.sqrt((2 * math.pi) ** d / (eps_step**d * np.linalg.det(q))) * math.exp(-eps_step * f0)


# ---------------------------------------------------------------------------
# Transition kernel on a grid
# ---------------------------------------------------------------------------


def trapezoid_weights(axis: np.ndarray) -> np.ndarray:
    w = np.zeros_like(axis)
    dx = np.diff(axis)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


@dataclass
class TransitionKernel:
    axes: tuple[np.ndarray, ...]
    psi: np.ndarray
    s_now: float = 0.0
    psi_pre: np.ndarray | None = None
    mass_pre: float = 1.0
    eps_last: float | None = None
    prev: "TransitionKernel | None" = field(default=None, repr=False)

    def __post_init__(self):
        self.axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        shape = tuple(a.size for a in self.axes)
        self.psi = np.asarray(self.psi, dtype=float)
        if self.psi.shape != shape:
            raise InvalidSpec(f"psi has shape {self.psi.shape}, grid is {shape}")
        if np.any(self.psi < 0) or not np.all(np.isfinite(self.psi)):
            raise InvalidSpec("psi must be finite and non-negative")
        for a in self.axes:
            if a.size < 2 or np.any(np.diff(a) <= 0):
                raise InvalidSpec("grid axes need >= 2 strictly increasing nodes")

    @property
    def dim(self) -> int:
        return len(self.axes)

    def weights(self) -> np.ndarray:
        out = np.ones(())
        for a in self.axes:
            out = np.multiply.outer(out, trapezoid_weights(a))
        return out

    def nodes(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def mass(self, values=None) -> float:
        v = self.psi if values is None else values
        return float(np.sum(v * self.weights()))

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        w = self.psi * self.weights()
        w = w / w.sum()
        x = self.nodes().reshape(-1, self.dim)
        p = w.ravel()
        mean = p @ x
        dx = x - mean
        return mean, (dx * p[:, None]).T @ dx

    def interior(self) -> tuple[slice, ...]:
        return tuple(slice(1, -1) for _ in self.axes)


def gaussian_kernel(axes: Sequence[np.ndarray], mean, cov, s: float = 0.0) -> TransitionKernel:
    axes = tuple(np.asarray(a, dtype=float) for a in axes)
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    prec = np.linalg.inv(np.atleast_2d(cov))
    x = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1) - mean
    psi = np.exp(-0.5 * np.einsum("...i,ij,...j->...", x, prec, x))
    k = TransitionKernel(axes, psi, s)
    k.psi = k.psi / k.mass()
    return k


def propagate_kernel(
    kernel: TransitionKernel,
    f: Callable,
    eps_step: float,
    include_gradient: bool = False,
    h: float = 1e-3,
) -> TransitionKernel:
    """One step of the Laplace-approximated kernel update, renormalised.

    Each node is multiplied by exp(-eps f(s, z)). With ``include_gradient``
    the Laplace correction exp(eps/2 R' Theta^-1 R) of f's local expansion
    is applied too. The shared normaliser cancels under renormalisation.
    """
    if eps_step <= 0:
        raise InvalidSpec("eps_step must be > 0")
    nodes = kernel.nodes()
    s = kernel.s_now
    log_ratio = -eps_step * np.asarray(f(s, nodes), dtype=float)
    if include_gradient:
        fz = lambda x: np.asarray(f(s, x), dtype=float)
        r = fd_gradient(fz, nodes, h)
        th = fd_hessian(fz, nodes, h)
        flat_r = r.reshape(-1, kernel.dim)
        flat_t = th.reshape(-1, kernel.dim, kernel.dim)
        corr = np.empty(flat_r.shape[0])
        for k in range(corr.size):
            t, _ = regularize_hessian(flat_t[k])
            corr[k] = 0.5 * eps_step * flat_r[k] @ np.linalg.solve(t, flat_r[k])
        log_ratio = log_ratio + corr.reshape(log_ratio.shape)
    pre = kernel.psi * np.exp(log_ratio)
    mass = kernel.mass(pre)
    if not mass >= 1e-12 or not math.isfinite(mass):
        raise MassLoss(f"kernel mass {mass:.3g} before renormalisation")
    out = TransitionKernel(kernel.axes, pre / mass, s + eps_step, pre, mass, eps_step)
    out.prev = kernel
    return out


def wick_evolution_residual(prev: TransitionKernel, new: TransitionKernel, f: Callable) -> float:
    """Max over interior nodes of |(Psi_pre - Psi_prev)/eps + f Psi_prev|."""
    if new.psi_pre is None or new.eps_last is None:
        raise InvalidSpec("second kernel must come from propagate_kernel")
    fv = np.asarray(f(prev.s_now, prev.nodes()), dtype=float)
    res = (new.psi_pre - prev.psi) / new.eps_last + fv * prev.psi
    return float(np.max(np.abs(res[prev.interior()]))) if prev.psi.size > 2 else float(np.max(np.abs(res)))


def kernel_to_rows(kernel: TransitionKernel) -> list[list[float]]:
    coords = kernel.nodes().reshape(-1, kernel.dim)
    return [[*c, p] for c, p in zip(coords.tolist(), kernel.psi.ravel().tolist())]


# ---------------------------------------------------------------------------
# First-order condition and optimal weight
# ---------------------------------------------------------------------------


def _row_direction(w: np.ndarray, player: int) -> np.ndarray:
    e = np.zeros_like(w)
    e[player] = 1.0
    return e


def control_partials(model, s, z, w=None, h: float = 1e-5):
    """Central differences of drift and covariance along each player's row.

    Returns (dmu, dcov) with shapes (I, ..., d) and (I, ..., d, d).
    """
    w = model.control.w if w is None else np.atleast_2d(np.asarray(w, dtype=float))
    step = h * max(1.0, float(np.max(np.abs(w))))
    dmu, dcov = [], []
    for i in range(w.shape[0]):
        e = _row_direction(w, i) * step
        dmu.append((model.drift(s, z, w + e) - model.drift(s, z, w - e)) / (2 * step))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            dcov.append((model.covariance(s, z, w + e) - model.covariance(s, z, w - e)) / (2 * step))
    return np.stack(dmu), np.stack(dcov)


class FocTerms(NamedTuple):
    """Per player: residual = slope * alpha + intercept."""

    slope: np.ndarray
    intercept: np.ndarray
    drift_term: np.ndarray
    diffusion_term: np.ndarray
    h0: np.ndarray


def foc_terms(model, g: PenalizationG, s, z, w=None, h: float = 1e-5) -> FocTerms:
    z = np.asarray(z, dtype=float)
    w_eff = model.control.w if w is None else np.atleast_2d(np.asarray(w, dtype=float))
    h0 = model.objective.h0(s, w_eff, z)
    slope = model.objective.discount_sums() * h0
    dmu, dcov = control_partials(model, s, z, w_eff, h)
    gz = g.gradient(s, z)
    gzz = g.hessian(s, z)
    drift_term = np.moveaxis(np.sum(gz * dmu, axis=-1), 0, -1)
    diff_term = np.moveaxis(0.5 * np.sum(gzz * dcov, axis=(-2, -1)), 0, -1)
    return FocTerms(slope, drift_term + diff_term, drift_term, diff_term, h0)


def foc_residual(alpha, model, g: PenalizationG, s, z, w=None, h: float = 1e-5) -> np.ndarray:
    """Left-hand side of the weight condition, one entry per player."""
    t = foc_terms(model, g, s, z, w, h)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), t.slope.shape[-1:])
    return t.slope * alpha + t.intercept


@dataclass(frozen=True)
class AlphaStar:
    value: float
    denominator: float
    numerator: float
    drift_term: float
    diffusion_term: float
    residual: float


def alpha_star_report(model, g, s, z, w=None, player: int = 0, h: float = 1e-5) -> AlphaStar:
    t = foc_terms(model, g, s, z, w, h)
    den = float(t.slope[..., player])
    num = float(t.intercept[..., player])
    if abs(den) < 1e-12:
        raise SingularFOC(f"weight denominator {den:.3g} is numerically zero")
    value = -num / den
    resid = den * value + num
    return AlphaStar(value, den, num, float(t.drift_term[..., player]), float(t.diffusion_term[..., player]), resid)


def alpha_star_closed_form(model, g, s, z, w=None, player: int = 0, h: float = 1e-5) -> float:
    """Closed-form optimal weight of ``player`` (the weight inside the bracket set to 1)."""
    return alpha_star_report(model, g, s, z, w, player, h).value


def solve_alpha(model, g, s, z, w=None, bracket=(-1e3, 1e3), player: int = 0, h: float = 1e-5, xtol: float = 1e-12) -> float:
    """Root of the equal-weights residual of ``player`` on ``bracket``."""
    t = foc_terms(model, g, s, z, w, h)

    def resid(a):
        return float(t.slope[..., player] * a + t.intercept[..., player])

    lo, hi = bracket
    f_lo, f_hi = resid(lo), resid(hi)
    if f_lo == 0:
        return float(lo)
    if f_hi == 0:
        return float(hi)
    if f_lo * f_hi > 0:
        raise NoSignChange(f"residual has the same sign at both ends of {bracket}")
    return float(brentq(resid, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500))


# ---------------------------------------------------------------------------
# Brute-force weight
# ---------------------------------------------------------------------------


def grid_argmax(grid, values) -> int:
    """Index of the largest value; ties go to the smallest grid point."""
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    best = np.max(values)
    candidates = np.flatnonzero(values == best)
    return int(candidates[np.argmin(grid[candidates])])


class BruteForce(NamedTuple):
    alpha: float
    index: int
    values: np.ndarray


def brute_force_weight(
    model,
    z0,
    horizon: float,
    alpha_grid,
    n_paths: int,
    driver: BrownianDriver,
    g: PenalizationG,
    player: int = 0,
    objective: Callable | None = None,
) -> BruteForce:
    """Grid search for the weight under common random numbers.

    The default score of a weight is minus the expected time integral of
    the squared control sensitivity of the action along simulated paths;
    the condition solved in closed form is its pointwise stationarity.
    ``objective`` (a function of the weight) replaces the default score.
    """
    grid = np.asarray(alpha_grid, dtype=float)
    if not np.all(np.isfinite(grid)) or grid.size == 0:
        raise InvalidSpec("alpha grid must be finite and non-empty")
    if objective is not None:
        values = np.array([float(objective(a)) for a in grid])
    else:
        path = euler_maruyama(model, z0, horizon, driver, n_paths)
        t = foc_terms(model, g, path.times[None, :], path.states)
        a = t.slope[..., player]
        b = t.intercept[..., player]
        # integrate (a x + b)^2 = a^2 x^2 + 2ab x + b^2 once per coefficient
        c2, c1, c0 = (np.mean(np.trapezoid(v, path.times, axis=1)) for v in (a * a, 2 * a * b, b * b))
        values = -(c2 * grid**2 + c1 * grid + c0)
    k = grid_argmax(grid, values)
    return BruteForce(float(grid[k]), k, values)
