"""Gauges, delta-fine tagged partitions and gauge (Henstock-Kurzweil) sums.

A gauge is a positive radius function on an interval. A tagged partition is
delta-fine when every cell sits inside the open ball of radius delta(tag)
around its tag. Cells are produced by Cousin bisection with midpoint tags.
"""

from __future__ import annotations

import csv
import math
import warnings
from fractions import Fraction
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .errors import GaugeTooFine, InvalidSpec, NoConvergence

MAX_CELLS = 2**20


@dataclass(frozen=True)
class GaugeFn:
    delta: Callable[[float], float]
    delta_min: float = 1e-9

    def __post_init__(self):
        if not self.delta_min > 0:
            raise InvalidSpec("gauge floor delta_min must be > 0")

    def __call__(self, s: float) -> float:
        return max(float(self.delta(s)), self.delta_min)

    @classmethod
    def constant(cls, value: float) -> "GaugeFn":
        if value <= 0:
            raise InvalidSpec("gauge radius must be > 0")
        return cls(lambda s: value, min(value, 1e-9))


class Cell(NamedTuple):
    tag: float
    left: float
    right: float

    @property
    def length(self) -> float:
        return self.right - self.left


@dataclass(frozen=True)
class TaggedPartition:
    cells: tuple[Cell, ...]

    def __len__(self):
        return len(self.cells)

    @property
    def tags(self) -> np.ndarray:
        return np.array([c.tag for c in self.cells])

    @property
    def lengths(self) -> np.ndarray:
        return np.array([c.length for c in self.cells])

    def riemann_sum(self, f: Callable) -> float:
        """Sum of f(tag) * length in left-to-right order."""
        return math.fsum(float(f(c.tag)) * c.length for c in self.cells)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["tag", "left", "right"])
            for c in self.cells:
                wr.writerow([repr(c.tag), repr(c.left), repr(c.right)])


def _inside_ball(tag: float, r: float, lo: float, hi: float) -> bool:
    # float answer when it is clear by a rounding margin, exact rationals otherwise
    slack = 1e-14 * (abs(tag) + abs(lo) + abs(hi) + r)
    reach = max(tag - lo, hi - tag)
    if reach < r - slack:
        return True
    if reach > r + slack:
        return False
    t, rr = Fraction(tag), Fraction(r)
    return t - rr < Fraction(lo) and Fraction(hi) < t + rr


def build_delta_fine(gauge: GaugeFn, interval: tuple[float, float], max_cells: int = MAX_CELLS) -> TaggedPartition:
    """Bisect until each cell's half-length is below the gauge at its midpoint."""
    a, b = map(float, interval)
    if not b > a:
        raise InvalidSpec(f"interval [{a}, {b}] is degenerate")
    done: list[Cell] = []
    stack = [(a, b)]
    while stack:
        lo, hi = stack.pop()
        mid = 0.5 * (lo + hi)
        if _inside_ball(mid, gauge(mid), lo, hi):
            done.append(Cell(mid, lo, hi))
            if len(done) > max_cells:
                raise GaugeTooFine(f"partition exceeds {max_cells} cells")
            continue
        if not lo < mid < hi:
            raise GaugeTooFine(f"cell [{lo}, {hi}] cannot be split further")
        if len(done) + len(stack) + 2 > max_cells:
            raise GaugeTooFine(f"partition exceeds {max_cells} cells")
        stack.append((mid, hi))
        stack.append((lo, mid))
    return TaggedPartition(tuple(done))


def is_delta_fine(partition: TaggedPartition, gauge: Callable[[float], float], interval) -> list[str]:
    """Independent audit; returns a list of violations (empty when fine)."""
    a, b = interval
    problems = []
    cells = partition.cells
    if not cells:
        return ["empty partition"]
    if cells[0].left != a:
        problems.append(f"first cell starts at {cells[0].left}, not {a}")
    if cells[-1].right != b:
        problems.append(f"last cell ends at {cells[-1].right}, not {b}")
    for k, (tag, lo, hi) in enumerate(cells):
        if not lo < hi:
            problems.append(f"cell {k} is empty")
        if k and cells[k - 1].right != lo:
            problems.append(f"cells {k - 1} and {k} do not abut")
        if not lo <= tag <= hi:
            problems.append(f"cell {k} tag {tag} outside [{lo}, {hi}]")
        r = gauge(tag)
        if not _inside_ball(tag, r, lo, hi):
            problems.append(f"cell {k} [{lo}, {hi}] not inside ball({tag}, {r})")
    return problems


class HKResult(NamedTuple):
    value: float
    partition_card: int
    residual: float
    history: tuple[float, ...]
    levels: int


def dyadic_schedule(base: Callable[[float], float] | float, delta_min: float = 1e-12) -> Callable[[int], GaugeFn]:
    """Gauge family base(s) * 2^-k, the default refinement schedule."""
    fn = base if callable(base) else (lambda s, v=float(base): v)

    def level(k: int) -> GaugeFn:
        return GaugeFn(lambda s: fn(s) * 2.0**-k, delta_min)

    return level


def hk_integral(
    f: Callable[[float], float],
    interval: tuple[float, float],
    gauge_schedule: Callable[[int], GaugeFn] | None = None,
    tol: float = 1e-8,
    max_levels: int = 40,
    max_cells: int = MAX_CELLS,
) -> HKResult:
    """Refine the gauge until successive tagged sums agree within ``tol``.

    ``f`` is a point evaluator; each cell contributes f(tag) * length.
    Vectorised ``f`` (accepting an array of tags) is used when available.
    """
    if not tol > 0:
        raise InvalidSpec("tol must be > 0")
    a, b = map(float, interval)
    if gauge_schedule is None:
        gauge_schedule = dyadic_schedule(b - a)
    prev = None
    history: list[float] = []
    for k in range(max_levels):
        part = build_delta_fine(gauge_schedule(k), (a, b), max_cells)
        value = _tagged_sum(f, part)
        if prev is not None:
            resid = abs(value - prev)
            history.append(resid)
            if resid <= tol:
                return HKResult(value, len(part), resid, tuple(history), k)
        prev = value
    raise NoConvergence(
        f"gauge sums did not settle within {tol} after {max_levels} levels (last change {history[-1] if history else float('nan')})"
    )


def _tagged_sum(f, part: TaggedPartition) -> float:
    tags = part.tags
    try:
        with warnings.catch_warnings():
            # scalar-only callables fed a length-1 array
            warnings.simplefilter("error", DeprecationWarning)
            vals = np.asarray(f(tags), dtype=float)
        if vals.shape != tags.shape:
            raise ValueError
    except (TypeError, ValueError, DeprecationWarning):
        vals = np.array([float(f(t)) for t in tags])
    return math.fsum(vals * part.lengths)


def rain_gauge(rain_path_times: Sequence[float], rain_values: Sequence[float], b: float, base: float, floor: float = 1e-6) -> GaugeFn:
    """Gauge shrinking where the rain path approaches its threshold ``b``.

    The radius at s is ``base * min(1, (b - B_s)_+ + floor)`` with B read by
    linear interpolation, so cells crowd around near-stoppage times.
    """
    times = np.asarray(rain_path_times, dtype=float)
    vals = np.asarray(rain_values, dtype=float)

    def delta(s):
        gap = max(b - float(np.interp(s, times, vals)), 0.0)
        return base * min(1.0, gap + floor)

    return GaugeFn(delta, base * floor)


def split_points(interval, points: Iterable[float]) -> list[tuple[float, float]]:
    a, b = interval
    cuts = [a, *sorted({p for p in points if a < p < b}), b]
    return list(zip(cuts[:-1], cuts[1:]))
