"""Adaptive explicit Runge-Kutta integration with tight tolerances.

Dormand-Prince 5(4) with a proportional-integral step controller. Requested
output times are hit exactly by shortening the step that would pass them.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, MaxStepsError, StepUnderflowError

# Dormand-Prince 5(4) tableau; B is the 5th-order solution, E = B - B_hat
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
B_HAT = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100,
                  1 / 40])
E = B - B_HAT
ORDER = 5


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and limits. ``initial_dt=None`` selects the step automatically."""

    reltol: float = 1e-11
    abstol: float = 1e-14
    max_steps: int = 1_000_000
    initial_dt: Optional[float] = None
    safety: float = 0.9
    beta: float = 0.04
    min_factor: float = 0.2
    max_factor: float = 10.0

    def __post_init__(self):
        if not 1e-13 <= self.reltol <= 1e-2:
            raise ConfigError(f"reltol must be in [1e-13, 1e-2], got {self.reltol}")
        if self.abstol < 0:
            raise ConfigError("abstol must be non-negative")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be positive")
        if self.initial_dt is not None and not self.initial_dt > 0:
            raise ConfigError("initial_dt must be positive")


@dataclass
class StepStats:
    accepted: int = 0
    rejected: int = 0
    rhs_evals: int = 0
    wall_time: float = 0.0
    last_dt: float = 0.0


@dataclass
class IntegrationResult:
    t: float
    y: np.ndarray
    stats: StepStats
    outputs: list = field(default_factory=list)

    def stats_dict(self) -> dict:
        return asdict(self.stats)


def _norm(x, scale) -> float:
    return math.sqrt(float(np.mean((x / scale) ** 2)))


def initial_step(rhs, t0, y0, f0, direction, cfg: IntegratorConfig) -> float:
    """Starting step from the size of the first two derivatives."""
    scale = cfg.abstol + cfg.reltol * np.abs(y0)
    scale = np.where(scale > 0, scale, 1.0)
    d0, d1 = _norm(y0, scale), _norm(f0, scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + direction * h0 * f0
    f1 = rhs(t0 + direction * h0, y1)
    d2 = _norm(f1 - f0, scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / ORDER)
    return min(100 * h0, h1)


def integrate(rhs: Callable, y0, t0: float, t1: float, config: IntegratorConfig | None = None,
              observer: Callable | None = None, output_times=None) -> IntegrationResult:
    """Integrate ``y' = rhs(t, y)`` from ``t0`` to ``t1``.

    ``observer(t, y)`` is called at ``t0``, at every time in ``output_times``
    inside ``(t0, t1]``, and at ``t1``; the step sequence is adjusted to land
    on those times exactly. Raises :class:`StepUnderflowError` when the step
    falls below ``1e-14 * (t1 - t0)`` and :class:`MaxStepsError` when the
    step budget is spent.
    """
    cfg = config or IntegratorConfig()
    if not t1 > t0:
        raise ConfigError("t1 must be greater than t0")
    wall = time.perf_counter()
    y = np.array(y0, dtype=float, copy=True)
    t = float(t0)
    span = t1 - t0
    stats = StepStats()
    outputs = []
    stops = sorted({float(s) for s in (output_times or []) if t0 < s < t1} | {float(t1)})

    def observe(tt, yy):
        outputs.append(tt)
        if observer is not None:
            observer(tt, yy)

    def f(tt, yy):
        stats.rhs_evals += 1
        return rhs(tt, yy)

    observe(t, y)
    k = [None] * 7
    k[0] = f(t, y)
    h = cfg.initial_dt if cfg.initial_dt is not None else initial_step(f, t, y, k[0], 1.0, cfg)
    h = min(h, span)
    expo1 = 1.0 / ORDER - 0.75 * cfg.beta
    facold = 1e-4
    last_rejected = False
    hmin = 1e-14 * span
    stop_idx = 0
    while stop_idx < len(stops):
        if stats.accepted + stats.rejected >= cfg.max_steps:
            raise MaxStepsError(f"step budget {cfg.max_steps} exhausted at t = {t:.6g}")
        target = stops[stop_idx]
        hit = t + h >= target - 1e-14 * span
        hstep = target - t if hit else h
        if hstep < hmin:
            raise StepUnderflowError(f"step size {hstep:.3e} underflow at t = {t:.6g}; "
                                     "the problem is stiff or the solution is blowing up")
        for i in range(1, 7):
            yi = y + hstep * sum(a * kj for a, kj in zip(A[i], k[:i]) if a != 0.0)
            k[i] = f(t + C[i] * hstep, yi)
        y_new = yi  # stage 7 is evaluated at the 5th-order solution (FSAL)
        err_vec = hstep * sum(e * kj for e, kj in zip(E, k) if e != 0.0)
        scale = cfg.abstol + cfg.reltol * np.maximum(np.abs(y), np.abs(y_new))
        scale = np.where(scale > 0, scale, 1.0)
        err = _norm(err_vec, scale)
        if not np.isfinite(err):
            stats.rejected += 1
            last_rejected = True
            h = hstep * cfg.min_factor
            continue
        fac11 = err ** expo1 if err > 0 else 0.0
        fac = fac11 / facold ** cfg.beta
        fac = min(1.0 / cfg.min_factor, max(1.0 / cfg.max_factor, fac / cfg.safety))
        if err <= 1.0:
            facold = max(err, 1e-4)
            stats.accepted += 1
            stats.last_dt = hstep
            t = target if hit else t + hstep
            y = y_new
            k[0] = k[6]
            hnew = hstep / fac
            if last_rejected:
                hnew = min(hnew, hstep)
            last_rejected = False
            if hit:
                observe(t, y)
                stop_idx += 1
                # a shortened final step should not shrink the next one
                hnew = max(hnew, h) if hstep < h else hnew
            h = hnew
        else:
            stats.rejected += 1
            last_rejected = True
            h = hstep / min(1.0 / cfg.min_factor, fac11 / cfg.safety)
    stats.wall_time = time.perf_counter() - wall
    return IntegrationResult(t, y, stats, outputs)
