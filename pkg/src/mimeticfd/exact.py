"""Reference solutions: the linear travelling wave and nonlinear simple waves.

All solutions depend on ``s = (x - y) / sqrt(2)`` only and travel in the
direction ``d = (1, -1) / sqrt(2)``. A simple wave keeps the backward
invariant ``F-`` constant, so every state is transported unchanged along a
straight forward characteristic ``s = s0 + V+(s0) t`` until they cross.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConfigError, NoShockError, NumericalError, ShockError

SQRT2 = math.sqrt(2.0)
DIRECTION = np.array([1.0, -1.0]) / SQRT2
BUMP = 2.0 / (9.0 * math.pi ** 2)
MAX_NEWTON = 50


def diagonal_coordinate(x, y):
    return (np.asarray(x, dtype=float) - np.asarray(y, dtype=float)) / SQRT2


def linear_exact(x, y, t, rho0: float = 1.0, c: float = 1.0):
    """Pressure and velocity ``(p, (vx, vy))`` of the travelling linear wave.

    ``p = c^2 f(s - c t)`` with the bump ``f`` of period ``1/sqrt(2)`` in
    ``x - y``; with ``c = rho0 = 1`` the velocity is ``d p``.
    """
    s = diagonal_coordinate(x, y)
    f = np.exp(-BUMP * np.sin(2.0 * math.pi * (s - c * t)) ** 2)
    p = c * c * f
    speed = c * f / rho0
    return p, (DIRECTION[0] * speed, DIRECTION[1] * speed)


@dataclass(frozen=True)
class Profile:
    """Periodic density profile ``base + amp * exp(-b sin^2(pi s sqrt(2) / L))``."""

    base: float = -9.0
    amp: float = 10.0
    L: float = 1.0

    def __post_init__(self):
        if self.L <= 0:
            raise ConfigError("profile period must be positive")
        if self.base + self.amp * math.exp(-BUMP) <= 0 or self.base + self.amp <= 0:
            raise ConfigError("profile density must stay positive")

    @property
    def k(self) -> float:
        return math.pi * SQRT2 / self.L

    @property
    def period(self) -> float:
        """Period in ``s``."""
        return self.L / SQRT2

    def __call__(self, s):
        return self.base + self.amp * np.exp(-BUMP * np.sin(self.k * np.asarray(s)) ** 2)

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        e = np.exp(-BUMP * np.sin(self.k * s) ** 2)
        return -self.amp * BUMP * self.k * np.sin(2.0 * self.k * s) * e

    @property
    def minimum(self) -> float:
        return min(self.base + self.amp * math.exp(-BUMP), self.base + self.amp)

    @property
    def maximum(self) -> float:
        return max(self.base + self.amp * math.exp(-BUMP), self.base + self.amp)


@dataclass(frozen=True)
class SimpleWave:
    """Right-moving simple wave of the shallow-water (``'euler'``) or
    compressible-wave model.

    ``F_minus`` is chosen so that the velocity vanishes where the density is
    smallest.
    """

    model: str
    profile: Profile
    c: float = 1.0
    g: float = 1.0

    def __post_init__(self):
        if self.model not in ("euler", "compressible"):
            raise ConfigError(f"simple waves exist for 'euler' and 'compressible', not {self.model!r}")
        if self.c <= 0 or self.g <= 0:
            raise ConfigError("c and g must be positive")

    @property
    def F_minus(self) -> float:
        rmin = self.profile.minimum
        if self.model == "euler":
            return -2.0 * math.sqrt(self.g * rmin)
        # v = 0 gives V+ = c
        return math.log(rmin / self.c)

    # state relations along the wave
    def velocity(self, rho):
        """1D velocity on the wave for density ``rho``."""
        rho = np.asarray(rho, dtype=float)
        if self.model == "euler":
            return self.F_minus + 2.0 * np.sqrt(self.g * rho)
        return self._compressible_velocity(rho)

    def _compressible_velocity(self, rho):
        c2 = self.c * self.c
        target = self.F_minus
        flat = np.atleast_1d(rho).astype(float)
        v = np.zeros_like(flat)
        for _ in range(MAX_NEWTON):
            vp = 0.5 * (v + np.sqrt(v * v + 4.0 * c2))
            G = np.log(flat / vp) - v * vp / (2.0 * c2) - target
            step = G / (vp / c2)
            v = v + step
            if np.all(np.abs(step) <= 1e-15 * (1.0 + np.abs(v))):
                break
        else:
            raise NumericalError("velocity Newton iteration did not converge")
        return v.reshape(np.shape(rho)) if np.ndim(rho) else float(v[0])

    def V_plus(self, rho):
        rho = np.asarray(rho, dtype=float)
        v = self.velocity(rho)
        if self.model == "euler":
            return v + np.sqrt(self.g * rho)
        return 0.5 * (v + np.sqrt(v * v + 4.0 * self.c ** 2))

    def dV_plus_drho(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.model == "euler":
            return 1.5 * np.sqrt(self.g / rho)
        v = self.velocity(rho)
        return self.c ** 2 / (rho * np.sqrt(v * v + 4.0 * self.c ** 2))

    def F_plus(self, rho, v):
        rho = np.asarray(rho, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.model == "euler":
            return v + 2.0 * np.sqrt(self.g * rho)
        c2 = self.c * self.c
        root = np.sqrt(v * v + 4.0 * c2)
        return np.log(rho * 0.5 * (v + root)) - v * 0.5 * (v - root) / (2.0 * c2)

    def speed_gradient(self, s):
        """``d V+ / d s`` of the initial data."""
        rho = self.profile(s)
        return self.dV_plus_drho(rho) * self.profile.derivative(s)

    @cached_property
    def t_shock(self) -> float:
        """Shock time, or ``inf`` when the forward speed never decreases."""
        try:
            return shock_time(self)
        except NoShockError:
            return math.inf


def make_simple_wave(model: str, base: float = -9.0, amp: float = 10.0, L: float = 1.0,
                     c: float = 1.0, g: float = 1.0) -> SimpleWave:
    return SimpleWave(model, Profile(base, amp, L), c, g)


def shock_time(wave: SimpleWave, samples: int = 4096) -> float:
    """Earliest crossing time of forward characteristics, ``1 / max(-dV+/ds)``."""
    per = wave.profile.period
    s = np.arange(samples) * per / samples
    rate = -wave.speed_gradient(s)
    i = int(np.argmax(rate))
    if not rate[i] > 1e-14 * max(1.0, float(np.abs(rate).max())):
        raise NoShockError("no shock forms: forward speed never decreases")
    h = per / samples
    res = minimize_scalar(lambda x: -float(-wave.speed_gradient(x)),
                          bounds=(s[i] - h, s[i] + h), method="bounded",
                          options={"xatol": 1e-14 * per})
    best = max(rate[i], -float(wave.speed_gradient(res.x)))
    return 1.0 / best


def foot_points(wave: SimpleWave, s, t: float, tol: float = 1e-14) -> np.ndarray:
    """Solve ``s0 + V+(rho(s0)) t = s`` for ``s0`` by safeguarded Newton.

    The bracket ``[s - Vmax t, s - Vmin t]`` always contains the root; a
    Newton step that leaves it is replaced by bisection.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if t == 0:
        return s.copy()
    vmin = float(wave.V_plus(wave.profile.minimum))
    vmax = float(wave.V_plus(wave.profile.maximum))
    lo = s - vmax * t
    hi = s - vmin * t
    x = s - wave.V_plus(wave.profile(s)) * t
    x = np.clip(x, lo, hi)
    scale = wave.profile.period
    for _ in range(MAX_NEWTON):
        rho = wave.profile(x)
        r = x + wave.V_plus(rho) * t - s
        # r is increasing in x before the shock
        lo = np.where(r < 0, x, lo)
        hi = np.where(r > 0, x, hi)
        dr = 1.0 + wave.speed_gradient(x) * t
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - r / dr
        bad = ~(dr > 0) | ~(xn > lo) | ~(xn < hi)
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        done = np.abs(xn - x) <= tol * scale
        x = xn
        if np.all(done):
            return x
    raise NumericalError("foot-point Newton iteration did not converge in 50 iterations")


def simple_wave_eval(wave: SimpleWave, x, y, t: float):
    """Density and velocity vector ``(rho, (vx, vy))`` of the simple wave."""
    if t < 0:
        raise ConfigError("time must be non-negative")
    if t >= wave.t_shock:
        raise ShockError(f"t = {t} is past the shock time {wave.t_shock:.6g}; the "
                         "smooth solution is multivalued")
    s = diagonal_coordinate(x, y)
    shape = np.shape(s)
    s0 = foot_points(wave, np.ravel(s), t)
    rho = wave.profile(s0).reshape(shape)
    v = np.asarray(wave.velocity(rho), dtype=float)
    return rho, (DIRECTION[0] * v, DIRECTION[1] * v)


def relative_error(num, exact, weights, background: float) -> float:
    """``||num - exact|| / ||exact - background||`` in the weighted 2-norm."""
    num = np.asarray(num, dtype=float)
    exact = np.asarray(exact, dtype=float)
    w = np.asarray(weights, dtype=float)
    den = math.sqrt(math.fsum(w * (exact - background) ** 2))
    if den == 0:
        den = math.sqrt(math.fsum(w * exact ** 2))
    return math.sqrt(math.fsum(w * (num - exact) ** 2)) / den
