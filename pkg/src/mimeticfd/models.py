"""State equations and semi-discrete right-hand sides of the three models.

* ``linear``: ``rho' = -rho0 DIV v``, ``v' = -(1/rho0) GRAD (c^2 rho)``
* ``compressible``: ``rho' = -DIVr~(p) v``, ``v' = -GRAD Q(p)``, ``p = c^2 rho``
* ``euler``: ``rho' = -DIVr(p) v``, ``rv' = -ADVEC v - GRAD p``, with the
  shallow-water law ``p = g rho^2 / 2`` and ``v = rv / (Interp_vc rho)``
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, NegativeDensityError
from .linops import DEFAULT_RESIDUAL_THRESHOLD
from .mimetic_ops import OperatorBundle, check_advec_interp

MODELS = ("linear", "compressible", "euler")


@dataclass(frozen=True)
class StateEquation:
    """Density law ``rho = R(p)`` with its integrals ``Q = int 1/R``, ``S = int 1/R^2``.

    ``e_int`` is the internal energy density as a function of pressure and
    ``de_drho`` its derivative with respect to density, expressed in ``p``:
    ``rho0 S + const`` (compressible) or ``Q`` (Euler), which is what the
    energy balance needs.
    """

    name: str
    R: Callable
    Q: Callable
    S: Callable
    e_int: Callable
    p_from_rho: Callable
    de_drho: Callable
    params: dict = field(default_factory=dict)


def linear_state(c: float = 1.0, rho0: float = 1.0) -> StateEquation:
    c2 = c * c
    return StateEquation(
        name="linear",
        R=lambda p: p / c2,
        Q=lambda p: c2 * np.log(p),
        S=lambda p: -c2 * c2 / p,
        e_int=lambda p: p * p / (2.0 * c2 * rho0),
        p_from_rho=lambda rho: c2 * rho,
        de_drho=lambda p: p / rho0,
        params={"c": c, "rho0": rho0})


def compressible_state(c: float = 1.0, rho0: float = 1.0, p_ref: float = 1.0) -> StateEquation:
    """``p = c^2 rho``; ``e_int(p_ref) = 0``."""
    if c <= 0 or rho0 <= 0 or p_ref <= 0:
        raise ConfigError("c, rho0 and p_ref must be positive")
    c2 = c * c
    return StateEquation(
        name="compressible",
        R=lambda p: p / c2,
        Q=lambda p: c2 * np.log(p),
        S=lambda p: -c2 * c2 / p,
        e_int=lambda p: rho0 * c2 * (p / p_ref - 1.0 - np.log(p / p_ref)),
        p_from_rho=lambda rho: c2 * rho,
        de_drho=lambda p: rho0 * c2 * c2 * (1.0 / p_ref - 1.0 / p),
        params={"c": c, "rho0": rho0, "p_ref": p_ref})


def shallow_water_state(g: float = 1.0) -> StateEquation:
    """``p = g rho^2 / 2``: ``R = sqrt(2p/g)``, ``Q = g rho``, ``e_int = p``."""
    if g <= 0:
        raise ConfigError("g must be positive")
    return StateEquation(
        name="shallow-water",
        R=lambda p: np.sqrt(2.0 * p / g),
        Q=lambda p: np.sqrt(2.0 * g * p),
        S=lambda p: 0.5 * g * np.log(p),
        e_int=lambda p: np.asarray(p, dtype=float) * 1.0,
        p_from_rho=lambda rho: 0.5 * g * rho * rho,
        de_drho=lambda p: np.sqrt(2.0 * g * p),
        params={"g": g})


@dataclass
class ModelState:
    """Prognostic fields: ``rho`` plus ``v`` (linear, compressible) or ``rv`` (euler)."""

    model: str
    rho: np.ndarray
    vec: np.ndarray

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}")
        self.rho = np.asarray(self.rho, dtype=float)
        self.vec = np.asarray(self.vec, dtype=float)
        if self.vec.size != 2 * self.rho.size:
            raise ConfigError("vector part must have twice the length of rho")

    def pack(self) -> np.ndarray:
        return np.concatenate([self.rho, self.vec])

    @classmethod
    def unpack(cls, model: str, y: np.ndarray) -> "ModelState":
        y = np.asarray(y, dtype=float)
        if y.size % 3:
            raise ConfigError("flat state length must be a multiple of 3")
        n = y.size // 3
        return cls(model, y[:n].copy(), y[n:].copy())

    def header(self) -> str:
        return json.dumps({"model": self.model, "n": int(self.rho.size)})


@dataclass(frozen=True)
class Model:
    """A model tag, its state equation and the physical constants."""

    name: str
    eq: StateEquation
    rho0: float = 1.0
    c: float = 1.0
    g: float = 1.0


def make_model(name: str, rho0: float = 1.0, c: float = 1.0, g: float = 1.0,
               p_ref: float = 1.0) -> Model:
    if name == "linear":
        return Model(name, linear_state(c, rho0), rho0, c, g)
    if name == "compressible":
        return Model(name, compressible_state(c, rho0, p_ref), rho0, c, g)
    if name == "euler":
        return Model(name, shallow_water_state(g), rho0, c, g)
    raise ConfigError(f"unknown model {name!r}")


def rhs_linear(state: ModelState, bundle: OperatorBundle, rho0: float = 1.0,
               c: float = 1.0) -> ModelState:
    f = bundle.fast
    p = c * c * state.rho
    return ModelState("linear", -rho0 * f.div(state.vec), -f.grad(p) / rho0)


def rhs_compressible(state: ModelState, bundle: OperatorBundle, eq: StateEquation) -> ModelState:
    f = bundle.fast
    p = eq.p_from_rho(state.rho)
    if np.any(p <= 0):
        raise NegativeDensityError(f"negative density: min rho {state.rho.min():.3e}")
    dens = f.densities(p, eq, "rho_tilde")
    return ModelState("compressible", -f.div(state.vec, dens), -f.grad(eq.Q(p)))


def euler_velocity(state: ModelState, bundle: OperatorBundle) -> np.ndarray:
    rho_v = bundle.fast.interp_vc(state.rho)
    if np.any(rho_v <= 0):
        i = int(np.argmin(rho_v))
        raise NegativeDensityError(f"negative density {rho_v[i]:.3e} interpolated to face {i}")
    return state.vec / rho_v


def rhs_euler(state: ModelState, bundle: OperatorBundle, eq: StateEquation) -> ModelState:
    check_advec_interp(bundle.interp, DEFAULT_RESIDUAL_THRESHOLD)
    f = bundle.fast
    if np.any(state.rho <= 0):
        raise NegativeDensityError(f"negative density: min rho {state.rho.min():.3e}")
    v = euler_velocity(state, bundle)
    p = eq.p_from_rho(state.rho)
    dens = f.densities(p, eq, "rho")
    return ModelState("euler", -f.div(v, dens), -f.advec(v, v, dens) - f.grad(p))


def rhs_materialized(state: ModelState, bundle: OperatorBundle, model: Model) -> ModelState:
    """The same right-hand sides from assembled sparse operators (slow; for checks)."""
    if model.name == "linear":
        p = model.c ** 2 * state.rho
        return ModelState("linear", -model.rho0 * (bundle.DIV @ state.vec),
                          -(bundle.GRAD @ p) / model.rho0)
    eq = model.eq
    p = eq.p_from_rho(state.rho)
    if model.name == "compressible":
        _, divr = bundle.rgrad_tilde(p, eq)
        return ModelState("compressible", -(divr @ state.vec), -(bundle.GRAD @ eq.Q(p)))
    v = state.vec / (bundle.Interp_vc @ state.rho)
    parts = bundle.advec(v, p, eq, parts=True)
    return ModelState("euler", -(parts["DIVr"] @ v), -(parts["ADVEC"] @ v) - bundle.GRAD @ p)


def rhs(state: ModelState, bundle: OperatorBundle, model: Model) -> ModelState:
    if state.model != model.name:
        raise ConfigError(f"state is {state.model!r} but model is {model.name!r}")
    if model.name == "linear":
        return rhs_linear(state, bundle, model.rho0, model.c)
    if model.name == "compressible":
        return rhs_compressible(state, bundle, model.eq)
    return rhs_euler(state, bundle, model.eq)


def make_flat_rhs(bundle: OperatorBundle, model: Model):
    """``f(t, y)`` on packed states, for the time integrator."""
    def f(t, y):
        return rhs(ModelState.unpack(model.name, y), bundle, model).pack()
    return f
