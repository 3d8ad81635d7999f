"""Experiment configurations and the four study types behind the CLI.

Each ``run_*`` function takes an :class:`ExperimentConfig`, returns its table
(a list of row dicts) and, when ``config.out`` is set, writes CSV/JSON files
plus a ``manifest.json`` into that directory.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import __version__
from .diagnostics import check_operator_identities, conserved_quantities, write_identity_reports
from .errors import ConfigError, MimeticError, NumericalError
from .exact import (SQRT2, SimpleWave, diagonal_coordinate, linear_exact, make_simple_wave,
                    relative_error, simple_wave_eval)
from .grid import MAPPING_KINDS, MappingSpec, build_grid, vector_to_staggered
from .linops import inner_c
from .mimetic_ops import OperatorBundle, build_bundle
from .models import MODELS, Model, ModelState, make_flat_rhs, make_model
from .timeint import IntegratorConfig, integrate

EXPERIMENTS = ("identities", "conservation", "convergence", "single-run")
END_TIMES = ("T", "t_shock/2", "t_shock")
DEFAULT_T = 10.0

LOSS_COLUMNS = ("mass loss", "mom. loss", "energy loss")
CONVERGENCE_COLUMNS = ("grid", "order_nominal", "error", "order_observed")


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one study.

    ``end_time`` is one of ``'T'`` (``T`` = 10 by default), ``'t_shock/2'``,
    ``'t_shock'`` or an explicit positive number.
    """

    experiment: str = "convergence"
    model: str = "linear"
    mapping: MappingSpec = field(default_factory=lambda: MappingSpec("uniform", {"L": SQRT2}))
    grids: list = field(default_factory=lambda: [20, 40, 80, 160])
    orders: list = field(default_factory=lambda: [2, 4])
    reltols: list = field(default_factory=lambda: [1e-11])
    end_time: Any = "T"
    T: float = DEFAULT_T
    abstol: float = 1e-14
    max_steps: int = 1_000_000
    out: str | None = None
    seed: int = 0
    trials: int = 3
    rho0: float = 1.0
    c: float = 1.0
    g: float = 1.0
    profile_base: float = -9.0
    profile_amp: float = 10.0

    def __post_init__(self):
        if isinstance(self.mapping, dict):
            self.mapping = MappingSpec.from_dict(self.mapping)
        self.validate()

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if not isinstance(self.mapping, MappingSpec) or self.mapping.kind not in MAPPING_KINDS:
            raise ConfigError("mapping must be a MappingSpec")
        for name in ("grids", "orders", "reltols"):
            val = getattr(self, name)
            if not isinstance(val, (list, tuple)) or len(val) == 0:
                raise ConfigError(f"{name} must be a non-empty list")
        if any(not isinstance(n, int) or isinstance(n, bool) for n in self.grids):
            raise ConfigError("grid sizes must be integers")
        if any(not isinstance(o, int) or o < 2 or o % 2 for o in self.orders):
            raise ConfigError("orders must be even integers >= 2")
        if min(self.grids) < 2 * max(self.orders):
            raise ConfigError(f"every grid must be >= 2 * max(order) = {2 * max(self.orders)}")
        for rt in self.reltols:
            if not 1e-13 <= float(rt) <= 1e-2:
                raise ConfigError(f"reltol {rt} outside [1e-13, 1e-2]")
        if isinstance(self.end_time, str):
            if self.end_time not in END_TIMES:
                raise ConfigError(f"end_time must be one of {END_TIMES} or a number")
            if self.end_time != "T" and self.model == "linear":
                raise ConfigError("the linear wave never shocks; use 'T' or a number")
        elif not (isinstance(self.end_time, (int, float)) and self.end_time > 0):
            raise ConfigError("explicit end_time must be a positive number")
        if self.T <= 0 or self.abstol < 0 or self.max_steps < 1 or self.trials < 1:
            raise ConfigError("T, abstol, max_steps and trials must be positive")
        if min(self.rho0, self.c, self.g) <= 0:
            raise ConfigError("rho0, c and g must be positive")
        if self.model == "linear" and self.experiment != "identities":
            k = SQRT2 * self.mapping.params["L"]
            if abs(k - round(k)) > 1e-9 or round(k) == 0:
                raise ConfigError("the linear wave is periodic only if sqrt(2) * L is an integer; "
                                  f"got L = {self.mapping.params['L']}")

    # serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["mapping"] = self.mapping.to_dict()
        d["grids"] = list(self.grids)
        d["orders"] = list(self.orders)
        d["reltols"] = [float(r) for r in self.reltols]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_json(fh.read())

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())


# set-up --------------------------------------------------------------------

def model_of(cfg: ExperimentConfig) -> Model:
    return make_model(cfg.model, rho0=cfg.rho0, c=cfg.c, g=cfg.g)


def wave_of(cfg: ExperimentConfig) -> SimpleWave | None:
    if cfg.model == "linear":
        return None
    return make_simple_wave(cfg.model, cfg.profile_base, cfg.profile_amp,
                            L=cfg.mapping.params["L"], c=cfg.c, g=cfg.g)


def end_time(cfg: ExperimentConfig, wave: SimpleWave | None = None) -> float:
    if not isinstance(cfg.end_time, str):
        return float(cfg.end_time)
    if cfg.end_time == "T":
        return float(cfg.T)
    wave = wave or wave_of(cfg)
    ts = wave.t_shock
    return ts / 2 if cfg.end_time == "t_shock/2" else ts


def exact_fields(model: Model, wave: SimpleWave | None, x, y, t: float):
    """Exact density and physical velocity at points ``(x, y)``."""
    if model.name == "linear":
        p, v = linear_exact(x, y, t, model.rho0, model.c)
        return p / model.c ** 2, v
    return simple_wave_eval(wave, x, y, t)


def initial_state(model: Model, bundle: OperatorBundle, wave: SimpleWave | None) -> ModelState:
    """Sample the exact solution at ``t = 0`` on the staggered grid."""
    g = bundle.grid
    xc = g.xc
    rho, _ = exact_fields(model, wave, xc[:, 0], xc[:, 1], 0.0)

    def comp(i):
        return lambda x, y: exact_fields(model, wave, x, y, 0.0)[1][i]

    v = vector_to_staggered(g, comp(0), comp(1))
    if model.name == "euler":
        return ModelState("euler", rho, bundle.fast.interp_vc(rho) * v)
    return ModelState(model.name, rho, v)


def prepare_model(cfg: ExperimentConfig, bundle: OperatorBundle, wave) -> Model:
    """Model with ``p_ref`` set to the initial mean pressure (compressible)."""
    model = model_of(cfg)
    if cfg.model != "compressible":
        return model
    rho = initial_state(model, bundle, wave).rho
    p_mean = inner_c(np.ones_like(rho), model.eq.p_from_rho(rho), bundle.grid) / bundle.grid.area
    return make_model(cfg.model, rho0=cfg.rho0, c=cfg.c, g=cfg.g, p_ref=p_mean)


@dataclass
class SimulationResult:
    grid: int
    order: int
    reltol: float
    t_end: float
    state: ModelState | None
    initial: Any
    final: Any
    error: float
    stats: dict
    failure: str | None = None


def simulate(cfg: ExperimentConfig, n: int, order: int, reltol: float,
             t_end: float | None = None, wave=None, bundle=None) -> SimulationResult:
    """Integrate one ``n x n`` grid to the end time; failures are captured."""
    wave = wave if wave is not None else wave_of(cfg)
    t_end = end_time(cfg, wave) if t_end is None else t_end
    if bundle is None:
        bundle = build_bundle(build_grid(cfg.mapping, n, n, order))
    model = prepare_model(cfg, bundle, wave)
    s0 = initial_state(model, bundle, wave)
    q0 = conserved_quantities(s0, bundle, model, 0.0)
    icfg = IntegratorConfig(reltol=float(reltol), abstol=cfg.abstol, max_steps=cfg.max_steps)
    try:
        res = integrate(make_flat_rhs(bundle, model), s0.pack(), 0.0, t_end, icfg)
    except (NumericalError, MimeticError, FloatingPointError) as exc:
        return SimulationResult(n, order, reltol, t_end, None, q0, None, float("nan"), {},
                                f"{type(exc).__name__}: {exc}")
    state = ModelState.unpack(model.name, res.y)
    q1 = conserved_quantities(state, bundle, model, t_end).with_losses(q0)
    err = float("nan")
    if model.name == "linear" or t_end < wave.t_shock:
        xc = bundle.grid.xc
        rho_ex, _ = exact_fields(model, wave, xc[:, 0], xc[:, 1], t_end)
        # the crest value is the background so that the norm measures the wave itself
        background = 1.0 / model.c ** 2 if wave is None else wave.profile.maximum
        err = relative_error(state.rho, rho_ex, bundle.grid.dVc, background)
    return SimulationResult(n, order, reltol, t_end, state, q0, q1, err, res.stats_dict())


def observed_orders(errors) -> list:
    """``log2`` of consecutive error ratios; the first entry is ``None``."""
    out = [None]
    for a, b in zip(errors[:-1], errors[1:]):
        if a > 0 and b > 0 and math.isfinite(a) and math.isfinite(b):
            out.append(math.log2(a / b))
        else:
            out.append(float("nan"))
    return out


# output --------------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_csv(rows, columns, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(columns)
        for r in rows:
            wr.writerow([_fmt(r.get(c)) for c in columns])


def write_manifest(cfg: ExperimentConfig, out_dir, wall: float, extra: dict | None = None) -> dict:
    manifest = {"config": cfg.to_dict(), "version": __version__, "seed": cfg.seed,
                "wall_time": wall}
    manifest.update(extra or {})
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_fmt)
    return manifest


def _out_dir(cfg):
    if cfg.out is None:
        return None
    os.makedirs(cfg.out, exist_ok=True)
    return cfg.out


# studies -------------------------------------------------------------------

def run_convergence(cfg: ExperimentConfig) -> list:
    """Error table per ``(order, grid)`` at the first reltol."""
    wall = time.perf_counter()
    wave = wave_of(cfg)
    t_end = end_time(cfg, wave)
    rows = []
    for order in cfg.orders:
        errs, cells = [], []
        for n in cfg.grids:
            r = simulate(cfg, n, order, cfg.reltols[0], t_end, wave)
            errs.append(r.error)
            cells.append(r)
        for r, p in zip(cells, observed_orders(errs)):
            rows.append({"grid": r.grid, "order_nominal": order, "error": r.error,
                         "order_observed": p, "failure": r.failure, "stats": r.stats})
    out = _out_dir(cfg)
    if out:
        write_csv(rows, CONVERGENCE_COLUMNS, os.path.join(out, "convergence.csv"))
        write_manifest(cfg, out, time.perf_counter() - wall,
                       {"t_end": t_end, "failures": [r["failure"] for r in rows if r["failure"]],
                        "stats": [r["stats"] for r in rows]})
    return rows


def run_conservation(cfg: ExperimentConfig) -> list:
    """Loss table per reltol on the first grid and order."""
    wall = time.perf_counter()
    wave = wave_of(cfg)
    t_end = end_time(cfg, wave)
    n, order = cfg.grids[0], cfg.orders[0]
    bundle = build_bundle(build_grid(cfg.mapping, n, n, order))
    rows = []
    for rt in cfg.reltols:
        r = simulate(cfg, n, order, rt, t_end, wave, bundle)
        losses = r.final.losses if r.final is not None else {}
        rows.append({"reltol": float(rt),
                     "mass loss": losses.get("mass", float("nan")),
                     "mom. loss": losses.get("momentum", float("nan")),
                     "energy loss": losses.get("energy", float("nan")),
                     "failure": r.failure, "stats": r.stats})
    out = _out_dir(cfg)
    if out:
        write_csv(rows, ("reltol",) + LOSS_COLUMNS, os.path.join(out, "conservation.csv"))
        write_manifest(cfg, out, time.perf_counter() - wall,
                       {"t_end": t_end, "grid": n, "order": order,
                        "failures": [r["failure"] for r in rows if r["failure"]],
                        "stats": [r["stats"] for r in rows]})
    return rows


def run_identities(cfg: ExperimentConfig) -> list:
    """Identity audit for every ``(grid, order)``; the seed drives the random states."""
    wall = time.perf_counter()
    reports = []
    for n in cfg.grids:
        for order in cfg.orders:
            grid = build_grid(cfg.mapping, n, n, order)
            reports.append(check_operator_identities(grid, trials=cfg.trials, seed=cfg.seed))
    out = _out_dir(cfg)
    if out:
        write_identity_reports(reports, os.path.join(out, "identities.json"),
                               os.path.join(out, "identities.csv"))
        write_manifest(cfg, out, time.perf_counter() - wall,
                       {"worst": max(r.worst for r in reports)})
    return reports


def diagonal_slice(cfg: ExperimentConfig, result: SimulationResult, wave=None) -> list:
    """Density along the grid anti-diagonal, where ``s`` varies, next to the exact density."""
    grid = build_grid(cfg.mapping, result.grid, result.grid, result.order)
    model = model_of(cfg)
    i = np.arange(min(grid.mx, grid.my))
    idx = (grid.my - 1 - i) * grid.mx + i
    x, y = grid.xc[idx, 0], grid.xc[idx, 1]
    s = diagonal_coordinate(x, y)
    rows = []
    exact = None
    if model.name == "linear" or result.t_end < wave.t_shock:
        exact, _ = exact_fields(model, wave, x, y, result.t_end)
    for i, k in enumerate(idx):
        rows.append({"i": i, "x": x[i], "y": y[i], "s": s[i], "rho": result.state.rho[k],
                     "rho_exact": None if exact is None else exact[i]})
    return rows


def run_single(cfg: ExperimentConfig) -> SimulationResult:
    """One run on the first grid, order and reltol, with state dump and diagonal slice."""
    wall = time.perf_counter()
    wave = wave_of(cfg)
    r = simulate(cfg, cfg.grids[0], cfg.orders[0], cfg.reltols[0], None, wave)
    if r.failure is not None:
        raise NumericalError(r.failure)
    out = _out_dir(cfg)
    if out:
        write_csv(diagonal_slice(cfg, r, wave), ("i", "x", "y", "s", "rho", "rho_exact"),
                  os.path.join(out, "diagonal.csv"))
        np.save(os.path.join(out, "state.npy"), r.state.pack())
        with open(os.path.join(out, "state.json"), "w") as fh:
            fh.write(r.state.header())
        write_manifest(cfg, out, time.perf_counter() - wall,
                       {"t_end": r.t_end, "error": r.error, "stats": r.stats,
                        "initial": r.initial.to_dict(), "final": r.final.to_dict()})
    return r


RUNNERS = {"identities": run_identities, "conservation": run_conservation,
           "convergence": run_convergence, "single-run": run_single}
