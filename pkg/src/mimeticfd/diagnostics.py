"""Discrete conserved quantities and the operator-identity audit."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import MimeticError
from .grid import StaggeredGrid, build_grid, constant_field_repr
from .linops import LinOp, inner_c, inner_v, weighted_adjoint
from .mimetic_ops import OperatorBundle, build_bundle
from .models import Model, ModelState, compressible_state, rhs, shallow_water_state

DEFAULT_SCALE_FLOOR = 1e-14


@dataclass
class ConservationReport:
    """Conserved quantities at time ``t``; ``losses`` are relative to a reference."""

    t: float
    mass: float
    momentum_x: float
    momentum_y: float
    energy: float
    losses: dict = field(default_factory=dict)

    def with_losses(self, ref: "ConservationReport",
                    floor: float = DEFAULT_SCALE_FLOOR) -> "ConservationReport":
        """Copy with ``losses`` = ``|X(t) - X(0)| / max(|X(0)|, floor)`` per quantity.

        Momentum uses the vector norm of both components.
        """
        def loss(a, b):
            return abs(a - b) / max(abs(b), floor)
        mom = math.hypot(self.momentum_x - ref.momentum_x, self.momentum_y - ref.momentum_y)
        mom_ref = math.hypot(ref.momentum_x, ref.momentum_y)
        losses = {"mass": loss(self.mass, ref.mass),
                  "momentum": mom / max(mom_ref, floor),
                  "energy": loss(self.energy, ref.energy)}
        return ConservationReport(self.t, self.mass, self.momentum_x, self.momentum_y,
                                  self.energy, losses)

    def to_dict(self) -> dict:
        return asdict(self)


def _velocity(state: ModelState, bundle: OperatorBundle) -> np.ndarray:
    if state.model == "euler":
        return state.vec / bundle.fast.interp_vc(state.rho)
    return state.vec


def conserved_quantities(state: ModelState, bundle: OperatorBundle, model: Model,
                         t: float = 0.0) -> ConservationReport:
    """Mass, momentum and total energy of a discrete state."""
    g = bundle.grid
    c100 = constant_field_repr(g, (1.0, 0.0))
    c010 = constant_field_repr(g, (0.0, 1.0))
    ones = np.ones(g.n)
    mass = inner_c(ones, state.rho, g)
    p = model.eq.p_from_rho(state.rho)
    if model.name == "euler":
        v = _velocity(state, bundle)
        mom = (inner_v(c100, state.vec, g), inner_v(c010, state.vec, g))
        energy = inner_c(ones, model.eq.e_int(p), g) + 0.5 * inner_v(state.vec, v, g)
    else:
        v = state.vec
        mom = (model.rho0 * inner_v(c100, v, g), model.rho0 * inner_v(c010, v, g))
        energy = inner_c(ones, model.eq.e_int(p), g) + 0.5 * model.rho0 * inner_v(v, v, g)
    return ConservationReport(t, mass, mom[0], mom[1], energy)


def _rate(terms, weights) -> tuple[float, float]:
    """Sum of weighted products and the sum of their magnitudes."""
    total, scale = [], []
    for (a, b), w in zip(terms, weights):
        prod = w[0] * np.asarray(a) * w[1] * np.asarray(b)
        total.append(prod)
        scale.append(np.abs(prod))
    total = np.concatenate(total)
    scale = np.concatenate(scale)
    return math.fsum(total), math.fsum(scale)


def conservation_rates(state: ModelState, bundle: OperatorBundle, model: Model) -> dict:
    """Exact time derivatives of the conserved quantities implied by the RHS.

    Each entry is ``(rate, scale)`` where ``scale`` is the sum of magnitudes
    of the summed terms, so ``rate / scale`` is a relative residual.
    """
    g = bundle.grid
    d = rhs(state, bundle, model)
    c100 = constant_field_repr(g, (1.0, 0.0))
    c010 = constant_field_repr(g, (0.0, 1.0))
    wc, wv = g.dVc, g.dVv
    one = np.ones(g.n)
    p = model.eq.p_from_rho(state.rho)
    out = {"mass": _rate([(one, d.rho)], [(wc, 1.0)])}
    s = 1.0 if model.name == "euler" else model.rho0
    out["momentum_x"] = _rate([(c100, d.vec)], [(wv, s)])
    out["momentum_y"] = _rate([(c010, d.vec)], [(wv, s)])
    e_rho = model.eq.de_drho(p)
    if model.name == "euler":
        v = _velocity(state, bundle)
        drho_v = bundle.fast.interp_vc(d.rho)
        out["energy"] = _rate([(e_rho, d.rho), (v, d.vec), (v * v, drho_v)],
                              [(wc, 1.0), (wv, 1.0), (wv, -0.5)])
    else:
        out["energy"] = _rate([(e_rho, d.rho), (state.vec, d.vec)],
                              [(wc, 1.0), (wv, model.rho0)])
    return out


# operator identities -------------------------------------------------------

def _norm_inf(A: LinOp) -> float:
    return float(np.abs(A.mat).sum(axis=1).max()) if A.mat.nnz else 0.0


def _vec_residual(res, *terms) -> float:
    """``max|res| / max(1, max ||A||_inf ||x||_inf)`` over the terms ``(A, x)``."""
    scale = max([1.0] + [_norm_inf(A) * float(np.abs(x).max()) for A, x in terms])
    return float(np.abs(res).max()) / scale


def _mat_residual(res, *ops) -> float:
    scale = max([1.0] + [float(np.abs(A.mat).max()) for A in ops if A.mat.nnz])
    r = abs(res).max() if res.nnz else 0.0
    return float(r) / scale


IDENTITIES = (
    "DIV* c1 = 0", "GRAD* c100 = 0", "GRAD* c010 = 0", "ADVEC* c100 = 0", "ADVEC* c010 = 0",
    "DIVr~* c1 = 0", "DIVr* c1 = 0", "DIV c100 = 0", "DIV c010 = 0", "GRAD c1 = 0",
    "r~GRAD S(p) = GRAD Q(p)", "rGRAD Q(p) = GRAD p", "DIV + GRAD* = 0",
    "DIVr~ + r~GRAD* = 0", "DIVr + rGRAD* = 0", "ADVEC + ADVEC* = diag(Interp_vc DIVr v)",
    "ADVEC_s c1 = DIVr v", "<x, (ADVEC - ADVEC*) x> = 0", "factored = assembled",
)


def _random_state(rng, n):
    p = 1.0 + 0.5 * rng.random(n)
    v = rng.standard_normal(2 * n)
    return p, v


def _trial(bundle: OperatorBundle, rng, require_exact: bool) -> dict:
    g = bundle.grid
    n = g.n
    c1 = np.ones(n)
    c100 = constant_field_repr(g, (1.0, 0.0))
    c010 = constant_field_repr(g, (0.0, 1.0))
    DIV, GRAD = bundle.DIV, bundle.GRAD
    ceq = compressible_state()
    seq = shallow_water_state()
    p, v = _random_state(rng, n)
    w = rng.standard_normal(2 * n)
    rgt, divrt = bundle.rgrad_tilde(p, ceq)
    ps = seq.p_from_rho(p)
    rg, divr = bundle.rgrad(ps, seq)
    parts = bundle.advec(v, ps, seq, parts=True, require_exact=require_exact)
    A = parts["ADVEC"]
    As = weighted_adjoint(A)
    r = {}
    r["DIV* c1 = 0"] = _vec_residual(weighted_adjoint(DIV) @ c1, (weighted_adjoint(DIV), c1))
    Gs = weighted_adjoint(GRAD)
    r["GRAD* c100 = 0"] = _vec_residual(Gs @ c100, (Gs, c100))
    r["GRAD* c010 = 0"] = _vec_residual(Gs @ c010, (Gs, c010))
    r["ADVEC* c100 = 0"] = _vec_residual(As @ c100, (As, c100))
    r["ADVEC* c010 = 0"] = _vec_residual(As @ c010, (As, c010))
    Dts = weighted_adjoint(divrt)
    r["DIVr~* c1 = 0"] = _vec_residual(Dts @ c1, (Dts, c1))
    Drs = weighted_adjoint(divr)
    r["DIVr* c1 = 0"] = _vec_residual(Drs @ c1, (Drs, c1))
    r["DIV c100 = 0"] = _vec_residual(DIV @ c100, (DIV, c100))
    r["DIV c010 = 0"] = _vec_residual(DIV @ c010, (DIV, c010))
    r["GRAD c1 = 0"] = _vec_residual(GRAD @ c1, (GRAD, c1))
    s, q = ceq.S(p), ceq.Q(p)
    r["r~GRAD S(p) = GRAD Q(p)"] = _vec_residual(rgt @ s - GRAD @ q, (rgt, s), (GRAD, q))
    q = seq.Q(ps)
    r["rGRAD Q(p) = GRAD p"] = _vec_residual(rg @ q - GRAD @ ps, (rg, q), (GRAD, ps))
    r["DIV + GRAD* = 0"] = _mat_residual(DIV.mat + Gs.mat, DIV)
    r["DIVr~ + r~GRAD* = 0"] = _mat_residual(divrt.mat + weighted_adjoint(rgt).mat, divrt)
    r["DIVr + rGRAD* = 0"] = _mat_residual(divr.mat + weighted_adjoint(rg).mat, divr)
    diag = bundle.Interp_vc @ (divr @ v)
    r["ADVEC + ADVEC* = diag(Interp_vc DIVr v)"] = _mat_residual(
        A.mat + As.mat - sp.diags(diag), A)
    ones_v = np.ones(2 * n)
    r["ADVEC_s c1 = DIVr v"] = _vec_residual(parts["ADVEC_s"] @ ones_v - divr @ v,
                                             (parts["ADVEC_s"], ones_v), (divr, v))
    skew = inner_v(w, A @ w - As @ w, g)
    r["<x, (ADVEC - ADVEC*) x> = 0"] = abs(skew) / max(1.0, _norm_inf(A) * inner_v(w, w, g))
    dens = bundle.fast.densities(ps, seq, "rho")
    fast = [(bundle.fast.div(v), DIV @ v), (bundle.fast.grad(p), GRAD @ p),
            (bundle.fast.div(v, dens), divr @ v), (bundle.fast.grad(q, dens), rg @ q),
            (bundle.fast.advec(v, w, dens), A @ w), (bundle.fast.interp_vc(p), bundle.Interp_vc @ p)]
    r["factored = assembled"] = max(float(np.abs(a - b).max()) / max(1.0, float(np.abs(b).max()))
                                    for a, b in fast)
    return r


@dataclass
class IdentityReport:
    mapping: dict
    mx: int
    my: int
    order: int
    trials: int
    seed: int
    constrained: bool
    interp_residual: float
    residuals: dict
    errors: list = field(default_factory=list)

    @property
    def worst(self) -> float:
        vals = [v for v in self.residuals.values() if v is not None]
        return max(vals) if vals else float("nan")

    def passed(self, tol: float = 1e-12) -> bool:
        return not self.errors and all(v is not None and v <= tol for v in self.residuals.values())

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def check_operator_identities(grid: StaggeredGrid, order: int | None = None, trials: int = 3,
                              seed: int = 0, constraints: bool = True) -> IdentityReport:
    """Evaluate every discrete identity at ``trials`` random states.

    Failures to build an operator are recorded in ``errors``; this never raises
    for numerical reasons.
    """
    if order is not None and order != grid.order:
        grid = build_grid(grid.spec, grid.mx, grid.my, order)
    rng = np.random.default_rng(seed)
    worst = {k: 0.0 for k in IDENTITIES}
    errors = []
    interp_res = float("nan")
    try:
        bundle = build_bundle(grid, constraints=constraints, threshold=np.inf)
        interp_res = bundle.interp.constraint_residual
        for _ in range(trials):
            for k, val in _trial(bundle, rng, require_exact=constraints).items():
                worst[k] = max(worst[k], val)
    except (MimeticError, ArithmeticError, ValueError) as exc:
        errors.append(f"{type(exc).__name__}: {exc}")
        worst = {k: None for k in IDENTITIES}
    return IdentityReport(mapping=grid.spec.to_dict(), mx=grid.mx, my=grid.my, order=grid.order,
                          trials=trials, seed=seed, constrained=constraints,
                          interp_residual=interp_res, residuals=worst, errors=errors)


def write_identity_reports(reports, json_path=None, csv_path=None) -> None:
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump([r.to_dict() for r in reports], fh, indent=2, sort_keys=True)
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["mapping", "seed", "mx", "my", "order", "identity", "residual"])
            for r in reports:
                for name, val in r.residuals.items():
                    wr.writerow([r.mapping["kind"], r.mapping["seed"], r.mx, r.my, r.order, name,
                                 "nan" if val is None else repr(val)])
