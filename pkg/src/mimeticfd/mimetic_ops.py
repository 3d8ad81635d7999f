"""Mimetic divergence, gradient, density-weighted pairs and advection.

Operators are assembled as explicit sparse matrices (``LinOp``) so their
weighted adjoints are exact. :class:`FactoredOps` evaluates the same
expressions with gathers and a few sparse products, which is what the model
right-hand sides use; tests check that both paths agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, OperatorError
from .grid import StaggeredGrid
from .linops import (DEFAULT_RESIDUAL_THRESHOLD, DiffSet, InterpSet, LinOp, build_diff_set,
                     build_interp_set)

# below this relative pressure jump a face density is evaluated by quadrature
QUADRATURE_SWITCH = 0.02
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(6)


# face densities ------------------------------------------------------------

def _mean_on_interval(f, pa, pb):
    """Mean of ``f`` over ``[pb, pa]`` by Gauss-Legendre quadrature."""
    mid = 0.5 * (pa + pb)
    half = 0.5 * (pa - pb)
    q = mid[..., None] + half[..., None] * _GL_NODES
    return f(q) @ _GL_WEIGHTS * 0.5


def density_ratio(pa: np.ndarray, pb: np.ndarray, eq, kind: str) -> np.ndarray:
    """Face density between pressures ``pa`` and ``pb``.

    ``kind='rho'`` gives ``(pa - pb) / (Q(pa) - Q(pb))``, ``kind='rho_tilde'``
    gives ``(Q(pa) - Q(pb)) / (S(pa) - S(pb))``. Both are mean values of ``R``
    over the interval; for nearly equal pressures the two integrals are
    evaluated by quadrature instead of by cancelling differences.
    """
    pa = np.asarray(pa, dtype=float)
    pb = np.asarray(pb, dtype=float)
    if np.any(pa <= 0) or np.any(pb <= 0):
        raise OperatorError("face densities need strictly positive pressure")
    close = np.abs(pa - pb) <= QUADRATURE_SWITCH * 0.5 * (pa + pb)
    out = np.empty_like(pa)
    far = ~close
    if kind == "rho":
        with np.errstate(divide="ignore", invalid="ignore"):
            out[far] = (pa[far] - pb[far]) / (eq.Q(pa[far]) - eq.Q(pb[far]))
        if np.any(close):
            out[close] = 1.0 / _mean_on_interval(lambda q: 1.0 / eq.R(q), pa[close], pb[close])
    elif kind == "rho_tilde":
        with np.errstate(divide="ignore", invalid="ignore"):
            out[far] = (eq.Q(pa[far]) - eq.Q(pb[far])) / (eq.S(pa[far]) - eq.S(pb[far]))
        if np.any(close):
            a, b = pa[close], pb[close]
            out[close] = (_mean_on_interval(lambda q: 1.0 / eq.R(q), a, b)
                          / _mean_on_interval(lambda q: 1.0 / eq.R(q) ** 2, a, b))
    else:
        raise ValueError(f"unknown density kind {kind!r}")
    return out


def _transpose_gathers(grid: StaggeredGrid, k: int):
    """Indices with ``DIFFX(eps)^T g = g[xa] - g[xb]`` (and the same for y)."""
    mx, my = grid.mx, grid.my
    i = np.arange(grid.n)
    ix, iy = i % mx, i // mx
    xa = (ix - k) % mx + mx * iy
    xb = (ix + k + 1) % mx + mx * iy
    ya = ix + mx * ((iy - k) % my)
    yb = ix + mx * ((iy + k + 1) % my)
    return xa, xb, ya, yb


def face_densities(grid: StaggeredGrid, p: np.ndarray, eq, kind: str) -> list:
    """Per-eps pairs ``(rho_e, rho_n)`` built from the two pressures each
    difference stencil couples."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise OperatorError("pressure must be strictly positive")
    out = []
    for k in range(grid.order // 2):
        xa, xb, ya, yb = _transpose_gathers(grid, k)
        out.append((density_ratio(p[xa], p[xb], eq, kind),
                    density_ratio(p[ya], p[yb], eq, kind)))
    return out


# materialised operators ----------------------------------------------------

def _weighted_div(grid: StaggeredGrid, interp: InterpSet, diffs: DiffSet, dens=None) -> LinOp:
    """``1/2 diag(dVc)^-1 sum alpha [DIFFX diag(rho_e) Fe + DIFFY diag(rho_n) Fn]``."""
    n = grid.n
    ax = sp.csr_matrix((n, n))
    bx = sp.csr_matrix((n, n))
    ay = sp.csr_matrix((n, n))
    by = sp.csr_matrix((n, n))
    for k, a in enumerate(diffs.alpha):
        re, rn = (np.ones(n), np.ones(n)) if dens is None else dens[k]
        dx, dy = diffs.DIFFX[k].mat, diffs.DIFFY[k].mat
        ax = ax + a * (dx @ sp.diags(re * grid.nxe[k]))
        ay = ay + a * (dx @ sp.diags(re * grid.nye[k]))
        bx = bx + a * (dy @ sp.diags(rn * grid.nxn[k]))
        by = by + a * (dy @ sp.diags(rn * grid.nyn[k]))
    scale = sp.diags(0.5 / grid.dVc)
    left = scale @ (ax + bx @ interp.E2N.mat)
    right = scale @ (ay @ interp.N2E.mat + by)
    return LinOp(sp.hstack([left, right]), grid.dVc, grid.dVv)


def build_DIV(grid: StaggeredGrid, interp: InterpSet, diffs: DiffSet) -> LinOp:
    """Divergence of a staggered vector field, evaluated at cell centres."""
    return _weighted_div(grid, interp, diffs)


def build_GRAD(DIV: LinOp) -> LinOp:
    """``GRAD = -DIV*``; ``-GRAD*`` then has exactly the entries of ``DIV``."""
    return -DIV.adjoint()


def build_rGRAD_tilde(grid: StaggeredGrid, interp: InterpSet, diffs: DiffSet,
                      p: np.ndarray, eq) -> tuple[LinOp, LinOp]:
    """``(r~GRAD, DIVr~)`` with densities ``dQ/dS`` on every face."""
    divr = _weighted_div(grid, interp, diffs, face_densities(grid, p, eq, "rho_tilde"))
    return -divr.adjoint(), divr


def build_rGRAD(grid: StaggeredGrid, interp: InterpSet, diffs: DiffSet,
                p: np.ndarray, eq) -> tuple[LinOp, LinOp]:
    """``(rGRAD, DIVr)`` with densities ``dp/dQ`` on every face."""
    divr = _weighted_div(grid, interp, diffs, face_densities(grid, p, eq, "rho"))
    return -divr.adjoint(), divr


def build_interp_vc(grid: StaggeredGrid, interp: InterpSet) -> LinOp:
    """Cell-to-face interpolation ``(E2C*; N2C*)``."""
    mat = sp.vstack([interp.E2C.adjoint().mat, interp.N2C.adjoint().mat])
    return LinOp(mat, grid.dVv, grid.dVc)


def build_ADVEC_s(grid: StaggeredGrid, interp: InterpSet, diffs: DiffSet,
                  v: np.ndarray, dens) -> LinOp:
    """Scalar advection of a face-sampled field ``(f_e; f_n)`` by the flux of ``v``."""
    n = grid.n
    vx, vy = v[:n], v[n:]
    vy_e = interp.N2E @ vy
    vx_n = interp.E2N @ vx
    left = sp.csr_matrix((n, n))
    right = sp.csr_matrix((n, n))
    for k, a in enumerate(diffs.alpha):
        re, rn = dens[k]
        fe = grid.nxe[k] * vx + grid.nye[k] * vy_e
        fn = grid.nxn[k] * vx_n + grid.nyn[k] * vy
        left = left + a * (diffs.DIFFX[k].mat @ sp.diags(re * fe))
        right = right + a * (diffs.DIFFY[k].mat @ sp.diags(rn * fn))
    scale = sp.diags(0.5 / grid.dVc)
    return LinOp(sp.hstack([scale @ left, scale @ right]), grid.dVc, grid.dVv)


def check_advec_interp(interp: InterpSet, threshold: float):
    if not interp.constrained or interp.constraint_residual > threshold:
        raise OperatorError(
            "ADVEC needs product-exact interpolation; constraint residual "
            f"{interp.constraint_residual:.3e} (constrained={interp.constrained})")


def build_ADVEC(grid: StaggeredGrid, interp: InterpSet, diffs: DiffSet, v: np.ndarray,
                p: np.ndarray, eq, threshold: float = DEFAULT_RESIDUAL_THRESHOLD,
                parts: bool = False, require_exact: bool = True):
    """Skew-symmetrised momentum advection operator at the state ``(v, p)``.

    With ``parts=True`` a dict holding ``ADVEC_s``, ``ADVEC_a``, ``DIVr``,
    ``Interp_vc`` and ``ADVEC`` is returned instead of ``ADVEC`` alone.
    ``require_exact=False`` skips the interpolation quality check; only the
    identity audit uses it, to show what breaks without the constraints.
    """
    if require_exact:
        check_advec_interp(interp, threshold)
    n = grid.n
    v = np.asarray(v, dtype=float)
    dens = face_densities(grid, p, eq, "rho")
    adv_s = build_ADVEC_s(grid, interp, diffs, v, dens).mat
    g = grid
    d = sp.diags
    # face-sampled Cartesian components of a staggered field
    t10 = sp.bmat([[d(g.rxx_at_e), d(g.ryx_at_e) @ interp.N2E.mat],
                   [d(g.rxx_at_n) @ interp.E2N.mat, d(g.ryx_at_n)]])
    t01 = sp.bmat([[d(g.rxy_at_e), d(g.ryy_at_e) @ interp.N2E.mat],
                   [d(g.rxy_at_n) @ interp.E2N.mat, d(g.ryy_at_n)]])
    e2c_s = interp.E2C.adjoint().mat
    n2c_s = interp.N2C.adjoint().mat
    back = sp.bmat([[d(g.rxx_at_e) @ e2c_s, d(g.rxy_at_e) @ e2c_s],
                    [d(g.ryx_at_n) @ n2c_s, d(g.ryy_at_n) @ n2c_s]])
    adv_c = sp.vstack([adv_s @ t10, adv_s @ t01])
    adv_a = LinOp(back @ adv_c, g.dVv, g.dVv)
    divr = _weighted_div(grid, interp, diffs, dens)
    ivc = build_interp_vc(grid, interp)
    corr = ivc @ (divr @ v)
    mat = 0.5 * (adv_a.mat - adv_a.adjoint().mat + sp.diags(corr))
    adv = LinOp(mat, g.dVv, g.dVv)
    if parts:
        return {"ADVEC_s": LinOp(adv_s, g.dVc, g.dVv), "ADVEC_a": adv_a, "DIVr": divr,
                "Interp_vc": ivc, "ADVEC": adv, "n": n}
    return adv


# factored evaluation -------------------------------------------------------

class FactoredOps:
    """Matrix-free evaluation of the state-dependent operators.

    Differences are gathers; only the interpolations are sparse products.
    """

    def __init__(self, grid: StaggeredGrid, interp: InterpSet, diffs: DiffSet):
        self.grid = grid
        self.interp = interp
        self.alpha = np.asarray(diffs.alpha)
        n = grid.n
        mx, my = grid.mx, grid.my
        i = np.arange(n)
        ix, iy = i % mx, i // mx
        self._fwd = []
        self._bwd = []
        for k in range(grid.order // 2):
            self._fwd.append(((ix + k) % mx + mx * iy, (ix - k - 1) % mx + mx * iy,
                              ix + mx * ((iy + k) % my), ix + mx * ((iy - k - 1) % my)))
            self._bwd.append(_transpose_gathers(grid, k))
        self.N2E = interp.N2E.mat
        self.E2N = interp.E2N.mat
        self.N2E_T = interp.N2E.mat.T.tocsr()
        self.E2N_T = interp.E2N.mat.T.tocsr()
        self.E2C = interp.E2C.mat
        self.N2C = interp.N2C.mat
        self.E2C_T = interp.E2C.mat.T.tocsr()
        self.N2C_T = interp.N2C.mat.T.tocsr()

    # basic pieces
    def fluxes(self, v):
        g, n = self.grid, self.grid.n
        vx, vy = v[:n], v[n:]
        vy_e = self.N2E @ vy
        vx_n = self.E2N @ vx
        return [(g.nxe[k] * vx + g.nye[k] * vy_e, g.nxn[k] * vx_n + g.nyn[k] * vy)
                for k in range(len(self.alpha))]

    def densities(self, p, eq, kind):
        out = []
        for xa, xb, ya, yb in self._bwd:
            out.append((density_ratio(p[xa], p[xb], eq, kind),
                        density_ratio(p[ya], p[yb], eq, kind)))
        return out

    def _div_faces(self, ge_list, gn_list):
        """``1/2 dVc^-1 sum alpha (DIFFX ge + DIFFY gn)``."""
        out = np.zeros(self.grid.n)
        for a, (xp, xm, yp, ym), ge, gn in zip(self.alpha, self._fwd, ge_list, gn_list):
            out += a * (ge[xp] - ge[xm] + gn[yp] - gn[ym])
        return 0.5 * out / self.grid.dVc

    def div(self, v, dens=None):
        """``DIV v``, or ``DIVr v`` style when face densities are given."""
        fl = self.fluxes(v)
        if dens is None:
            return self._div_faces([f[0] for f in fl], [f[1] for f in fl])
        return self._div_faces([r[0] * f[0] for r, f in zip(dens, fl)],
                               [r[1] * f[1] for r, f in zip(dens, fl)])

    def grad(self, q, dens=None):
        """``-DIV*`` applied to a cell field (with densities: ``rGRAD``)."""
        g, n = self.grid, self.grid.n
        ex = np.zeros(n)
        ey = np.zeros(n)
        nx = np.zeros(n)
        ny = np.zeros(n)
        for k, (a, (xa, xb, ya, yb)) in enumerate(zip(self.alpha, self._bwd)):
            he = 0.5 * a * (q[xa] - q[xb])
            hn = 0.5 * a * (q[ya] - q[yb])
            if dens is not None:
                he = he * dens[k][0]
                hn = hn * dens[k][1]
            ex += g.nxe[k] * he
            ey += g.nye[k] * he
            nx += g.nxn[k] * hn
            ny += g.nyn[k] * hn
        gx = ex + self.E2N_T @ nx
        gy = self.N2E_T @ ey + ny
        return -np.concatenate([gx / g.dVe, gy / g.dVn])

    def interp_vc(self, rho):
        g = self.grid
        return np.concatenate([(self.E2C_T @ (g.dVc * rho)) / g.dVe,
                               (self.N2C_T @ (g.dVc * rho)) / g.dVn])

    # advection
    def advec(self, v, w, dens):
        """``ADVEC(v, p) w`` where ``dens`` are the ``rho`` face densities of ``p``."""
        g, n = self.grid, self.grid.n
        fl = self.fluxes(v)
        rf = [(r[0] * f[0], r[1] * f[1]) for r, f in zip(dens, fl)]
        divr = self._div_faces([x[0] for x in rf], [x[1] for x in rf])
        corr = self.interp_vc(divr)
        return 0.5 * (self._advec_a(w, rf) - self._advec_a_adj(w, rf) + corr * w)

    def _advec_s(self, fe, fn, rf):
        return self._div_faces([x[0] * fe for x in rf], [x[1] * fn for x in rf])

    def _advec_s_T(self, h, rf):
        """Transpose (plain, unweighted) of ``ADVEC_s``."""
        n = self.grid.n
        h = 0.5 * h / self.grid.dVc
        ge = np.zeros(n)
        gn = np.zeros(n)
        for a, (xa, xb, ya, yb), (re, rn) in zip(self.alpha, self._bwd, rf):
            ge += a * re * (h[xa] - h[xb])
            gn += a * rn * (h[ya] - h[yb])
        return ge, gn

    def _cart(self, w):
        g, n = self.grid, self.grid.n
        wx, wy = w[:n], w[n:]
        wy_e = self.N2E @ wy
        wx_n = self.E2N @ wx
        return ((g.rxx_at_e * wx + g.ryx_at_e * wy_e, g.rxx_at_n * wx_n + g.ryx_at_n * wy),
                (g.rxy_at_e * wx + g.ryy_at_e * wy_e, g.rxy_at_n * wx_n + g.ryy_at_n * wy))

    def _cart_T(self, c10, c01):
        g = self.grid
        (ae, an), (be, bn) = c10, c01
        tx = g.rxx_at_e * ae + g.rxy_at_e * be + self.E2N_T @ (g.rxx_at_n * an + g.rxy_at_n * bn)
        ty = self.N2E_T @ (g.ryx_at_e * ae + g.ryy_at_e * be) + g.ryx_at_n * an + g.ryy_at_n * bn
        return np.concatenate([tx, ty])

    def _e2c_adj(self, a):
        return (self.E2C_T @ (self.grid.dVc * a)) / self.grid.dVe

    def _n2c_adj(self, a):
        return (self.N2C_T @ (self.grid.dVc * a)) / self.grid.dVn

    def _advec_a(self, w, rf):
        g = self.grid
        c10, c01 = self._cart(w)
        a10 = self._advec_s(*c10, rf)
        a01 = self._advec_s(*c01, rf)
        ea, eb = self._e2c_adj(a10), self._e2c_adj(a01)
        na, nb = self._n2c_adj(a10), self._n2c_adj(a01)
        return np.concatenate([g.rxx_at_e * ea + g.rxy_at_e * eb, g.ryx_at_n * na + g.ryy_at_n * nb])

    def _advec_a_adj(self, w, rf):
        """``ADVEC_a* w = diag(dVv)^-1 ADVEC_a^T diag(dVv) w``."""
        g, n = self.grid, self.grid.n
        u = g.dVv * w
        ue, un = u[:n], u[n:]
        # transpose of the rotation after the adjoint interpolations
        te10, te01 = g.rxx_at_e * ue, g.rxy_at_e * ue
        tn10, tn01 = g.ryx_at_n * un, g.ryy_at_n * un
        # transpose of E2C* = diag(dVe)^-1 E2C^T diag(dVc) is diag(dVc) E2C diag(dVe)^-1
        h10 = g.dVc * (self.E2C @ (te10 / g.dVe)) + g.dVc * (self.N2C @ (tn10 / g.dVn))
        h01 = g.dVc * (self.E2C @ (te01 / g.dVe)) + g.dVc * (self.N2C @ (tn01 / g.dVn))
        c10 = self._advec_s_T(h10, rf)
        c01 = self._advec_s_T(h01, rf)
        return self._cart_T(c10, c01) / g.dVv


# bundle --------------------------------------------------------------------

@dataclass(frozen=True)
class OperatorBundle:
    """State-independent operators of one grid plus builders for the rest."""

    grid: StaggeredGrid
    interp: InterpSet
    diffs: DiffSet
    DIV: LinOp
    GRAD: LinOp
    Interp_vc: LinOp
    fast: FactoredOps

    def rgrad_tilde(self, p, eq):
        return build_rGRAD_tilde(self.grid, self.interp, self.diffs, p, eq)

    def rgrad(self, p, eq):
        return build_rGRAD(self.grid, self.interp, self.diffs, p, eq)

    def advec(self, v, p, eq, parts=False, require_exact=True):
        return build_ADVEC(self.grid, self.interp, self.diffs, v, p, eq, parts=parts,
                           require_exact=require_exact)


def build_bundle(grid: StaggeredGrid, constraints: bool = True, **interp_kw) -> OperatorBundle:
    if not isinstance(grid, StaggeredGrid):
        raise ConfigError("build_bundle expects a StaggeredGrid")
    interp = build_interp_set(grid, constraints=constraints, **interp_kw)
    diffs = build_diff_set(grid)
    div = build_DIV(grid, interp, diffs)
    return OperatorBundle(grid=grid, interp=interp, diffs=diffs, DIV=div, GRAD=build_GRAD(div),
                          Interp_vc=build_interp_vc(grid, interp),
                          fast=FactoredOps(grid, interp, diffs))
