"""Weighted inner products, sparse operators and the elementary stencils.

Every operator carries the integration weights of its domain and codomain
so that its adjoint ``A* = diag(w_in)^-1 A^T diag(w_out)`` is available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .errors import GridQualityError, OperatorError
from .grid import StaggeredGrid

DEFAULT_RCOND = 1e-12
DEFAULT_RESIDUAL_THRESHOLD = 1e-10


class LinOp:
    """Sparse matrix tagged with codomain weights ``w_out`` and domain weights ``w_in``."""

    __slots__ = ("mat", "w_out", "w_in", "_adj")

    def __init__(self, mat, w_out: np.ndarray, w_in: np.ndarray):
        mat = sp.csr_matrix(mat)
        w_out = np.asarray(w_out, dtype=float)
        w_in = np.asarray(w_in, dtype=float)
        if mat.shape != (w_out.size, w_in.size):
            raise OperatorError(f"matrix shape {mat.shape} does not match weights "
                                f"({w_out.size}, {w_in.size})")
        self.mat = mat
        self.w_out = w_out
        self.w_in = w_in
        self._adj = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.mat.shape

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.mat @ x

    def adjoint(self) -> "LinOp":
        """Weighted adjoint; ``A.adjoint().adjoint() is A``."""
        if self._adj is None:
            if not (np.all(self.w_in > 0) and np.all(self.w_out > 0)):
                raise OperatorError("adjoint requires strictly positive weights")
            m = sp.diags(1.0 / self.w_in) @ self.mat.T @ sp.diags(self.w_out)
            adj = LinOp(m, self.w_in, self.w_out)
            adj._adj = self
            self._adj = adj
        return self._adj

    def toarray(self) -> np.ndarray:
        return self.mat.toarray()

    def __matmul__(self, other):
        if isinstance(other, LinOp):
            if self.shape[1] != other.shape[0]:
                raise OperatorError(f"cannot compose {self.shape} with {other.shape}")
            return LinOp(self.mat @ other.mat, self.w_out, other.w_in)
        return self.mat @ other

    def _check_same(self, other: "LinOp"):
        if self.shape != other.shape:
            raise OperatorError(f"shape mismatch {self.shape} vs {other.shape}")

    def __add__(self, other: "LinOp") -> "LinOp":
        self._check_same(other)
        return LinOp(self.mat + other.mat, self.w_out, self.w_in)

    def __sub__(self, other: "LinOp") -> "LinOp":
        self._check_same(other)
        return LinOp(self.mat - other.mat, self.w_out, self.w_in)

    def __neg__(self) -> "LinOp":
        out = LinOp(-self.mat, self.w_out, self.w_in)
        # keep the adjoint link exact: (-A)* = -(A*)
        adj = LinOp(-self.adjoint().mat, self.w_in, self.w_out)
        adj._adj = out
        out._adj = adj
        return out

    def __mul__(self, s: float) -> "LinOp":
        return LinOp(self.mat * float(s), self.w_out, self.w_in)

    __rmul__ = __mul__

    def __repr__(self):
        return f"LinOp(shape={self.shape}, nnz={self.mat.nnz})"


def weighted_adjoint(A: LinOp) -> LinOp:
    """Adjoint computed afresh from the weights, without the cached link."""
    if not (np.all(A.w_in > 0) and np.all(A.w_out > 0)):
        raise OperatorError("adjoint requires strictly positive weights")
    return LinOp(sp.diags(1.0 / A.w_in) @ A.mat.T @ sp.diags(A.w_out), A.w_in, A.w_out)


def adjoint(A: LinOp) -> LinOp:
    return A.adjoint()


def diag_op(d: np.ndarray, w: np.ndarray) -> LinOp:
    return LinOp(sp.diags(np.asarray(d, dtype=float)), w, w)


def write_coo(A: LinOp, path) -> None:
    """Write ``row col value`` lines for external inspection."""
    m = A.mat.tocoo()
    with open(path, "w") as fh:
        fh.write(f"# {m.shape[0]} {m.shape[1]} {m.nnz}\n")
        for r, c, v in zip(m.row, m.col, m.data):
            fh.write(f"{r} {c} {v!r}\n")


# inner products -------------------------------------------------------------

def _weighted_sum(a, w, b) -> float:
    return math.fsum(np.asarray(a, dtype=float) * w * np.asarray(b, dtype=float))


def inner_c(a: np.ndarray, b: np.ndarray, grid: StaggeredGrid) -> float:
    """``<a, b>_c = sum_i a_i dVc_i b_i``."""
    if np.shape(a) != (grid.n,) or np.shape(b) != (grid.n,):
        raise OperatorError("cell fields must have length mx*my")
    return _weighted_sum(a, grid.dVc, b)


def inner_v(v: np.ndarray, w: np.ndarray, grid: StaggeredGrid) -> float:
    """``<v, w>_v``: e-parts weighted by dVe plus n-parts weighted by dVn."""
    if np.shape(v) != (2 * grid.n,) or np.shape(w) != (2 * grid.n,):
        raise OperatorError("staggered vector fields must have length 2*mx*my")
    return _weighted_sum(v, grid.dVv, w)


# differentiation coefficients ----------------------------------------------

def _solve_exact(a: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    n = len(b)
    m = [row[:] + [rhs] for row, rhs in zip(a, b)]
    for col in range(n):
        piv = next(r for r in range(col, n) if m[r][col] != 0)
        m[col], m[piv] = m[piv], m[col]
        for r in range(n):
            if r != col and m[r][col] != 0:
                f = m[r][col] / m[col][col]
                m[r] = [x - f * y for x, y in zip(m[r], m[col])]
    return [m[i][n] / m[i][i] for i in range(n)]


def alpha_fractions(order: int) -> list[Fraction]:
    """Exact weights of the staggered first-derivative stencil."""
    if order < 2 or order % 2:
        raise ValueError(f"order must be an even integer >= 2, got {order}")
    k = order // 2
    # exact on odd monomials: sum_k alpha_k (2k-1)^(2j-1) = delta_j1
    a = [[Fraction(2 * m - 1) ** (2 * j - 1) for m in range(1, k + 1)] for j in range(1, k + 1)]
    b = [Fraction(1 if j == 1 else 0) for j in range(1, k + 1)]
    return _solve_exact(a, b)


def alpha_coefficients(order: int) -> list[float]:
    """``alpha(eps)`` for ``eps = 1/2, 3/2, ...``; order 4 gives ``[9/8, -1/24]``."""
    return [float(f) for f in alpha_fractions(order)]


# interpolation -------------------------------------------------------------

def lagrange_weights(nodes: np.ndarray, x: float = 0.0) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=float)
    w = np.ones(nodes.size)
    for j, tj in enumerate(nodes):
        for m, tm in enumerate(nodes):
            if m != j:
                w[j] *= (x - tm) / (tj - tm)
    return w


@dataclass(frozen=True)
class InterpSet:
    """Staggering and destaggering matrices of one grid.

    ``constraint_residual`` is the largest violation of the exactness
    constraints (including unit row sums) over all four base matrices.
    """

    C2E: LinOp
    E2C: LinOp
    C2N: LinOp
    N2C: LinOp
    N2E: LinOp
    E2N: LinOp
    constraint_residual: float
    constrained: bool


def _stencil_offsets(to_face: bool, support: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer index offsets and relative node positions (in cell widths)."""
    h = support // 2
    if to_face:
        # target face j at j+1, sources (cells) j+m at j+m+1/2
        m = np.arange(-h + 1, h + 1)
        pos = m - 0.5
    else:
        # target cell i at i+1/2, sources (faces) i+m at i+m+1
        m = np.arange(-h, h)
        pos = m + 0.5
    return m, pos


def _interp_matrix(grid: StaggeredGrid, axis: str, to_face: bool, order: int,
                   src_funcs, tgt_funcs, support: int, rcond: float) -> sp.csr_matrix:
    mx, my, n = grid.mx, grid.my, grid.n
    off, pos = _stencil_offsets(to_face, support)
    base = np.zeros(support)
    lo = (support - order) // 2
    base[lo:lo + order] = lagrange_weights(pos[lo:lo + order])

    i = np.arange(n)
    ix, iy = i % mx, i // mx
    if axis == "x":
        cols = (ix[:, None] + off[None, :]) % mx + mx * iy[:, None]
    else:
        cols = ix[:, None] + mx * ((iy[:, None] + off[None, :]) % my)

    w = np.broadcast_to(base, (n, support)).copy()
    if src_funcs:
        F = np.stack([f[cols] for f in src_funcs], axis=1)          # (n, k, S)
        T = np.stack(tgt_funcs, axis=1)                              # (n, k)
        # exactness for f - f(target) given the moment rows below, row-normalised
        Fc = F - T[:, :, None]
        norms = np.linalg.norm(Fc, axis=2)
        live = norms > 1e-13
        Fc = np.where(live[:, :, None], Fc / np.where(live, norms, 1.0)[:, :, None], 0.0)
        # the correction leaves the polynomial moments below the order untouched
        P = np.vander(pos / (support / 2), order, increasing=True).T
        P /= np.linalg.norm(P, axis=1, keepdims=True)
        C = np.concatenate([np.broadcast_to(P, (n,) + P.shape), Fc], axis=1)
        r = -np.einsum("nks,ns->nk", C, w)
        r[:, :P.shape[0]] = 0.0
        U, s, Vt = np.linalg.svd(C, full_matrices=False)
        keep = s > rcond * s[:, :1]
        sinv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
        coef = np.einsum("nkm,nk->nm", U, r) * sinv
        dw = np.einsum("nms,nm->ns", Vt, coef)
        # rows whose orientation samples do not vary need no correction
        dw[~live.any(axis=1)] = 0.0
        w += dw
    mat = sp.csr_matrix((w.ravel(), (np.repeat(i, support), cols.ravel())), shape=(n, n))
    mat.eliminate_zeros()
    return mat




def interp_support(name: str, order: int) -> int:
    """Stencil width of a constrained interpolation row.

    Where the grid orientation has an extremum along a stencil line, samples
    pair up symmetrically and only ``support / 2`` distinct orientation values
    remain; the product constraints of E2C/N2C need five of them.
    """
    minimum = 8 if name in ("C2E", "C2N") else 12
    return max(minimum, order + 4)


def build_interp_set(grid: StaggeredGrid, order: int | None = None, constraints: bool = True,
                     rcond: float = DEFAULT_RCOND,
                     threshold: float = DEFAULT_RESIDUAL_THRESHOLD) -> InterpSet:
    """Constraint-corrected 1D Lagrange interpolations between point families.

    With ``constraints=False`` the plain Lagrange stencils are returned and no
    quality check is made; this exists to demonstrate what the constraints buy.
    """
    order = grid.order if order is None else order
    g = grid
    specs = {
        "C2E": ("x", True, [g.ryx_at_c, g.ryy_at_c], [g.ryx_at_e, g.ryy_at_e]),
        "C2N": ("y", True, [g.rxx_at_c, g.rxy_at_c], [g.rxx_at_n, g.rxy_at_n]),
        "E2C": ("x", False,
                [g.rxx_at_e, g.rxy_at_e, g.rxx_at_e**2, g.rxx_at_e * g.rxy_at_e, g.rxy_at_e**2],
                [g.rxx_at_c, g.rxy_at_c, g.rxx_at_c**2, g.rxx_at_c * g.rxy_at_c, g.rxy_at_c**2]),
        "N2C": ("y", False,
                [g.ryx_at_n, g.ryy_at_n, g.ryx_at_n**2, g.ryx_at_n * g.ryy_at_n, g.ryy_at_n**2],
                [g.ryx_at_c, g.ryy_at_c, g.ryx_at_c**2, g.ryx_at_c * g.ryy_at_c, g.ryy_at_c**2]),
    }
    weights = {"C": g.dVc, "E": g.dVe, "N": g.dVn}
    ops, worst = {}, 0.0
    for name, (axis, to_face, src, tgt) in specs.items():
        support = interp_support(name, order) if constraints else order
        mat = _interp_matrix(g, axis, to_face, order, src if constraints else [],
                             tgt if constraints else [], support, rcond)
        resid = _check_constraints(mat, src, tgt)
        worst = max(worst, resid)
        ops[name] = LinOp(mat, weights[name[2]], weights[name[0]])
    if constraints and worst > threshold:
        raise GridQualityError(f"interpolation constraints violated by {worst:.3e} "
                               f"(threshold {threshold:.1e}); grid too distorted or too coarse")
    return InterpSet(C2E=ops["C2E"], E2C=ops["E2C"], C2N=ops["C2N"], N2C=ops["N2C"],
                     N2E=ops["C2E"] @ ops["N2C"], E2N=ops["C2N"] @ ops["E2C"],
                     constraint_residual=worst, constrained=constraints)


def _check_constraints(mat, src, tgt) -> float:
    resid = float(np.abs(mat @ np.ones(mat.shape[1]) - 1.0).max())
    for f, t in zip(src, tgt):
        resid = max(resid, float(np.abs(mat @ f - t).max()))
    return resid


# difference matrices -------------------------------------------------------

@dataclass(frozen=True)
class DiffSet:
    """Two-point differences ``DIFFX(eps)``, ``DIFFY(eps)`` and stencil weights."""

    DIFFX: tuple
    DIFFY: tuple
    alpha: tuple
    eps: tuple


def build_diff_set(grid: StaggeredGrid, order: int | None = None) -> DiffSet:
    order = grid.order if order is None else order
    mx, my, n = grid.mx, grid.my, grid.n
    i = np.arange(n)
    ix, iy = i % mx, i // mx
    rows = np.concatenate([i, i])
    vals = np.concatenate([np.ones(n), -np.ones(n)])
    dx, dy, eps = [], [], []
    for k in range(order // 2):
        e = k + 0.5
        s = k  # eps - 1/2
        # (DIFFX F)_i = F_{i+eps-1/2} - F_{i-eps-1/2}
        cols = np.concatenate([(ix + s) % mx + mx * iy, (ix - s - 1) % mx + mx * iy])
        dx.append(LinOp(sp.csr_matrix((vals, (rows, cols)), shape=(n, n)), grid.dVc, grid.dVe))
        # (DIFFY F)_i = F_{i+(eps-1/2)mx} - F_{i-(eps+1/2)mx}
        cols = np.concatenate([ix + mx * ((iy + s) % my), ix + mx * ((iy - s - 1) % my)])
        dy.append(LinOp(sp.csr_matrix((vals, (rows, cols)), shape=(n, n)), grid.dVc, grid.dVn))
        eps.append(e)
    return DiffSet(DIFFX=tuple(dx), DIFFY=tuple(dy), alpha=tuple(alpha_coefficients(order)),
                   eps=tuple(eps))
