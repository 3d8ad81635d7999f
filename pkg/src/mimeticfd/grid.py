"""Periodic curvilinear staggered grids.

A grid is generated by a smooth map ``X(xi, eta) = scale * ((xi, eta) + P(xi, eta))``
where ``P`` is periodic with period ``L`` in both computational coordinates.
Scalars live at cell centres (c-points), the local x-component of a vector at
east faces (e-points) and the local y-component at north faces (n-points).
Point ``i`` of every family has index ``i = ix + mx * iy``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ConfigError, GeometryError

MAPPING_KINDS = ("uniform", "sinusoidal-skew", "fourier-perturbation")

_DEFAULTS = {
    "uniform": {"L": 1.0, "scale": 1.0},
    "sinusoidal-skew": {"L": 1.0, "scale": 1.0, "a": 0.1, "b": 0.1, "k": 1.0},
    "fourier-perturbation": {"L": 1.0, "scale": 1.0, "amp": 0.5, "kmax": 2.0},
}


@dataclass(frozen=True)
class MappingSpec:
    """Description of a periodic grid mapping.

    ``params`` may contain ``L`` (computational period), ``scale`` (uniform
    physical scaling) and kind-specific entries: ``a``, ``b``, ``k`` for the
    sinusoidal skew and ``amp``, ``kmax`` for the random Fourier perturbation.
    """

    kind: str = "uniform"
    params: dict[str, float] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MAPPING_KINDS:
            raise ConfigError(f"unknown mapping kind {self.kind!r}")
        unknown = set(self.params) - set(_DEFAULTS[self.kind])
        if unknown:
            raise ConfigError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        merged = dict(_DEFAULTS[self.kind])
        merged.update({k: float(v) for k, v in self.params.items()})
        if merged["L"] <= 0 or merged["scale"] <= 0:
            raise ConfigError("L and scale must be positive")
        object.__setattr__(self, "params", merged)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "params": dict(self.params), "seed": int(self.seed)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "MappingSpec":
        try:
            return cls(data.get("kind", "uniform"), dict(data.get("params", {})),
                       int(data.get("seed", 0)))
        except (TypeError, ValueError, AttributeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid mapping spec: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MappingSpec":
        return cls.from_dict(json.loads(text))


class Mapping:
    """Analytic evaluator for a :class:`MappingSpec`."""

    def __init__(self, spec: MappingSpec):
        self.spec = spec
        self.L = spec.params["L"]
        self.scale = spec.params["scale"]
        self.k0 = 2.0 * math.pi / self.L
        if spec.kind == "fourier-perturbation":
            self._init_fourier()

    def _init_fourier(self):
        p = self.spec.params
        kmax = int(p["kmax"])
        rng = np.random.default_rng(self.spec.seed)
        modes = [(kx, ky) for kx in range(-kmax, kmax + 1) for ky in range(0, kmax + 1)
                 if (ky > 0 or kx > 0)]
        modes = np.array(modes, dtype=float)
        decay = 1.0 / (1.0 + np.sum(modes**2, axis=1))
        cos_coef = rng.standard_normal((len(modes), 2)) * decay[:, None]
        sin_coef = rng.standard_normal((len(modes), 2)) * decay[:, None]
        kvec = self.k0 * modes
        # a priori bound on the Frobenius norm of grad P, valid everywhere
        r = np.hypot(cos_coef, sin_coef)
        bound = math.sqrt(float(np.sum((np.abs(kvec).T @ r) ** 2)))
        s = p["amp"] / bound
        self._kvec = kvec
        self._cos = cos_coef * s
        self._sin = sin_coef * s

    def displacement(self, xi, eta) -> np.ndarray:
        """Periodic part ``P(xi, eta)``, shape ``xi.shape + (2,)``."""
        xi = np.asarray(xi, dtype=float)
        eta = np.asarray(eta, dtype=float)
        kind = self.spec.kind
        if kind == "uniform":
            return np.zeros(xi.shape + (2,))
        if kind == "sinusoidal-skew":
            p = self.spec.params
            k = self.k0 * p["k"]
            s = np.sin(k * xi) * np.sin(k * eta)
            return np.stack([p["a"] * s, p["b"] * s], axis=-1)
        phase = xi[..., None] * self._kvec[:, 0] + eta[..., None] * self._kvec[:, 1]
        return np.cos(phase) @ self._cos + np.sin(phase) @ self._sin

    def displacement_gradient(self, xi, eta) -> np.ndarray:
        """``dP_a / dxi_b``, shape ``xi.shape + (2, 2)``."""
        xi = np.asarray(xi, dtype=float)
        eta = np.asarray(eta, dtype=float)
        kind = self.spec.kind
        if kind == "uniform":
            return np.zeros(xi.shape + (2, 2))
        if kind == "sinusoidal-skew":
            p = self.spec.params
            k = self.k0 * p["k"]
            sx = k * np.cos(k * xi) * np.sin(k * eta)
            sy = k * np.sin(k * xi) * np.cos(k * eta)
            g = np.empty(xi.shape + (2, 2))
            g[..., 0, 0] = p["a"] * sx
            g[..., 0, 1] = p["a"] * sy
            g[..., 1, 0] = p["b"] * sx
            g[..., 1, 1] = p["b"] * sy
            return g
        phase = xi[..., None] * self._kvec[:, 0] + eta[..., None] * self._kvec[:, 1]
        # d/dphase of (A cos + B sin) = -A sin + B cos, times the wave vector
        dphi = -np.sin(phase)[..., :, None] * self._cos + np.cos(phase)[..., :, None] * self._sin
        return np.einsum("...ma,mb->...ab", dphi, self._kvec)

    def __call__(self, xi, eta) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        eta = np.asarray(eta, dtype=float)
        return self.scale * (np.stack([xi, eta], axis=-1) + self.displacement(xi, eta))

    def jacobian(self, xi, eta) -> np.ndarray:
        g = self.displacement_gradient(xi, eta)
        g[..., 0, 0] += 1.0
        g[..., 1, 1] += 1.0
        return self.scale * g

    def difference(self, xi_a, eta_a, xi_b, eta_b) -> np.ndarray:
        """``X(a) - X(b)`` without forming the large absolute coordinates."""
        d = np.stack([np.asarray(xi_a) - xi_b, np.asarray(eta_a) - eta_b], axis=-1)
        return self.scale * (d + self.displacement(xi_a, eta_a) - self.displacement(xi_b, eta_b))


def polar_orientation(J) -> np.ndarray:
    """Rotation factor ``R = P Q`` of the SVD ``J = P diag(h) Q``.

    Equivalently the orthogonal polar factor of ``J``, the rotation closest to
    ``J`` in the Frobenius norm. ``J`` must have a positive determinant.
    """
    J = np.asarray(J, dtype=float)
    theta = orientation_angle(J)
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def orientation_angle(J) -> np.ndarray | float:
    """Rotation angle of the polar factor of one or many 2x2 matrices."""
    J = np.asarray(J, dtype=float)
    a, b = J[..., 0, 0], J[..., 0, 1]
    c, d = J[..., 1, 0], J[..., 1, 1]
    det = a * d - b * c
    bad = ~(det > 0)
    if np.any(bad):
        where = np.argwhere(np.atleast_1d(bad))[0]
        raise GeometryError(f"non-positive Jacobian determinant at sample {tuple(where)}")
    # J = Rot(theta) S with S symmetric positive definite, so trace(S) > 0
    theta = np.arctan2(c - b, a + d)
    return float(theta) if np.ndim(theta) == 0 else theta


@dataclass(frozen=True)
class StaggeredGrid:
    """Geometry of a periodic staggered grid.

    Coordinates are ``(n, 2)`` arrays. ``rAB_at_P`` is component ``B`` of the
    local direction ``r_A`` at point family ``P``. Flux coefficients are lists
    indexed by ``k`` for ``eps = k + 1/2``.
    """

    spec: MappingSpec
    mx: int
    my: int
    order: int
    L: float
    dxi: float
    deta: float
    xi_c: np.ndarray
    xc: np.ndarray
    xe: np.ndarray
    xn: np.ndarray
    rxx_at_c: np.ndarray
    rxy_at_c: np.ndarray
    ryx_at_c: np.ndarray
    ryy_at_c: np.ndarray
    rxx_at_e: np.ndarray
    rxy_at_e: np.ndarray
    ryx_at_e: np.ndarray
    ryy_at_e: np.ndarray
    rxx_at_n: np.ndarray
    rxy_at_n: np.ndarray
    ryx_at_n: np.ndarray
    ryy_at_n: np.ndarray
    dVc: np.ndarray
    dVe: np.ndarray
    dVn: np.ndarray
    nxe: tuple
    nye: tuple
    nxn: tuple
    nyn: tuple
    min_angle_deg: float

    @property
    def n(self) -> int:
        return self.mx * self.my

    @property
    def eps(self) -> tuple[float, ...]:
        return tuple(k + 0.5 for k in range(self.order // 2))

    @property
    def area(self) -> float:
        return float(math.fsum(self.dVc))

    @property
    def dVv(self) -> np.ndarray:
        """Weights of a staggered vector field, e-part then n-part."""
        return np.concatenate([self.dVe, self.dVn])

    def orientation(self, family: str) -> tuple[np.ndarray, ...]:
        """``(rxx, rxy, ryx, ryy)`` at ``family`` in {'c', 'e', 'n'}."""
        return tuple(getattr(self, f"{name}_at_{family}") for name in ("rxx", "rxy", "ryx", "ryy"))

    def coords(self, family: str) -> np.ndarray:
        return {"c": self.xc, "e": self.xe, "n": self.xn}[family]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


def min_grid_angle(mapping: Mapping, samples: int = 128) -> float:
    """Smallest angle in degrees between the two grid-line directions."""
    t = (np.arange(samples) + 0.5) * mapping.L / samples
    xi, eta = np.meshgrid(t, t)
    J = mapping.jacobian(xi, eta)
    a, b = J[..., :, 0], J[..., :, 1]
    cosang = np.abs(np.sum(a * b, axis=-1)) / (np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1))
    return float(np.degrees(np.arccos(np.clip(cosang.max(), -1.0, 1.0))))


def build_grid(spec: MappingSpec, mx: int, my: int, order: int) -> StaggeredGrid:
    """Sample all geometric quantities of the staggered grid."""
    if order < 2 or order % 2:
        raise ConfigError(f"order must be an even integer >= 2, got {order}")
    if mx < 2 * order or my < 2 * order:
        raise ConfigError(f"grid {mx}x{my} too small for order {order} (need >= {2 * order})")
    mapping = Mapping(spec)
    L = mapping.L
    dxi, deta = L / mx, L / my
    ix = np.tile(np.arange(mx), my).astype(float)
    iy = np.repeat(np.arange(my), mx).astype(float)

    # point locations in units of the cell widths; these offsets are exact
    loc = {"c": (ix + 0.5, iy + 0.5), "e": (ix + 1.0, iy + 0.5), "n": (ix + 0.5, iy + 1.0)}

    fields: dict[str, Any] = {}
    for fam, (ux, uy) in loc.items():
        xi, eta = ux * dxi, uy * deta
        fields[f"x{fam}"] = _frozen(mapping(xi, eta))
        J = mapping.jacobian(xi, eta)
        try:
            theta = orientation_angle(J)
        except GeometryError as exc:
            det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
            i = int(np.argmin(det))
            raise GeometryError(
                f"non-positive Jacobian determinant {det[i]:.3e} at {fam}-point {i} "
                f"(ix={i % mx}, iy={i // mx})") from exc
        c, s = np.cos(theta), np.sin(theta)
        fields[f"rxx_at_{fam}"] = _frozen(c)
        fields[f"rxy_at_{fam}"] = _frozen(s)
        fields[f"ryx_at_{fam}"] = _frozen(-s)
        fields[f"ryy_at_{fam}"] = _frozen(c)
        det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        fields[f"dV{fam}"] = _frozen(dxi * deta * det)
        if fam == "c":
            fields["xi_c"] = _frozen(np.stack([xi, eta], axis=-1))

    nxe, nye, nxn, nyn = [], [], [], []
    ex, ey = loc["e"]
    nx_, ny_ = loc["n"]
    for k in range(order // 2):
        eps = k + 0.5
        # east faces: segment along eta through the face centre
        d = mapping.difference(ex * dxi, (ey + eps) * deta, ex * dxi, (ey - eps) * deta)
        # -(d)^perp / eps with (x, y)^perp = (-y, x)
        nv = np.stack([d[:, 1], -d[:, 0]], axis=-1) / eps
        nxe.append(_frozen(nv[:, 0] * fields["rxx_at_e"] + nv[:, 1] * fields["rxy_at_e"]))
        nye.append(_frozen(nv[:, 0] * fields["ryx_at_e"] + nv[:, 1] * fields["ryy_at_e"]))
        # north faces: segment along xi, +(d)^perp / eps
        d = mapping.difference((nx_ + eps) * dxi, ny_ * deta, (nx_ - eps) * dxi, ny_ * deta)
        nv = np.stack([-d[:, 1], d[:, 0]], axis=-1) / eps
        nxn.append(_frozen(nv[:, 0] * fields["rxx_at_n"] + nv[:, 1] * fields["rxy_at_n"]))
        nyn.append(_frozen(nv[:, 0] * fields["ryx_at_n"] + nv[:, 1] * fields["ryy_at_n"]))

    return StaggeredGrid(
        spec=spec, mx=mx, my=my, order=order, L=L, dxi=dxi, deta=deta,
        nxe=tuple(nxe), nye=tuple(nye), nxn=tuple(nxn), nyn=tuple(nyn),
        min_angle_deg=min_grid_angle(mapping), **fields)


def constant_field_repr(grid: StaggeredGrid, direction=(1.0, 0.0)) -> np.ndarray:
    """Staggered representation of a constant unit vector field.

    The result is the flat vector ``[vx at e-points, vy at n-points]``.
    """
    d = np.asarray(direction, dtype=float)
    if d.shape != (2,) or abs(np.hypot(*d) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit 2-vector")
    vx = d[0] * grid.rxx_at_e + d[1] * grid.rxy_at_e
    vy = d[0] * grid.ryx_at_n + d[1] * grid.ryy_at_n
    return np.concatenate([vx, vy])


def vector_to_staggered(grid: StaggeredGrid, fx, fy) -> np.ndarray:
    """Project a physical vector field, given as callables of ``(x, y)``, on the grid."""
    xe, xn = grid.xe, grid.xn
    vx = fx(xe[:, 0], xe[:, 1]) * grid.rxx_at_e + fy(xe[:, 0], xe[:, 1]) * grid.rxy_at_e
    vy = fx(xn[:, 0], xn[:, 1]) * grid.ryx_at_n + fy(xn[:, 0], xn[:, 1]) * grid.ryy_at_n
    return np.concatenate([vx, vy])


def write_grid_csv(grid: StaggeredGrid, path) -> None:
    """Dump points, weights and orientations of all three families."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["family", "i", "ix", "iy", "x", "y", "rxx", "rxy", "ryx", "ryy", "dV"])
        for fam in ("c", "e", "n"):
            xy = grid.coords(fam)
            r = grid.orientation(fam)
            dv = getattr(grid, f"dV{fam}")
            for i in range(grid.n):
                w.writerow([fam, i, i % grid.mx, i // grid.mx, repr(xy[i, 0]), repr(xy[i, 1]),
                            *(repr(float(q[i])) for q in r), repr(float(dv[i]))])
