"""Convex polytopes in velocity space: hulls, membership, gauge functional.

Hulls are built from finite point sets (jump offsets, sampled velocities).
Full-dimensional hulls carry facet inequalities A x <= b; degenerate hulls
(points, segments, flat polygons embedded in higher dimension) are represented
by an orthonormal basis of their affine span plus a hull in span coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LatticeTailsError

_DEF_TOL = 1e-9


@dataclass(frozen=True)
class Polytope:
    """Convex hull of finitely many points in R^s."""

    dim: int
    vertices: np.ndarray               # (k, s)
    facet_normals: np.ndarray | None   # (m, s), full-dimensional hulls only
    facet_offsets: np.ndarray | None   # (m,), A x <= b
    affine_dim: int
    # degenerate case: x = origin + basis @ u with u inside sub_hull
    affine_origin: np.ndarray | None = None
    affine_basis: np.ndarray | None = None      # (s, affine_dim)
    sub_hull: "Polytope | None" = field(default=None, repr=False)

    @property
    def is_full_dimensional(self) -> bool:
        return self.affine_dim == self.dim

    def contains(self, x, tol: float = _DEF_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        if self.is_full_dimensional:
            if self.dim == 0:
                return True
            return bool(np.all(self.facet_normals @ x <= self.facet_offsets + tol))
        # degenerate: check residual against affine span, then recurse
        y = x - self.affine_origin
        u = self.affine_basis.T @ y
        residual = y - self.affine_basis @ u
        if np.linalg.norm(residual) > tol:
            return False
        if self.affine_dim == 0:
            return True
        return self.sub_hull.contains(u, tol=tol)

    def gauge(self, x, tol: float = _DEF_TOL) -> float:
        """Minkowski functional inf{alpha > 0 : x in alpha * hull}.

        Requires the origin strictly inside the hull, so that all facet
        offsets are positive and g(x) = max_i <f_i, x> / b_i.
        """
        if not self.is_full_dimensional:
            raise LatticeTailsError(
                "gauge needs a full-dimensional hull containing the origin; "
                "augment the point set (e.g. add the origin) first"
            )
        if not np.all(self.facet_offsets > tol):
            raise LatticeTailsError(
                "gauge needs the origin strictly inside the hull; "
                "augment the point set (e.g. add the origin) first"
            )
        x = np.asarray(x, dtype=float)
        ratios = (self.facet_normals @ x) / self.facet_offsets
        return float(max(np.max(ratios), 0.0))

    def support(self, direction) -> float:
        """max_{v in hull} <direction, v>, evaluated on the vertices."""
        d = np.asarray(direction, dtype=float)
        return float(np.max(self.vertices @ d))

    def max_vertex_radius(self) -> float:
        return float(np.max(np.linalg.norm(self.vertices, axis=1)))


def _dedupe(points: np.ndarray, tol: float) -> np.ndarray:
    rounded = np.round(points / tol) * tol
    _, idx = np.unique(rounded, axis=0, return_index=True)
    return points[np.sort(idx)]


def convex_hull(points, tol: float = 1e-12) -> Polytope:
    """Build the convex hull of a finite point set in dimension s <= 3.

    Degenerate sets (affine dimension below s) are supported; for them only
    vertex/membership queries are available, not the gauge.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    s = pts.shape[1]
    pts = _dedupe(pts, max(tol, 1e-12))
    center = pts.mean(axis=0)
    shifted = pts - center
    if len(pts) == 1:
        adim = 0
    else:
        svals = np.linalg.svd(shifted, compute_uv=False)
        scale = max(svals[0], 1.0)
        adim = int(np.sum(svals > 1e-9 * scale))

    if adim == 0:
        v = pts[:1]
        return Polytope(dim=s, vertices=v, facet_normals=None, facet_offsets=None,
                        affine_dim=0, affine_origin=v[0],
                        affine_basis=np.zeros((s, 0)))

    if adim < s:
        _, _, vt = np.linalg.svd(shifted, full_matrices=False)
        basis = vt[:adim].T                      # (s, adim)
        coords = shifted @ basis                 # (k, adim)
        inner = convex_hull(coords)
        verts = center + inner.vertices @ basis.T
        return Polytope(dim=s, vertices=verts, facet_normals=None,
                        facet_offsets=None, affine_dim=adim,
                        affine_origin=center, affine_basis=basis, sub_hull=inner)

    if s == 1:
        lo, hi = float(np.min(pts)), float(np.max(pts))
        verts = np.array([[lo], [hi]])
        normals = np.array([[-1.0], [1.0]])
        offsets = np.array([-lo, hi])
        return Polytope(dim=1, vertices=verts, facet_normals=normals,
                        facet_offsets=offsets, affine_dim=1)

    if s > 3:
        raise LatticeTailsError(
            "exact hulls are limited to dimension <= 3; use support() sampling"
        )

    from scipy.spatial import ConvexHull as _QHull

    qh = _QHull(pts)
    verts = pts[np.sort(qh.vertices)]
    eqs = qh.equations                           # A x + b <= 0
    normals = eqs[:, :-1]
    offsets = -eqs[:, -1]
    return Polytope(dim=s, vertices=verts, facet_normals=normals,
                    facet_offsets=offsets, affine_dim=s)
