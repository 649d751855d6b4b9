"""Dual rate function, Legendre transforms, radial reduction, boundary bounds.

The dual rate R(lam) is the supremum over the Brillouin torus of the
spectral growth of the analytically continued symbol at imaginary shift
lam/2 (log|u|^2 for walks, 2 Im omega for Hamiltonians).  Its Legendre
transform I(x) = sup_lam (lam.x - R(lam)) bounds the exponential decay of
tail probabilities at velocity x.  This module computes both by coarse grid
search plus simplex refinement, together with the radial reduction, the
cubic boundary expansion of R along a ray, and the coarse convex-geometry
bounds that need no spectra at all.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import (
    DegenerateMaximizer,
    EigenError,
    LatticeTailsError,
    NonUniqueMaximizer,
    ThirdDerivativeUnstable,
)
from .geometry import Polytope, convex_hull
from .model import Kind, LatticeModel, jump_hull, reduce_momentum
from .spectra import dual_rate_values, group_velocity, momentum_grid

DEFAULT_LAMBDA_MAX = 12.0
GRID_POINT_CAP = 64 * 64 * 32
REFINE_XATOL = 1e-10
REFINE_MAXITER = 200


def default_grid_dims(s: int, base: int = 64) -> list[int]:
    """Per-axis coarse grid sizes, total capped at 64*64*32 points."""
    dims = [base] * s
    axis = s - 1
    while int(np.prod(dims)) > GRID_POINT_CAP and max(dims) > 8:
        dims[axis] = max(8, dims[axis] // 2)
        axis = (axis - 1) % s
    return dims


# ---------------------------------------------------------------------------
# torus supremum engine
# ---------------------------------------------------------------------------

class _SupEvaluator:
    """Maximizes the dual-rate integrand over the torus for given lam.

    The full evaluation sweeps a coarse momentum grid (vectorized eigenvalue
    batches) and restarts Nelder-Mead from the three best cells.  The warm
    evaluation refines from the maximizer cached for the nearest previous
    lam, which makes Legendre and radial sweeps cheap; warm results should be
    certified with one full evaluation at the final point.  Single-point
    integrand calls use closed-form eigenvalues for d <= 2 (all that the
    refinement loops ever touch for the built-in models).
    """

    def __init__(self, m: LatticeModel, grid_dims=None, threads: int = 1):
        self.m = m
        self.s = m.dim_lattice
        if grid_dims is None:
            grid_dims = default_grid_dims(self.s)
        elif np.isscalar(grid_dims):
            grid_dims = [int(grid_dims)] * self.s
        self.grid_dims = list(grid_dims)
        self.grid = momentum_grid(self.grid_dims)
        self.cell = 2.0 * np.pi / min(self.grid_dims)
        scout_dims = default_grid_dims(self.s, base=16)
        self.scout = momentum_grid(scout_dims)
        self.threads = threads
        self._offsets = m.offsets.astype(float)
        self._coeffs = m.coefficients
        self._walk = m.kind is Kind.WALK
        self._warm: list[tuple[np.ndarray, np.ndarray]] = []

    def integrand(self, p, lam) -> float:
        """Pointwise dual-rate integrand at full argument lam (shift lam/2)."""
        y = self._offsets
        w = np.exp(-1j * (y @ np.asarray(p, dtype=float))
                   + 0.5 * (y @ np.asarray(lam, dtype=float)))
        mat = np.tensordot(w, self._coeffs, axes=1)
        d = mat.shape[0]
        if d == 1:
            u = mat[0, 0]
            return 2.0 * math.log(abs(u)) if self._walk else 2.0 * u.imag
        if d == 2:
            tr = mat[0, 0] + mat[1, 1]
            det = mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0]
            disc = np.sqrt(tr * tr - 4.0 * det)
            if (tr.real * disc.real + tr.imag * disc.imag) < 0.0:
                disc = -disc
            u1 = 0.5 * (tr + disc)
            u2 = det / u1 if abs(u1) > 0.0 else 0.5 * (tr - disc)
            if self._walk:
                return 2.0 * math.log(max(abs(u1), abs(u2)))
            return 2.0 * max(u1.imag, u2.imag)
        vals = np.linalg.eigvals(mat)
        if self._walk:
            return 2.0 * math.log(float(np.max(np.abs(vals))))
        return 2.0 * float(np.max(vals.imag))

    def coarse(self, lam, k: int = 3, grid: np.ndarray | None = None):
        if grid is None:
            grid = self.grid
        vals = dual_rate_values(self.m, grid,
                                np.asarray(lam, dtype=float) / 2.0,
                                threads=self.threads)
        idx = np.argsort(vals)[::-1][:k]
        return [(float(vals[i]), grid[i].copy()) for i in idx]

    def refine(self, lam, p0, xatol: float = REFINE_XATOL):
        res = minimize(lambda q: -self.integrand(q, lam),
                       np.asarray(p0, dtype=float), method="Nelder-Mead",
                       options={"xatol": xatol, "fatol": 1e-15,
                                "maxiter": REFINE_MAXITER,
                                "maxfev": 10 * REFINE_MAXITER})
        return -float(res.fun), np.asarray(res.x, dtype=float)

    def _remember(self, lam, p):
        self._warm.append((np.asarray(lam, dtype=float).copy(), p.copy()))
        if len(self._warm) > 16:
            del self._warm[0]

    def evaluate(self, lam):
        """Full evaluation: coarse sweep + 3 refinement restarts.

        Returns (value, maximizer_p, moved) where `moved` records whether
        refinement displaced the maximizer by more than one grid cell.
        """
        lam = np.asarray(lam, dtype=float)
        top = self.coarse(lam)
        best_val, best_p = -np.inf, top[0][1]
        for _, p0 in top:
            val, p = self.refine(lam, p0)
            if val > best_val:
                best_val, best_p = val, p
        moved = bool(np.max(np.abs(best_p - top[0][1])) > self.cell)
        best_p = reduce_momentum(best_p)
        self._remember(lam, best_p)
        return best_val, best_p, moved

    def evaluate_scout(self, lam):
        """Cheaper anchor: subsampled coarse grid plus one refinement."""
        lam = np.asarray(lam, dtype=float)
        top = self.coarse(lam, k=2, grid=self.scout)
        best_val, best_p = -np.inf, top[0][1]
        for _, p0 in top:
            val, p = self.refine(lam, p0)
            if val > best_val:
                best_val, best_p = val, p
        best_p = reduce_momentum(best_p)
        self._remember(lam, best_p)
        return best_val, best_p

    def evaluate_warm(self, lam, xatol: float = REFINE_XATOL):
        """Refine from the cached maximizer of the nearest previous lam."""
        lam = np.asarray(lam, dtype=float)
        if not self._warm:
            val, p, _ = self.evaluate(lam)
            return val, p
        dists = [np.linalg.norm(lam - w[0]) for w in self._warm]
        p0 = self._warm[int(np.argmin(dists))][1]
        val, p = self.refine(lam, p0, xatol=xatol)
        p = reduce_momentum(p)
        self._remember(lam, p)
        return val, p


# ---------------------------------------------------------------------------
# dual rate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DualRate:
    lambda_points: np.ndarray    # (n, s)
    values: np.ndarray           # (n,)
    maximizer_p: np.ndarray      # (n, s)
    refined: np.ndarray          # (n,) bool: refinement moved > one grid cell
    errors: list


def _as_lambda_array(lambdas, s: int) -> np.ndarray:
    arr = np.asarray(lambdas, dtype=float)
    if arr.ndim == 1 and s == 1:
        arr = arr[:, None]
    elif arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != s:
        raise LatticeTailsError(f"lambda list must have shape (n, {s})")
    return arr


def dual_rate(m: LatticeModel, lambdas, grid_n=None, threads: int = 1) -> DualRate:
    """R(lam) for each lam: coarse torus maximum plus simplex refinement.

    The coarse stage evaluates the integrand on a grid_n^s grid (default 64
    per axis, total capped at 64*64*32 points); refinement restarts
    Nelder-Mead from the three best cells and stops at simplex size 1e-10 or
    200 iterations.  Eigensolver failures abort only the affected lam and are
    collected in the `errors` list with NaN values.
    """
    if grid_n is not None and int(np.min(np.atleast_1d(grid_n))) < 16:
        raise LatticeTailsError("dual_rate needs grid_n >= 16")
    lam_arr = _as_lambda_array(lambdas, m.dim_lattice)
    ev = _SupEvaluator(m, grid_dims=grid_n, threads=threads)
    n = len(lam_arr)
    values = np.full(n, np.nan)
    maximizers = np.full((n, m.dim_lattice), np.nan)
    moved = np.zeros(n, dtype=bool)
    errors = []
    for i, lam in enumerate(lam_arr):
        try:
            values[i], maximizers[i], moved[i] = ev.evaluate(lam)
        except EigenError as exc:
            errors.append((i, str(exc)))
    return DualRate(lambda_points=lam_arr, values=values,
                    maximizer_p=maximizers, refined=moved, errors=errors)


# ---------------------------------------------------------------------------
# Legendre transform
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateFunction:
    x_points: np.ndarray          # (n, s)
    values: np.ndarray            # (n,), may contain inf
    maximizer_lambda: np.ndarray  # (n, s), NaN rows on inf points
    unbounded: np.ndarray         # (n,) bool: sup still rising at lambda_max


def _unit_directions(s: int, extra: int = 16) -> np.ndarray:
    """Signed axes, signed diagonals, and a deterministic sphere sample."""
    if s == 1:
        return np.array([[1.0], [-1.0]])
    dirs = []
    for a in range(s):
        e = np.zeros(s)
        e[a] = 1.0
        dirs.extend([e, -e])
    # all sign patterns on full and partial diagonals
    from itertools import product
    for mask in product([0, 1], repeat=s):
        if sum(mask) < 2:
            continue
        base = np.array(mask, dtype=float)
        for signs in product([1.0, -1.0], repeat=s):
            v = base * np.array(signs)
            dirs.append(v / np.linalg.norm(v))
    if s == 2:
        ang = np.linspace(0.0, 2.0 * np.pi, extra, endpoint=False)
        dirs.extend(np.stack([np.cos(ang), np.sin(ang)], axis=1))
    elif s == 3 and extra > 0:
        i = np.arange(extra)
        phi = np.arccos(1.0 - 2.0 * (i + 0.5) / extra)
        theta = np.pi * (1.0 + np.sqrt(5.0)) * i
        dirs.extend(np.stack([np.sin(phi) * np.cos(theta),
                              np.sin(phi) * np.sin(theta),
                              np.cos(phi)], axis=1))
    arr = np.array(dirs)
    _, idx = np.unique(np.round(arr, 9), axis=0, return_index=True)
    return arr[np.sort(idx)]


def _lex_largest(rows: list[np.ndarray], tol: float = 1e-6) -> np.ndarray:
    best = rows[0]
    for r in rows[1:]:
        for a, b in zip(r, best):
            if a > b + tol:
                best = r
                break
            if a < b - tol:
                break
    return best


def legendre(m: LatticeModel, xs, dual: DualRate | None = None,
             lambda_max: float = DEFAULT_LAMBDA_MAX, grid_n=None,
             threads: int = 1) -> RateFunction:
    """I(x) = sup_lam (lam.x - R(lam)) over the ball |lam| <= lambda_max.

    For walk models, x strictly outside the jump hull (margin 1e-9) yields
    I(x) = +inf exactly: the geometric rule is exact there and no numeric
    supremum could certify it.  Points where the supremum is still rising at
    the ball radius are reported with the truncated value and the unbounded
    flag set.  The lam = 0 term is included analytically (it is exactly
    zero), so values are never negative.

    Candidate lams are sampled along signed axes, diagonals, and the
    direction of x itself at exponentially subdivided radii, then refined by
    Nelder-Mead; warm inner maximizations are certified by one full sweep at
    the final lam.
    """
    xs_arr = _as_lambda_array(xs, m.dim_lattice)
    s = m.dim_lattice
    ev = _SupEvaluator(m, grid_dims=grid_n, threads=threads)
    hull = jump_hull(m) if m.kind is Kind.WALK else None

    radii = lambda_max * 0.5 ** np.arange(12, -1, -1.0)
    base_dirs = _unit_directions(s)

    # shared table of R along every base direction: anchor at the outer
    # radius, then chain warm refinements inward
    def ray_table(direction: np.ndarray):
        rows = []
        _, p_anchor = ev.evaluate_scout(lambda_max * direction)
        p_prev = p_anchor
        for r in radii[::-1]:
            lam = r * direction
            val, p_prev = ev.refine(lam, p_prev)
            rows.append((float(val), lam, reduce_momentum(p_prev)))
        return rows

    table = []
    for d in base_dirs:
        table.extend(ray_table(d))

    n = len(xs_arr)
    values = np.zeros(n)
    maximizers = np.full((n, s), np.nan)
    unbounded = np.zeros(n, dtype=bool)

    if dual is not None:
        for lam, v in zip(dual.lambda_points, dual.values):
            if np.isfinite(v) and 0 < np.linalg.norm(lam) <= lambda_max:
                table.append((float(v), np.asarray(lam, dtype=float), None))

    for i, x in enumerate(xs_arr):
        if hull is not None and not hull.contains(x, tol=1e-9):
            values[i] = np.inf
            continue

        # candidates: (f value, lam); the lam = 0 term is exactly zero
        cands = [(0.0, np.zeros(s))]
        for val, lam, _ in table:
            cands.append((float(lam @ x) - val, lam))
        norm_x = np.linalg.norm(x)
        if norm_x > 0 and np.min(np.linalg.norm(base_dirs - x / norm_x,
                                                axis=1)) > 1e-9:
            for val, lam, _ in ray_table(x / norm_x):
                cands.append((float(lam @ x) - val, lam))

        cands.sort(key=lambda c: -c[0])

        def objective(lam):
            # the loose inner tolerance costs < 1e-10 in value here; the
            # winner is re-certified at full precision below
            lam = np.asarray(lam, dtype=float)
            nl = np.linalg.norm(lam)
            if nl > lambda_max:
                lam = lam * (lambda_max / nl)
            val, _ = ev.evaluate_warm(lam, xatol=1e-6)
            return -(float(lam @ x) - val)

        # refine from distinct top candidates
        starts, best_val, best_lam = [], cands[0][0], cands[0][1]
        for _, lam0 in cands:
            if np.linalg.norm(lam0) == 0.0:
                continue
            if any(np.linalg.norm(lam0 - q) < 0.25 * max(np.linalg.norm(q), 1e-3)
                   for q in starts):
                continue
            starts.append(lam0)
            if len(starts) == 3:
                break
        for lam0 in starts:
            res = minimize(objective, lam0, method="Nelder-Mead",
                           options={"xatol": 1e-5, "fatol": 1e-13,
                                    "maxiter": 400})
            lam_star = np.asarray(res.x, dtype=float)
            nl = np.linalg.norm(lam_star)
            if nl > lambda_max:
                lam_star = lam_star * (lambda_max / nl)
            cand = -float(res.fun)
            if cand > best_val:
                best_val, best_lam = cand, lam_star

        if np.linalg.norm(best_lam) > 0.0:
            # certify the warm refinements with one full sweep at the winner
            full_val, _, _ = ev.evaluate(best_lam)
            best_val = float(best_lam @ x) - full_val
        values[i] = max(best_val, 0.0)
        maximizers[i] = best_lam
        unbounded[i] = np.linalg.norm(best_lam) >= lambda_max * (1.0 - 1e-6)

    return RateFunction(x_points=xs_arr, values=values,
                        maximizer_lambda=maximizers, unbounded=unbounded)


# ---------------------------------------------------------------------------
# radial reduction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadialRate:
    ell_points: np.ndarray            # (n,)
    dual_values: np.ndarray           # (n,) monotone nondecreasing
    maximizer_direction: np.ndarray   # (n, s)
    r_points: np.ndarray | None = None
    rate_values: np.ndarray | None = None
    rate_unbounded: np.ndarray | None = None
    hull_radius: float | None = None  # walks: gauge radius of conv F, worst direction


def _sphere_direction(angles: np.ndarray, s: int) -> np.ndarray:
    if s == 2:
        return np.array([np.cos(angles[0]), np.sin(angles[0])])
    theta, phi = angles
    return np.array([np.sin(phi) * np.cos(theta),
                     np.sin(phi) * np.sin(theta),
                     np.cos(phi)])


def _angles_of(d: np.ndarray) -> np.ndarray:
    if len(d) == 2:
        return np.array([math.atan2(d[1], d[0])])
    return np.array([math.atan2(d[1], d[0]),
                     math.acos(np.clip(d[2], -1.0, 1.0))])


def radial_dual(m: LatticeModel, ells, dir_samples: int = 32,
                grid_n=None, threads: int = 1) -> RadialRate:
    """Monotone radial dual rate: max of R over the ball |lam| <= ell.

    Directions are ranked by a full sweep at the largest radius; every
    direction is then tracked across the radius list with warm refinement,
    and the best candidates per radius are polished by a joint Nelder-Mead
    over (momentum, sphere angles).  The running maximum over radii makes the
    result monotone by construction; the lam = 0 term pins it at >= 0.
    Near-equal maximizer directions (symmetry orbits) are reported through
    the lexicographically largest representative, which keeps the output
    deterministic.
    """
    ells = np.sort(np.asarray(ells, dtype=float))
    if np.any(ells < 0):
        raise LatticeTailsError("radii must be nonnegative")
    s = m.dim_lattice
    if dir_samples < 1:
        raise LatticeTailsError("need at least one direction sample")
    dirs = _unit_directions(s, extra=dir_samples)
    if grid_n is None:
        grid_dims = default_grid_dims(s, base=32 if s == 3 else 64)
    else:
        grid_dims = grid_n
    ev = _SupEvaluator(m, grid_dims=grid_dims, threads=threads)

    ell_max = float(ells[-1]) if ells[-1] > 0 else 1.0

    # rank directions at the outermost radius with full sweeps
    ranked = []
    for d in dirs:
        val, p, _ = ev.evaluate(ell_max * d)
        ranked.append((val, d, p))
    ranked.sort(key=lambda t: -t[0])

    # track every direction across the radius list (warm refinement)
    track_vals = np.zeros((len(dirs), len(ells)))
    track_p = {}
    for k, (val0, d, p0) in enumerate(ranked):
        p_prev = p0
        for j in range(len(ells) - 1, -1, -1):
            ell = ells[j]
            if ell == 0.0:
                track_vals[k, j] = 0.0
                continue
            if ell == ell_max:
                track_vals[k, j] = val0
                track_p[(k, j)] = p0
                continue
            val, p_prev = ev.refine(ell * d, p_prev)
            track_vals[k, j] = val
            track_p[(k, j)] = reduce_momentum(p_prev)

    n = len(ells)
    dual_vals = np.zeros(n)
    best_dirs = np.zeros((n, s))
    running = 0.0
    running_dir = np.zeros(s)
    running_dir[0] = 1.0

    for j, ell in enumerate(ells):
        if ell == 0.0:
            dual_vals[j] = running
            best_dirs[j] = running_dir
            continue
        col = track_vals[:, j]
        best = float(np.max(col))
        tol = max(1e-9, 1e-9 * abs(best))
        candidate_idx = [k for k in range(len(dirs)) if col[k] >= best - max(1e-6, tol)]
        candidate_idx.sort(key=lambda k: -col[k])
        candidate_idx = candidate_idx[:12]

        polished = []
        for k in candidate_idx:
            d = ranked[k][1]
            if s == 1:
                val, _ = ev.evaluate_warm(ell * d)
                polished.append((val, d))
                continue
            p0 = track_p.get((k, j), ranked[k][2])
            q0 = np.concatenate([p0, _angles_of(d)])

            def joint(q):
                p, ang = q[:s], q[s:]
                lam = ell * _sphere_direction(ang, s)
                return -ev.integrand(p, lam)

            res = minimize(joint, q0, method="Nelder-Mead",
                           options={"xatol": 1e-9, "fatol": 1e-13,
                                    "maxiter": 600})
            d_star = _sphere_direction(np.asarray(res.x[s:]), s)
            polished.append((-float(res.fun), d_star))

        vmax = max(v for v, _ in polished)
        tied = [d for v, d in polished if v >= vmax - max(1e-9, 1e-9 * abs(vmax))]
        d_best = _lex_largest(tied)

        if vmax > running:
            running, running_dir = vmax, d_best
        dual_vals[j] = max(running, 0.0)
        best_dirs[j] = running_dir

    hull_radius = None
    if m.kind is Kind.WALK:
        hull_radius = jump_hull(m).max_vertex_radius()
    return RadialRate(ell_points=ells, dual_values=dual_vals,
                      maximizer_direction=best_dirs, hull_radius=hull_radius)


def radial_rate(rd: RadialRate, rs) -> RadialRate:
    """Radial rate: Legendre transform of the sampled radial dual.

    I_radial(r) = sup_ell (r ell - R_radial(ell)) over the sampled radii,
    with a parabolic touch-up around the discrete argmax.  For walk models
    r beyond the hull radius (worst-direction gauge radius of conv F) is
    +inf exactly; otherwise a supremum still rising at the last radius is
    flagged unbounded.  Monotonicity in r is automatic.
    """
    if np.any(np.diff(rd.dual_values) < -1e-9):
        raise LatticeTailsError("radial dual values must be nondecreasing")
    rs = np.asarray(rs, dtype=float)
    ells, vals = rd.ell_points, rd.dual_values
    out = np.zeros(len(rs))
    flags = np.zeros(len(rs), dtype=bool)
    for i, r in enumerate(rs):
        if rd.hull_radius is not None and r > rd.hull_radius + 1e-9:
            out[i] = np.inf
            continue
        f = r * ells - vals
        j = int(np.argmax(f))
        best = float(f[j])
        if 0 < j < len(ells) - 1:
            x3 = ells[j - 1:j + 2]
            y3 = f[j - 1:j + 2]
            denom = (x3[0] - x3[1]) * (x3[0] - x3[2]) * (x3[1] - x3[2])
            if abs(denom) > 0:
                a = (x3[2] * (y3[1] - y3[0]) + x3[1] * (y3[0] - y3[2])
                     + x3[0] * (y3[2] - y3[1])) / denom
                b = (x3[2] ** 2 * (y3[0] - y3[1]) + x3[1] ** 2 * (y3[2] - y3[0])
                     + x3[0] ** 2 * (y3[1] - y3[2])) / denom
                if a < 0:
                    xv = -b / (2 * a)
                    if x3[0] <= xv <= x3[2]:
                        c = y3[0] - a * x3[0] ** 2 - b * x3[0]
                        best = max(best, float(a * xv**2 + b * xv + c))
        out[i] = max(best, 0.0)
        flags[i] = j == len(ells) - 1
    return RadialRate(ell_points=rd.ell_points, dual_values=rd.dual_values,
                      maximizer_direction=rd.maximizer_direction,
                      r_points=rs, rate_values=out, rate_unbounded=flags,
                      hull_radius=rd.hull_radius)


# ---------------------------------------------------------------------------
# boundary expansion and bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryExpansion:
    """Cubic ray expansion of the dual rate at a boundary maximizer.

    Stored convention: along the ray lam = t n the boundary version expands
    as R_b(t n) = a t + (b / 6) t^3 with a = n . x_star and b >= 0 the
    negated third derivative of the tracked band phase along the ray.
    """

    direction: np.ndarray
    boundary_point: np.ndarray
    slope: float            # a = n . x_star
    cubic_coeff: float      # b >= 0
    branch: int
    momentum: np.ndarray

    @property
    def bound_coefficient(self) -> float:
        """Coefficient of (n.(x - x_star))_+^(3/2) in the boundary lower bound.

        From the cubic convention a t + (b/6) t^3: the Legendre transform of
        a t + c t^3 is (2 / sqrt(27 c)) (x - a)^(3/2), so with c = b/6 the
        coefficient is 2 / sqrt(27 b / 6) = (2 sqrt(2) / 3) / sqrt(b).
        """
        if self.cubic_coeff <= 0:
            return np.inf
        return 2.0 / math.sqrt(27.0 * self.cubic_coeff / 6.0)


_STENCIL = np.array([1.0, -8.0, 13.0, 0.0, -13.0, 8.0, -1.0])  # f''' * 8 h^3


def _third_derivative(f, h: float) -> float:
    vals = np.array([f(k * h) for k in range(-3, 4)])
    return float(_STENCIL @ vals / (8.0 * h**3))


def _tracked_phase_on_ray(m: LatticeModel, p_star, n, ref_vec, ref_omega):
    """Band phase along t -> p_star + t n, branch-tracked by eigenvector overlap."""
    def phase(t):
        q = p_star + t * n
        mat = m.symbol(q)
        if m.kind is Kind.HAMILTONIAN:
            vals, vecs = np.linalg.eigh(mat)
            omegas = vals
        else:
            vals, vecs = np.linalg.eig(mat)
            vecs = vecs / np.linalg.norm(vecs, axis=0, keepdims=True)
            omegas = -np.angle(vals)
        overlaps = np.abs(np.conj(ref_vec) @ vecs)
        j = int(np.argmax(overlaps))
        w = float(omegas[j])
        if m.kind is Kind.WALK:
            w = ref_omega + ((w - ref_omega + np.pi) % (2 * np.pi) - np.pi)
        return w
    return phase


def boundary_expansion(m: LatticeModel, n, grid_n=None, gap_tol: float = 1e-8,
                       fd_step: float = 1e-2,
                       uniqueness_tol: float = 1e-6) -> BoundaryExpansion:
    """Locate the boundary maximizer of n . grad(omega) and expand the ray.

    The maximizer (branch, momentum) of the directional group velocity is
    found by a grid sweep plus Nelder-Mead.  Grid cells within
    `uniqueness_tol` of the best value are clustered; clusters that refine to
    genuinely different expansions raise NonUniqueMaximizer, while symmetry
    copies with matching (a, b) are accepted.  The cubic coefficient is the
    negated third derivative of the tracked band phase along the real ray,
    by 7-point central differences at step fd_step, with a step-halving
    agreement check at 1e-3 relative.
    """
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    s = m.dim_lattice
    dims = default_grid_dims(s) if grid_n is None else (
        [int(grid_n)] * s if np.isscalar(grid_n) else list(grid_n))
    pts = momentum_grid(dims)

    def directional(p):
        try:
            samples = group_velocity(m, p, gap_tol=gap_tol)
        except (LatticeTailsError, np.linalg.LinAlgError):
            return -np.inf, -1, None
        vals = [float(n @ smp.velocity) for smp in samples]
        j = int(np.argmax(vals))
        return vals[j], j, samples[j]

    grid_vals = np.full(len(pts), -np.inf)
    for i, p in enumerate(pts):
        grid_vals[i], _, _ = directional(p)
    best = float(np.max(grid_vals))
    cand_idx = np.where(grid_vals >= best - uniqueness_tol)[0]

    # cluster candidate cells by torus adjacency
    cell_sizes = 2.0 * np.pi / np.array(dims)
    clusters: list[list[int]] = []
    for i in cand_idx:
        placed = False
        for cl in clusters:
            for k in cl:
                delta = np.abs(reduce_momentum(pts[i] - pts[k]))
                if np.all(delta <= 2.5 * cell_sizes):
                    cl.append(i)
                    placed = True
                    break
            if placed:
                break
        if not placed:
            clusters.append([i])

    results = []
    for cl in clusters:
        i0 = cl[int(np.argmax(grid_vals[cl]))]
        res = minimize(lambda q: -directional(q)[0], pts[i0],
                       method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 400})
        p_star = reduce_momentum(np.asarray(res.x, dtype=float))
        val, j, sample = directional(p_star)
        if sample is None:
            raise DegenerateMaximizer(f"maximizer at p={p_star} is degenerate")
        # reference eigenvector for branch tracking
        mat = m.symbol(p_star)
        if m.kind is Kind.HAMILTONIAN:
            evals, evecs = np.linalg.eigh(mat)
            omegas = evals
        else:
            evals, evecs = np.linalg.eig(mat)
            evecs = evecs / np.linalg.norm(evecs, axis=0, keepdims=True)
            omegas = -np.angle(evals)
        order = np.argsort(omegas)
        jj = order[sample.branch]
        phase = _tracked_phase_on_ray(m, p_star, n, evecs[:, jj],
                                      float(omegas[jj]))
        d3_h = _third_derivative(phase, fd_step)
        d3_h2 = _third_derivative(phase, fd_step / 2.0)
        scale = max(abs(d3_h2), abs(d3_h))
        if scale > 1e-9 and abs(d3_h2 - d3_h) > 1e-3 * scale:
            raise ThirdDerivativeUnstable(
                f"step-halving mismatch: {d3_h:.6e} vs {d3_h2:.6e}")
        b_raw = -d3_h2
        if b_raw < -1e-6 * max(1.0, scale):
            raise ThirdDerivativeUnstable(
                f"negative cubic coefficient {b_raw:.3e}; maximizer suspect")
        results.append(BoundaryExpansion(
            direction=n, boundary_point=sample.velocity.copy(),
            slope=float(n @ sample.velocity), cubic_coeff=max(b_raw, 0.0),
            branch=sample.branch, momentum=p_star))

    first = results[0]
    for other in results[1:]:
        if (abs(other.slope - first.slope) > 1e-6
                or abs(other.cubic_coeff - first.cubic_coeff)
                > max(1e-4, 1e-3 * abs(first.cubic_coeff))):
            raise NonUniqueMaximizer(
                f"distinct boundary expansions: (a={first.slope:.8f}, "
                f"b={first.cubic_coeff:.6f}) vs (a={other.slope:.8f}, "
                f"b={other.cubic_coeff:.6f})")
    return first


def boundary_rate_bound(be: BoundaryExpansion, x) -> float:
    """Lower bound (2 / sqrt(27 b/6)) (n.(x - x_star))_+^(3/2) on the rate.

    Zero on the inner side of the boundary; a nonpositive cubic coefficient
    makes the expansion uninformative and also returns zero with a warning.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    excess = float(be.direction @ (x - be.boundary_point))
    if excess <= 0.0:
        return 0.0
    b_lemma = be.cubic_coeff / 6.0
    if b_lemma <= 0.0:
        warnings.warn("flat boundary: cubic coefficient is zero, bound is trivial",
                      stacklevel=2)
        return 0.0
    return 2.0 / math.sqrt(27.0 * b_lemma) * excess**1.5


# ---------------------------------------------------------------------------
# convex-geometry bounds
# ---------------------------------------------------------------------------

def gauge(hull: Polytope, x) -> float:
    """Minkowski functional of the hull; needs the origin in its interior."""
    return hull.gauge(x)


def lieb_robinson_bound(m: LatticeModel, x) -> float:
    """Coarse rate lower bound 2 g(x) log(g(x) / (e C)) for Hamiltonians.

    C is the sum of coefficient operator norms; g the gauge functional of the
    jump hull.  If the origin is not interior to the hull, an identity term
    at the origin is added first (a constant energy shift, physically empty),
    which also adds 1 to C.  The bound is clamped at zero; it is informative
    only where g(x) > e C.
    """
    if m.kind is not Kind.HAMILTONIAN:
        raise LatticeTailsError("the log-gauge bound applies to Hamiltonian models")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    C = m.coefficient_norm_sum()
    hull = jump_hull(m)
    try:
        g = hull.gauge(x)
    except LatticeTailsError:
        pts = np.vstack([m.offsets.astype(float), np.zeros(m.dim_lattice)])
        hull = convex_hull(pts)
        C = C + 1.0
        g = hull.gauge(x)
    if g <= 0.0:
        return 0.0
    return max(0.0, 2.0 * g * math.log(g / (math.e * C)))


def propagation_bound_predicate(m: LatticeModel):
    """Membership test for the coarse region bound (e C) conv F."""
    if m.kind is not Kind.HAMILTONIAN:
        raise LatticeTailsError("the region bound applies to Hamiltonian models")
    C = m.coefficient_norm_sum()
    hull = jump_hull(m)

    def member(v, tol: float = 1e-9) -> bool:
        v = np.atleast_1d(np.asarray(v, dtype=float)) / (math.e * C)
        return hull.contains(v, tol=tol)

    return member
