"""Exact evolution on finite lattices: tails, moments, empirical rates.

Walks are evolved by position-space convolution on a zero-padded box sized so
that nothing can reach the boundary; mass outside the ballistic cone is then
exactly zero, not approximately.  Hamiltonians are evolved by diagonalizing
the symbol on the discrete momentum grid of a periodic box sized from the
coarse propagation bound, so the only approximation is the finite box itself,
never a time-stepping error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import BoxTooLarge, InsufficientData, LatticeTailsError
from .model import Kind, LatticeModel

BOX_CELL_BUDGET = 1 << 26          # complex amplitudes
PRECISION_FLOOR = 1e-12            # below this, tail points are excluded from fits
MOMENT_FLOOR = 1e-26               # below this, cells are numerically meaningless
HAMILTONIAN_BOX_MARGIN = 8


@dataclass(frozen=True)
class InitialState:
    """Finitely supported pure state: map from lattice site to internal vector."""

    amplitudes: dict
    normalized: bool = False

    @classmethod
    def point(cls, m: LatticeModel, internal=None, site=None) -> "InitialState":
        """State concentrated on one site (default: origin, first basis vector)."""
        s, d = m.dim_lattice, m.dim_cell
        if site is None:
            site = (0,) * s
        vec = np.zeros(d, dtype=complex)
        if internal is None:
            vec[0] = 1.0
        else:
            vec[:] = np.asarray(internal, dtype=complex)
        return cls(amplitudes={tuple(int(c) for c in site): vec}).normalize()

    def norm(self) -> float:
        return math.sqrt(sum(float(np.sum(np.abs(v) ** 2))
                             for v in self.amplitudes.values()))

    def normalize(self) -> "InitialState":
        nrm = self.norm()
        if nrm == 0.0:
            raise LatticeTailsError("cannot normalize the zero state")
        amps = {k: np.asarray(v, dtype=complex) / nrm
                for k, v in self.amplitudes.items()}
        return InitialState(amplitudes=amps, normalized=True)

    def support_bounds(self, s: int):
        sites = np.array(list(self.amplitudes.keys()), dtype=int).reshape(-1, s)
        return sites.min(axis=0), sites.max(axis=0)


@dataclass(frozen=True)
class EvolutionRecord:
    """Position distributions on a finite box at the stored times."""

    kind: Kind
    times: np.ndarray
    box_lo: np.ndarray                  # (s,) coordinate of the box corner
    box_dims: tuple
    probabilities: list                 # per time, array of shape box_dims
    wraparound_safe: bool
    max_jump: np.ndarray                # per-axis jump bound used for the box

    def site_coordinates(self) -> np.ndarray:
        axes = [self.box_lo[a] + np.arange(n)
                for a, n in enumerate(self.box_dims)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def distribution(self, t) -> np.ndarray:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(float(self.times[idx]) - t) > 1e-9:
            raise LatticeTailsError(f"time {t} was not stored")
        return self.probabilities[idx]


def _embed(psi0: InitialState, box_lo, dims, d) -> np.ndarray:
    psi = np.zeros(tuple(dims) + (d,), dtype=complex)
    for site, vec in psi0.amplitudes.items():
        idx = tuple(int(c - lo) for c, lo in zip(site, box_lo))
        psi[idx] = vec
    return psi


def _boundary_mass(prob: np.ndarray) -> float:
    total = 0.0
    for axis in range(prob.ndim):
        sl_lo = [slice(None)] * prob.ndim
        sl_hi = [slice(None)] * prob.ndim
        sl_lo[axis] = 0
        sl_hi[axis] = -1
        total = max(total, float(prob[tuple(sl_lo)].sum()),
                    float(prob[tuple(sl_hi)].sum()))
    return total


def evolve(m: LatticeModel, psi0: InitialState, t_max, dt: float | None = None,
           store_times=None, margin: int = HAMILTONIAN_BOX_MARGIN,
           cell_budget: int = BOX_CELL_BUDGET) -> EvolutionRecord:
    """Evolve a finitely supported state and record position distributions.

    Walks advance by exact position-space convolution with the jump
    coefficients (box: support dilated by the per-axis jump bound times
    t_max, plus one guard cell).  Hamiltonians multiply exp(-i H(p) t) on the
    momentum grid of a periodic box with per-axis half-width
    ceil(e C t_max) + margin from the coarse propagation bound, evaluating
    each stored time directly.
    """
    if not psi0.normalized:
        psi0 = psi0.normalize()
    s, d = m.dim_lattice, m.dim_cell
    lo_sup, hi_sup = psi0.support_bounds(s)

    if m.kind is Kind.WALK:
        t_max = int(t_max)
        L = m.max_jump_per_axis()
        lo = lo_sup - L * t_max - 1
        hi = hi_sup + L * t_max + 1
        dims = tuple(int(h - l + 1) for l, h in zip(lo, hi))
        if int(np.prod(dims)) * d > cell_budget:
            raise BoxTooLarge(int(np.prod(dims)) * d, cell_budget)
        psi = _embed(psi0, lo, dims, d)
        all_times = np.arange(0, t_max + 1)
        wanted = set(int(t) for t in (store_times if store_times is not None
                                      else all_times))
        shifts = []
        for off, coeff in zip(m.offsets, m.coefficients):
            tgt, src = [], []
            for a in range(s):
                y = int(off[a])
                tgt.append(slice(max(y, 0), dims[a] + min(y, 0)))
                src.append(slice(max(-y, 0), dims[a] - max(y, 0)))
            shifts.append((tuple(tgt), tuple(src), coeff.T.copy()))

        times, probs = [], []
        if 0 in wanted:
            times.append(0)
            probs.append(np.sum(np.abs(psi) ** 2, axis=-1))
        for t in range(1, t_max + 1):
            new = np.zeros_like(psi)
            for tgt, src, coeff_t in shifts:
                new[tgt] += psi[src] @ coeff_t
            psi = new
            if t in wanted:
                times.append(t)
                probs.append(np.sum(np.abs(psi) ** 2, axis=-1))
        times = np.array(times, dtype=float)
    else:
        C = m.coefficient_norm_sum()
        halfwidth = int(math.ceil(math.e * C * float(t_max))) + margin
        lo = lo_sup - halfwidth
        hi = hi_sup + halfwidth
        dims = tuple(int(h - l + 1) for l, h in zip(lo, hi))
        if int(np.prod(dims)) * d > cell_budget:
            raise BoxTooLarge(int(np.prod(dims)) * d, cell_budget)
        if store_times is not None:
            times = np.asarray(store_times, dtype=float)
        else:
            step = 1.0 if dt is None else float(dt)
            times = np.arange(0.0, float(t_max) + step / 2, step)
        psi = _embed(psi0, lo, dims, d)
        spatial = tuple(range(s))
        psi_hat = np.fft.fftn(psi, axes=spatial)
        momenta = np.meshgrid(*[2.0 * np.pi * np.fft.fftfreq(n) for n in dims],
                              indexing="ij")
        pts = np.stack([g.ravel() for g in momenta], axis=-1)
        psi_hat_flat = psi_hat.reshape(-1, d)

        if d == 1:
            hvals = m.symbol(pts)[:, 0, 0].real
            eigvals, eigvecs = hvals[:, None], None
        else:
            mats = m.symbol(pts)
            eigvals, eigvecs = np.linalg.eigh(mats)

        probs = []
        for t in times:
            if eigvecs is None:
                evolved = np.exp(-1j * eigvals[:, 0] * t)[:, None] * psi_hat_flat
            else:
                coeffs = np.einsum("nkj,nk->nj", np.conj(eigvecs), psi_hat_flat)
                coeffs = coeffs * np.exp(-1j * eigvals * t)
                evolved = np.einsum("nkj,nj->nk", eigvecs, coeffs)
            psi_t = np.fft.ifftn(evolved.reshape(psi_hat.shape), axes=spatial)
            probs.append(np.sum(np.abs(psi_t) ** 2, axis=-1))
        L = m.max_jump_per_axis()

    safe = all(_boundary_mass(pr) < 1e-14 for pr in probs)
    return EvolutionRecord(kind=m.kind, times=times, box_lo=np.asarray(lo),
                           box_dims=dims, probabilities=probs,
                           wraparound_safe=bool(safe),
                           max_jump=m.max_jump_per_axis())


# ---------------------------------------------------------------------------
# regions and tail series
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Region:
    """Velocity-space region: half-space {v . n >= c} or ball complement {|v| >= r}."""

    kind: str                      # "half" or "ball"
    normal: np.ndarray | None = None
    threshold: float = 0.0

    @classmethod
    def half_space(cls, normal, c: float) -> "Region":
        n = np.atleast_1d(np.asarray(normal, dtype=float))
        return cls(kind="half", normal=n, threshold=float(c))

    @classmethod
    def ball_complement(cls, r: float) -> "Region":
        return cls(kind="ball", threshold=float(r))

    @classmethod
    def parse(cls, text: str) -> "Region":
        """Parse 'half n1,..,ns c' or 'ball r'."""
        parts = text.split()
        if parts[0] == "half" and len(parts) == 3:
            n = np.array([float(v) for v in parts[1].split(",")])
            return cls.half_space(n, float(parts[2]))
        if parts[0] == "ball" and len(parts) == 2:
            return cls.ball_complement(float(parts[1]))
        raise LatticeTailsError(f"cannot parse region {text!r}")

    def mask(self, coords: np.ndarray, t: float) -> np.ndarray:
        """Sites x with x/t in the region; thresholds scale with t."""
        if self.kind == "half":
            return coords @ self.normal >= self.threshold * t
        return np.linalg.norm(coords, axis=1) >= self.threshold * t

    def describe(self) -> str:
        if self.kind == "half":
            n = ",".join(f"{v:g}" for v in self.normal)
            return f"half {n} {self.threshold:g}"
        return f"ball {self.threshold:g}"


@dataclass(frozen=True)
class TailSeries:
    region: Region
    times: np.ndarray
    probabilities: np.ndarray
    empirical_rates: np.ndarray        # -(1/t) log p_t, NaN where unusable
    below_precision: np.ndarray        # bool, excluded from fits


def tail_probability(rec: EvolutionRecord, region: Region) -> TailSeries:
    """Exact sums of the stored distributions over the scaled region."""
    coords = rec.site_coordinates().astype(float)
    probs = np.empty(len(rec.times))
    for i, t in enumerate(rec.times):
        mask = region.mask(coords, float(t))
        probs[i] = float(rec.probabilities[i].ravel()[mask].sum())
    below = probs < PRECISION_FLOOR
    rates = np.full(len(rec.times), np.nan)
    ok = (~below) & (rec.times > 0)
    rates[ok] = -np.log(probs[ok]) / rec.times[ok]
    return TailSeries(region=region, times=rec.times.copy(),
                      probabilities=probs, empirical_rates=rates,
                      below_precision=below)


@dataclass(frozen=True)
class ExpMomentSeries:
    lam: np.ndarray
    times: np.ndarray
    log_moments: np.ndarray
    excluded_mass: np.ndarray
    floor: float

    @property
    def moments(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_moments)


def exp_moment(rec: EvolutionRecord, lam, floor: float = MOMENT_FLOOR) -> ExpMomentSeries:
    """log of sum_x exp(lam.x) p_t(x), accumulated in log space.

    Cells with probability below `floor` are excluded: their stored values
    sit at or below the double-precision noise of the evolution and would
    otherwise be amplified by exp(lam.x) into garbage.  The excluded mass is
    reported per time; pass floor=0.0 to disable the guard.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    coords = rec.site_coordinates().astype(float)
    shifts = coords @ lam
    logm = np.empty(len(rec.times))
    excluded = np.zeros(len(rec.times))
    for i in range(len(rec.times)):
        p = rec.probabilities[i].ravel()
        keep = p > floor
        excluded[i] = float(p[~keep].sum())
        with np.errstate(divide="ignore"):
            logm[i] = float(logsumexp(shifts[keep] + np.log(p[keep])))
    return ExpMomentSeries(lam=lam, times=rec.times.copy(), log_moments=logm,
                           excluded_mass=excluded, floor=floor)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    n_points: int

    @property
    def rate(self) -> float:
        return -self.slope


def empirical_rate(ts: TailSeries, fit_window) -> RateFit:
    """Least-squares slope of log p_t over t in the window; rate = -slope.

    Uses only usable points (not below precision, t > 0); needs at least
    five of them or raises InsufficientData.
    """
    t0, t1 = fit_window
    usable = (~ts.below_precision) & (ts.times >= t0) & (ts.times <= t1) \
        & (ts.times > 0) & (ts.probabilities > 0)
    if int(usable.sum()) < 5:
        raise InsufficientData(
            f"only {int(usable.sum())} usable tail points in window [{t0}, {t1}]")
    t = ts.times[usable]
    y = np.log(ts.probabilities[usable])
    slope, intercept = np.polyfit(t, y, 1)
    return RateFit(slope=float(slope), intercept=float(intercept),
                   n_points=int(usable.sum()))


# ---------------------------------------------------------------------------
# weak convergence to the group-velocity distribution
# ---------------------------------------------------------------------------

def velocity_histogram(rec: EvolutionRecord, t):
    """Empirical distribution of Q(t)/t: velocity points with probabilities."""
    if float(np.max(rec.max_jump)) * float(t) < 20:
        raise LatticeTailsError("t too small: need max_jump * t >= 20 bins")
    prob = rec.distribution(t).ravel()
    coords = rec.site_coordinates().astype(float)
    keep = prob > 0
    return coords[keep] / float(t), prob[keep]


def theoretical_velocity_distribution(m: LatticeModel, psi0: InitialState,
                                      grid_n: int = 256, gap_tol: float = 1e-8,
                                      threads: int = 1):
    """Distribution of the group velocity in the given state.

    Samples the torus on grid_n^s points; branch weights are the squared
    overlaps of the branch eigenvectors with the Fourier transform of the
    initial state, normalized over the grid.  Degenerate points are skipped;
    more than 20% of them is an error.
    """
    from .spectra import velocity_table, momentum_grid

    if not psi0.normalized:
        psi0 = psi0.normalize()
    s, d = m.dim_lattice, m.dim_cell
    pts = momentum_grid([grid_n] * s)
    sites = np.array(list(psi0.amplitudes.keys()), dtype=float).reshape(-1, s)
    vecs = np.array([psi0.amplitudes[tuple(int(c) for c in site)]
                     for site in sites])
    phases = np.exp(-1j * pts @ sites.T)          # (N, n_sites)
    psi_hat = phases @ vecs                       # (N, d)

    table = velocity_table(m, pts, threads=threads, state_vectors=psi_hat)
    regular = table.gaps >= gap_tol
    frac_bad = 1.0 - float(regular.mean())
    if frac_bad > 0.20:
        raise LatticeTailsError(
            f"{frac_bad:.0%} of grid points are degenerate")
    velocities = table.velocities[regular].reshape(-1, s)
    weights = table.weights[regular].reshape(-1)
    total = weights.sum()
    if total <= 0:
        raise LatticeTailsError("state has no weight on regular points")
    return velocities, weights / total, frac_bad


def _weighted_cdf_distance(x1, w1, x2, w2) -> float:
    """Sup distance of two weighted empirical CDFs on the line."""
    o1 = np.argsort(x1, kind="stable")
    o2 = np.argsort(x2, kind="stable")
    x1s, c1 = x1[o1], np.cumsum(w1[o1])
    x2s, c2 = x2[o2], np.cumsum(w2[o2])
    grid = np.unique(np.concatenate([x1s, x2s]))

    def eval_cdf(xs, cs, side):
        idx = np.searchsorted(xs, grid, side=side)
        out = np.concatenate([[0.0], cs])[idx]
        return out

    d_right = np.max(np.abs(eval_cdf(x1s, c1, "right") - eval_cdf(x2s, c2, "right")))
    d_left = np.max(np.abs(eval_cdf(x1s, c1, "left") - eval_cdf(x2s, c2, "left")))
    return float(max(d_right, d_left))


def compare_velocity_distributions(rec: EvolutionRecord, t, m: LatticeModel,
                                   psi0: InitialState, grid_n: int = 256,
                                   threads: int = 1) -> dict:
    """Kolmogorov distances between Q(t)/t and the group-velocity distribution.

    Returns per-axis distances, the radial distance, and their maximum.
    """
    emp_v, emp_w = velocity_histogram(rec, t)
    th_v, th_w, _ = theoretical_velocity_distribution(m, psi0, grid_n=grid_n,
                                                      threads=threads)
    out = {}
    for a in range(m.dim_lattice):
        out[f"axis_{a}"] = _weighted_cdf_distance(emp_v[:, a], emp_w,
                                                  th_v[:, a], th_w)
    out["radial"] = _weighted_cdf_distance(np.linalg.norm(emp_v, axis=1), emp_w,
                                           np.linalg.norm(th_v, axis=1), th_w)
    out["max"] = max(out.values())
    return out
