"""Eigenstructure of the analytically continued symbol.

Provides pointwise spectra of the (generally non-normal) matrix A(p + i lam),
the dual-rate integrand, branch group velocities at regular momenta, and
grid-sampled propagation regions.  Band phases are defined through the
eigenvalues: for walks u = exp(-i omega), for Hamiltonians omega is the
eigenvalue itself.  No attempt is made to label branches globally over the
torus; every quantity here is pointwise, with degeneracies detected and
skipped.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePoint, EigenError, LatticeTailsError
from .geometry import Polytope, convex_hull
from .model import ComplexMomentum, Kind, LatticeModel
from .parallel import chunked_concat

GAP_TOL = 1e-8
RESIDUAL_TOL = 1e-8
MAX_DEGENERATE_FRACTION = 0.20


@dataclass(frozen=True)
class SpectrumAt:
    at: ComplexMomentum
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None


@dataclass(frozen=True)
class VelocitySample:
    p: np.ndarray
    branch: int
    omega: float
    velocity: np.ndarray
    weight: float


@dataclass(frozen=True)
class PropagationRegion:
    samples: list[VelocitySample]
    hull: Polytope
    max_speed: float
    skipped_degenerate: int = 0
    grid_points: int = 0
    imag_residue: float = 0.0

    def velocities(self) -> np.ndarray:
        return np.array([s.velocity for s in self.samples])


def eigen(mat, want_vectors: bool = False,
          at: ComplexMomentum | None = None) -> SpectrumAt:
    """Dense eigensolve with an explicit residual contract.

    Eigenpairs must satisfy ||A v - u v|| <= 1e-8 * ||A|| per returned pair;
    for (nearly) defective matrices, where no eigenvector basis exists, the
    eigenvalues are accepted if they annihilate the characteristic polynomial
    instead.  Failures raise EigenError, never pass silently.
    """
    mat = np.asarray(mat, dtype=complex)
    d = mat.shape[0]
    if mat.shape != (d, d) or d > 16:
        raise EigenError(f"expected a square matrix with d <= 16, got {mat.shape}")
    try:
        if want_vectors:
            vals, vecs = np.linalg.eig(mat)
            vecs = vecs / np.linalg.norm(vecs, axis=0, keepdims=True)
        else:
            vals = np.linalg.eigvals(mat)
            vecs = None
    except np.linalg.LinAlgError as exc:
        raise EigenError(f"eigensolver did not converge: {exc}") from exc

    scale = max(np.linalg.norm(mat, ord=2), 1.0)
    if vecs is not None:
        residual = np.linalg.norm(mat @ vecs - vecs * vals[None, :], axis=0)
        if np.any(residual > RESIDUAL_TOL * scale):
            coeffs = np.poly(mat)
            values = np.abs(np.polyval(coeffs, vals))
            if np.any(values > RESIDUAL_TOL * scale**d):
                raise EigenError(
                    f"residual {np.max(residual):.3e} exceeds the contract"
                )
    if at is None:
        at = ComplexMomentum.real(np.zeros(1))
    return SpectrumAt(at=at, eigenvalues=vals, eigenvectors=vecs)


# ---------------------------------------------------------------------------
# dual-rate integrand
# ---------------------------------------------------------------------------

def dual_rate_values(m: LatticeModel, p: np.ndarray, lam_half,
                     threads: int = 1) -> np.ndarray:
    """Dual-rate integrand on a batch of momenta with imaginary shift lam_half.

    Per point, max over the spectrum of A(p + i lam_half) of log|u|^2 (walks)
    or of 2 Im(omega) (Hamiltonians).  `lam_half` is half the dual-rate
    argument: the integrand of R(lam) is this function at lam_half = lam / 2.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    lam_half = np.asarray(lam_half, dtype=float)

    def work(chunk):
        mats = m.symbol(chunk, lam_half)
        if m.dim_cell == 1:
            vals = mats[..., 0, 0][..., None]
        else:
            try:
                vals = np.linalg.eigvals(mats)
            except np.linalg.LinAlgError as exc:
                raise EigenError(f"batched eigensolver failed: {exc}") from exc
        if m.kind is Kind.WALK:
            out = 2.0 * np.log(np.max(np.abs(vals), axis=-1))
        else:
            out = 2.0 * np.max(vals.imag, axis=-1)
        return np.atleast_1d(out)

    return chunked_concat(work, p, threads=threads)


def dual_rate_at(m: LatticeModel, z: ComplexMomentum) -> float:
    """Dual-rate integrand at a single complexified momentum z = p + i lam/2.

    The imaginary part of z is half the dual-rate argument: evaluating at
    z = p + i lam/2 gives the quantity whose supremum over p is R(lam).
    On the real torus (lam = 0) the value vanishes up to roundoff.
    """
    return float(dual_rate_values(m, z.p[None, :], z.lam)[0])


# ---------------------------------------------------------------------------
# group velocity
# ---------------------------------------------------------------------------

def _phases(kind: Kind, vals: np.ndarray) -> np.ndarray:
    if kind is Kind.WALK:
        return -np.angle(vals)
    return vals.real


def _min_gap(vals: np.ndarray) -> float:
    diff = np.abs(vals[:, None] - vals[None, :])
    np.fill_diagonal(diff, np.inf)
    return float(np.min(diff))


def group_velocity(m: LatticeModel, p, gap_tol: float = GAP_TOL) -> list[VelocitySample]:
    """Branch group velocities at a regular real momentum.

    Uses the eigenvector route, which needs no differentiation of sorted
    phases and stays correct at avoided crossings: for Hamiltonians
    v_a = Re <psi_j| dA/dp_a |psi_j>, for walks
    v_a = Re[ i <psi_j| dA/dp_a |psi_j> / u_j ], with the symbol derivative
    evaluated exactly from the jump coefficients.  The imaginary part of the
    quotient is a diagnostic and triggers a warning above 1e-8.  Raises
    DegeneratePoint when the minimal eigenvalue gap is below gap_tol.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    s, d = m.dim_lattice, m.dim_cell
    mat = m.symbol(p)
    if m.kind is Kind.HAMILTONIAN:
        vals, vecs = np.linalg.eigh(mat)
        vals = vals.astype(complex)
    else:
        sp = eigen(mat, want_vectors=True)
        vals, vecs = sp.eigenvalues, sp.eigenvectors
    if d > 1:
        gap = _min_gap(vals)
        if gap < gap_tol:
            raise DegeneratePoint(p, gap)

    derivs = [m.symbol_derivative(p, axis=a) for a in range(s)]
    omegas = _phases(m.kind, vals)
    order = np.argsort(omegas)

    samples = []
    residue = 0.0
    for rank, j in enumerate(order):
        psi = vecs[:, j]
        v = np.empty(s)
        for a in range(s):
            expect = np.vdot(psi, derivs[a] @ psi)
            quot = expect if m.kind is Kind.HAMILTONIAN else 1j * expect / vals[j]
            v[a] = quot.real
            residue = max(residue, abs(quot.imag))
        samples.append(VelocitySample(p=p.copy(), branch=rank,
                                      omega=float(omegas[j]), velocity=v,
                                      weight=1.0 / d))
    if residue > RESIDUAL_TOL:
        warnings.warn(f"group velocity imaginary residue {residue:.3e} at p={p}",
                      stacklevel=2)
    return samples


def group_velocity_fd(m: LatticeModel, p, step: float = 1e-5,
                      gap_tol: float = 1e-3) -> np.ndarray:
    """Central finite differences of branch phases; the independent cross-check.

    Branches at p +/- step are matched to the phases at p by nearest distance
    (circular for walks), so the oracle survives mild band ordering changes.
    Returns velocities of shape (d, s) ordered by ascending phase at p.
    Only a test oracle: the pipeline itself never differentiates phases.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    s, d = m.dim_lattice, m.dim_cell

    def phases(q):
        mat = m.symbol(q)
        if m.kind is Kind.HAMILTONIAN:
            return np.linalg.eigvalsh(mat)
        return _phases(Kind.WALK, np.linalg.eigvals(mat))

    base = np.sort(phases(p))
    if d > 1 and float(np.min(np.diff(base))) < gap_tol:
        raise DegeneratePoint(p, float(np.min(np.diff(base))))

    def match(pool):
        out = np.empty_like(base)
        for i, w in enumerate(base):
            delta = pool - w
            if m.kind is Kind.WALK:
                delta = (delta + np.pi) % (2 * np.pi) - np.pi
            out[i] = w + delta[int(np.argmin(np.abs(delta)))]
        return out

    vel = np.empty((d, s))
    for a in range(s):
        e = np.zeros(s)
        e[a] = step
        vel[:, a] = (match(phases(p + e)) - match(phases(p - e))) / (2 * step)
    return vel


def momentum_grid(dims) -> np.ndarray:
    """Uniform torus grid; per-axis points -pi + 2 pi k / n, k = 0..n-1."""
    axes = [np.linspace(-np.pi, np.pi, int(n), endpoint=False) for n in dims]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


@dataclass(frozen=True)
class VelocityTable:
    """Batched branch data on a momentum point set (branches sorted by phase)."""

    points: np.ndarray        # (N, s)
    omegas: np.ndarray        # (N, d)
    velocities: np.ndarray    # (N, d, s)
    gaps: np.ndarray          # (N,)
    weights: np.ndarray       # (N, d)
    imag_residue: float


def velocity_table(m: LatticeModel, pts: np.ndarray, threads: int = 1,
                   state_vectors: np.ndarray | None = None) -> VelocityTable:
    """Phases, group velocities and gaps for every branch at every point.

    When `state_vectors` (shape (N, d), the Fourier transform of a state at
    the same points) is given, per-branch weights are the squared overlaps
    with the branch eigenvectors; otherwise weights are uniform 1/d.
    Degenerate points are not skipped here; callers filter on `gaps`.
    """
    s, d = m.dim_lattice, m.dim_cell
    pts = np.atleast_2d(np.asarray(pts, dtype=float))

    def work_slice(lo, hi):
        chunk = pts[lo:hi]
        mats = m.symbol(chunk)
        if m.kind is Kind.HAMILTONIAN:
            vals, vecs = np.linalg.eigh(mats)
            vals = vals.astype(complex)
        else:
            vals, vecs = np.linalg.eig(mats)
            vecs = vecs / np.linalg.norm(vecs, axis=-2, keepdims=True)
        vel = np.empty((len(chunk), d, s))
        resid = 0.0
        for a in range(s):
            dmat = m.symbol_derivative(chunk, axis=a)
            expect = np.einsum("nkj,nkl,nlj->nj", np.conj(vecs), dmat, vecs)
            quot = expect if m.kind is Kind.HAMILTONIAN else 1j * expect / vals
            vel[:, :, a] = quot.real
            resid = max(resid, float(np.max(np.abs(quot.imag))))
        if d == 1:
            gaps = np.full(len(chunk), np.inf)
        else:
            diff = np.abs(vals[:, :, None] - vals[:, None, :])
            idx = np.arange(d)
            diff[:, idx, idx] = np.inf
            gaps = diff.min(axis=(1, 2))
        omegas = _phases(m.kind, vals)
        if state_vectors is None:
            weights = np.full((len(chunk), d), 1.0 / d)
        else:
            overlaps = np.einsum("nkj,nk->nj", np.conj(vecs),
                                 state_vectors[lo:hi])
            weights = np.abs(overlaps) ** 2
        order = np.argsort(omegas, axis=1)
        rows = np.arange(len(chunk))[:, None]
        return (omegas[rows, order], vel[rows, order], gaps,
                weights[rows, order], resid)

    from concurrent.futures import ThreadPoolExecutor

    from .parallel import DEFAULT_CHUNK
    bounds = [(i, min(i + DEFAULT_CHUNK, len(pts)))
              for i in range(0, len(pts), DEFAULT_CHUNK)]
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: work_slice(*b), bounds))
    else:
        parts = [work_slice(lo, hi) for lo, hi in bounds]
    omegas = np.concatenate([p[0] for p in parts], axis=0)
    vels = np.concatenate([p[1] for p in parts], axis=0)
    gaps = np.concatenate([p[2] for p in parts], axis=0)
    weights = np.concatenate([p[3] for p in parts], axis=0)
    resid = max(p[4] for p in parts)
    return VelocityTable(points=pts, omegas=omegas, velocities=vels,
                         gaps=gaps, weights=weights, imag_residue=resid)


def propagation_region(m: LatticeModel, grid_n: int = 64,
                       gap_tol: float = GAP_TOL,
                       threads: int = 1) -> PropagationRegion:
    """Sample branch velocities on a regular grid_n^s momentum grid.

    Degenerate grid points (gap below gap_tol) are skipped and counted; they
    form a measure-zero set for the models in scope.  Errors out when more
    than 20% of the grid is degenerate.
    """
    if grid_n < 8:
        raise LatticeTailsError("propagation_region needs grid_n >= 8")
    s, d = m.dim_lattice, m.dim_cell
    if s > 3:
        raise LatticeTailsError("exact hulls are limited to s <= 3")
    pts = momentum_grid([grid_n] * s)
    table = velocity_table(m, pts, threads=threads)

    regular = table.gaps >= gap_tol
    skipped = int((~regular).sum())
    if skipped > MAX_DEGENERATE_FRACTION * len(pts):
        raise LatticeTailsError("model too singular for grid sampling")

    samples: list[VelocitySample] = []
    for i in np.where(regular)[0]:
        for rank in range(d):
            samples.append(VelocitySample(
                p=pts[i], branch=rank, omega=float(table.omegas[i, rank]),
                velocity=table.velocities[i, rank].copy(), weight=1.0 / d))

    velocities = table.velocities[regular].reshape(-1, s)
    hull = convex_hull(velocities)
    max_speed = float(np.max(np.linalg.norm(velocities, axis=1)))
    return PropagationRegion(samples=samples, hull=hull, max_speed=max_speed,
                             skipped_degenerate=skipped, grid_points=len(pts),
                             imag_residue=table.imag_residue)
