"""Translation-invariant lattice dynamics as finite trigonometric matrix polynomials.

A model is a finite map from integer jump offsets y in Z^s to complex d x d
coefficient matrices C_y, tagged either as a discrete-time walk or as a
continuous-time Hamiltonian.  With the Fourier convention

    (F psi)(p) = sum_x exp(-i p.x) psi(x),

a physical displacement by y contributes the term C_y exp(-i p.y), so the
momentum-space symbol and its entire analytic continuation are

    A(p + i lam) = sum_y C_y exp(-i (p + i lam).y),

with p in the Brillouin zone [-pi, pi]^s and lam in R^s.  Walks have unitary
A(p) on the real torus, Hamiltonians have Hermitian A(p); both are checked on
a validation grid at load time.  Storing coefficients by physical displacement
keeps the jump hull and the propagation region in the same orientation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ModelFormatError, ModelValidationError
from .geometry import Polytope, convex_hull

UNITARITY_TOL = 1e-10
HERMITICITY_TOL = 1e-12
VALIDATION_GRID = 17          # points per axis, total capped at 17**3
MAX_CELL_DIM = 16


class Kind(str, Enum):
    WALK = "walk"
    HAMILTONIAN = "hamiltonian"


@dataclass(frozen=True)
class LatticeModel:
    """Finite-jump translation-invariant dynamics on Z^s with d internal states."""

    label: str
    kind: Kind
    dim_lattice: int
    dim_cell: int
    offsets: np.ndarray       # (m, s) integer displacement vectors
    coefficients: np.ndarray  # (m, d, d) complex

    def __post_init__(self):
        object.__setattr__(self, "offsets", np.asarray(self.offsets, dtype=int))
        object.__setattr__(
            self, "coefficients", np.asarray(self.coefficients, dtype=complex)
        )

    # -- basic derived quantities -------------------------------------------

    def max_jump_per_axis(self) -> np.ndarray:
        return np.max(np.abs(self.offsets), axis=0)

    def coefficient_norm_sum(self) -> float:
        """Sum of operator norms of the coefficient matrices."""
        return float(sum(np.linalg.norm(c, ord=2) for c in self.coefficients))

    def symbol(self, p, lam=None) -> np.ndarray:
        """Evaluate A(p + i lam) at one or many momenta.

        `p` has shape (..., s) (or scalar s=1); returns shape (..., d, d).
        """
        p = np.atleast_1d(np.asarray(p, dtype=float))
        if p.shape[-1] != self.dim_lattice:
            p = p.reshape(p.shape + (self.dim_lattice,)) if self.dim_lattice == 1 else p
        if p.shape[-1] != self.dim_lattice:
            raise ValueError("momentum has wrong dimension")
        exponent = -1j * (p @ self.offsets.T)
        if lam is not None:
            lam = np.atleast_1d(np.asarray(lam, dtype=float))
            exponent = exponent + lam @ self.offsets.T
        weights = np.exp(exponent)
        return np.einsum("...m,mjk->...jk", weights, self.coefficients)

    def symbol_derivative(self, p, axis: int, lam=None) -> np.ndarray:
        """d/dp_axis of the symbol, computed exactly from the coefficients."""
        deriv = LatticeModel(
            label=self.label,
            kind=self.kind,
            dim_lattice=self.dim_lattice,
            dim_cell=self.dim_cell,
            offsets=self.offsets,
            coefficients=(-1j * self.offsets[:, axis])[:, None, None]
            * self.coefficients,
        )
        return deriv.symbol(p, lam)


@dataclass(frozen=True)
class ComplexMomentum:
    """A point p + i lam in the complexified Brillouin zone.

    The real part is reduced modulo 2 pi into [-pi, pi).
    """

    p: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        if p.shape != lam.shape:
            raise ValueError("real and imaginary parts must have equal length")
        object.__setattr__(self, "p", reduce_momentum(p))
        object.__setattr__(self, "lam", lam)

    @classmethod
    def real(cls, p) -> "ComplexMomentum":
        p = np.atleast_1d(np.asarray(p, dtype=float))
        return cls(p=p, lam=np.zeros_like(p))

    @property
    def z(self) -> np.ndarray:
        return self.p + 1j * self.lam


@dataclass(frozen=True)
class SymbolValue:
    matrix: np.ndarray
    at: ComplexMomentum


def reduce_momentum(p: np.ndarray) -> np.ndarray:
    return (np.asarray(p, dtype=float) + np.pi) % (2.0 * np.pi) - np.pi


def evaluate_symbol(m: LatticeModel, z: ComplexMomentum) -> SymbolValue:
    """Exact finite sum sum_y C_y exp(-i (p + i lam).y)."""
    return SymbolValue(matrix=m.symbol(z.p, z.lam), at=z)


def jump_hull(m: LatticeModel) -> Polytope:
    """Convex hull of the physical displacement vectors (a point is fine)."""
    return convex_hull(m.offsets.astype(float))


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

def _matrix_from_pairs(rows, d, where):
    mat = np.zeros((d, d), dtype=complex)
    if len(rows) != d:
        raise ModelFormatError(f"{where}: matrix must have {d} rows")
    for i, row in enumerate(rows):
        if len(row) != d:
            raise ModelFormatError(f"{where}: matrix row {i} must have {d} entries")
        for j, entry in enumerate(row):
            if not (isinstance(entry, (list, tuple)) and len(entry) == 2):
                raise ModelFormatError(
                    f"{where}: entry ({i},{j}) must be a [re, im] pair"
                )
            mat[i, j] = complex(float(entry[0]), float(entry[1]))
    return mat


def _matrix_to_pairs(mat: np.ndarray):
    return [[[float(v.real), float(v.imag)] for v in row] for row in mat]


def model_from_dict(doc: dict) -> LatticeModel:
    """Parse and validate a model document (see `model_to_dict` for the schema)."""
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a mapping")
    required = {"label", "kind", "dim_lattice", "dim_cell", "jumps"}
    missing = required - doc.keys()
    if missing:
        raise ModelFormatError(f"missing keys: {sorted(missing)}")
    unknown = doc.keys() - required
    if unknown:
        raise ModelFormatError(f"unknown keys: {sorted(unknown)}")

    try:
        kind = Kind(doc["kind"])
    except ValueError:
        raise ModelFormatError(f"kind must be 'walk' or 'hamiltonian', got {doc['kind']!r}")
    s = int(doc["dim_lattice"])
    d = int(doc["dim_cell"])
    if s < 1:
        raise ModelFormatError("dim_lattice must be a positive integer")
    if not 1 <= d <= MAX_CELL_DIM:
        raise ModelFormatError(f"dim_cell must be in [1, {MAX_CELL_DIM}]")
    jumps = doc["jumps"]
    if not isinstance(jumps, list) or not jumps:
        raise ModelFormatError("jumps must be a non-empty list")

    offsets, coeffs, seen = [], [], set()
    for k, item in enumerate(jumps):
        if not isinstance(item, dict) or set(item) != {"offset", "matrix"}:
            raise ModelFormatError(f"jump {k}: needs exactly 'offset' and 'matrix'")
        off = item["offset"]
        if len(off) != s or any(int(o) != o for o in off):
            raise ModelFormatError(f"jump {k}: offset must be {s} integers")
        key = tuple(int(o) for o in off)
        if key in seen:
            raise ModelFormatError(f"duplicate offset {list(key)}")
        seen.add(key)
        offsets.append(key)
        coeffs.append(_matrix_from_pairs(item["matrix"], d, f"jump {k}"))

    m = LatticeModel(
        label=str(doc["label"]),
        kind=kind,
        dim_lattice=s,
        dim_cell=d,
        offsets=np.array(offsets, dtype=int),
        coefficients=np.array(coeffs, dtype=complex),
    )
    validate_model(m)
    return m


def model_to_dict(m: LatticeModel) -> dict:
    return {
        "label": m.label,
        "kind": m.kind.value,
        "dim_lattice": m.dim_lattice,
        "dim_cell": m.dim_cell,
        "jumps": [
            {"offset": [int(o) for o in off], "matrix": _matrix_to_pairs(c)}
            for off, c in zip(m.offsets, m.coefficients)
        ],
    }


def load_model(source) -> LatticeModel:
    """Load a model from a dict, a JSON string, or a file path."""
    if isinstance(source, dict):
        return model_from_dict(source)
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        text = Path(source).read_text()
    else:
        text = source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"not valid JSON: {exc}") from exc
    return model_from_dict(doc)


def save_model(m: LatticeModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(m), indent=2) + "\n")


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def validation_points(s: int, per_axis: int = VALIDATION_GRID) -> np.ndarray:
    """Deterministic momentum grid used for load-time checks (capped at 17^3)."""
    if s <= 3:
        axes = [np.linspace(-np.pi, np.pi, per_axis, endpoint=False)] * s
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)
    rng = np.random.default_rng(17)
    return rng.uniform(-np.pi, np.pi, size=(per_axis**3, s))


def validate_model(m: LatticeModel, raise_on_failure: bool = True) -> dict:
    """Check unitarity (walks) or hermiticity (Hamiltonians) on the grid.

    Returns a report with the measured defects; raises ModelValidationError
    when a defect exceeds its tolerance (unless raise_on_failure is False).
    """
    pts = validation_points(m.dim_lattice)
    vals = m.symbol(pts)
    eye = np.eye(m.dim_cell)
    report = {"label": m.label, "kind": m.kind.value}
    if m.kind is Kind.WALK:
        defect = vals @ np.conj(np.swapaxes(vals, -1, -2)) - eye
        worst = float(np.max(np.abs(defect)))
        report["unitarity_defect"] = worst
        report["tolerance"] = UNITARITY_TOL
        report["passed"] = worst <= UNITARITY_TOL
        if raise_on_failure and not report["passed"]:
            raise ModelValidationError(
                f"unitarity defect {worst:.3e} exceeds {UNITARITY_TOL:.0e}"
            )
    else:
        defect = vals - np.conj(np.swapaxes(vals, -1, -2))
        worst = float(np.max(np.abs(defect)))
        report["hermiticity_defect"] = worst
        report["tolerance"] = HERMITICITY_TOL
        report["passed"] = worst <= HERMITICITY_TOL
        if raise_on_failure and not report["passed"]:
            raise ModelValidationError(
                f"hermiticity defect {worst:.3e} exceeds {HERMITICITY_TOL:.0e}"
            )
    return report
