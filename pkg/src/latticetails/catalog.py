"""Built-in reference models with closed-form oracles.

Every entry couples a concrete jump-coefficient model with independently
hand-implemented closed forms (dispersion, group speed, dual rate, rate,
radial dual, boundary coefficients, region membership).  The closed forms
are transcribed formulas, never calls into the numeric pipeline, so each
number in the test suite has two independent routes.

Models are assembled from trigonometric polynomials in the package's own
coefficient basis (offset y multiplies exp(-i p.y), offsets are physical
displacements); the builders below encode

    cos p_k        -> {+e_k: 1/2,  -e_k: 1/2}
    sin p_k        -> {+e_k: i/2,  -e_k: -i/2}
    exp(+i p_k)    -> {-e_k: 1}
    exp(-i p_k)    -> {+e_k: 1}

so that a composed matrix polynomial evaluates to the intended function of p.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import UnknownCatalogName
from .model import Kind, LatticeModel, validate_model

SQRT2_INV = 1.0 / math.sqrt(2.0)

_SIGMA = {
    1: np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    2: np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    3: np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
}


# ---------------------------------------------------------------------------
# trigonometric matrix polynomials (offset -> matrix maps)
# ---------------------------------------------------------------------------

def _unit(axis: int, s: int) -> tuple:
    e = [0] * s
    e[axis] = 1
    return tuple(e)


def _neg(off: tuple) -> tuple:
    return tuple(-o for o in off)


def p_cos(axis: int, s: int) -> dict:
    e = _unit(axis, s)
    return {e: 0.5, _neg(e): 0.5}


def p_sin(axis: int, s: int) -> dict:
    e = _unit(axis, s)
    return {e: 0.5j, _neg(e): -0.5j}


def p_exp(axis: int, s: int, sign: int) -> dict:
    e = _unit(axis, s)
    return {_neg(e) if sign > 0 else e: 1.0 + 0.0j}


def poly_add(*polys) -> dict:
    out = {}
    for poly in polys:
        for off, c in poly.items():
            out[off] = out.get(off, 0.0) + c
    return {off: c for off, c in out.items() if abs(np.max(np.abs(c))) > 1e-15}


def poly_scale(poly: dict, factor) -> dict:
    return {off: factor * c for off, c in poly.items()}


def poly_mul(a: dict, b: dict) -> dict:
    out = {}
    for ya, ca in a.items():
        for yb, cb in b.items():
            off = tuple(i + j for i, j in zip(ya, yb))
            out[off] = out.get(off, 0.0) + ca * cb
    return {off: c for off, c in out.items() if abs(np.max(np.abs(c))) > 1e-15}


def mat_from_scalar(poly: dict, mat: np.ndarray) -> dict:
    return {off: c * mat for off, c in poly.items()}


def mat_add(*polys) -> dict:
    out = {}
    for poly in polys:
        for off, mat in poly.items():
            out[off] = out.get(off, 0.0) + mat
    return {off: m for off, m in out.items() if np.max(np.abs(m)) > 1e-15}


def mat_mul(a: dict, b: dict) -> dict:
    out = {}
    for ya, ma in a.items():
        for yb, mb in b.items():
            off = tuple(i + j for i, j in zip(ya, yb))
            out[off] = out.get(off, 0.0) + ma @ mb
    return {off: m for off, m in out.items() if np.max(np.abs(m)) > 1e-15}


def mat_flip(a: dict) -> dict:
    """Map p -> -p, i.e. negate every offset."""
    return {_neg(off): m for off, m in a.items()}


def spin_rotation(axis: int, sigma: np.ndarray, s: int) -> dict:
    """Matrix polynomial of exp(i p_axis sigma) = cos(p) 1 + i sin(p) sigma."""
    eye = np.eye(sigma.shape[0], dtype=complex)
    return mat_add(mat_from_scalar(p_cos(axis, s), eye),
                   mat_from_scalar(p_sin(axis, s), 1.0j * sigma))


def model_from_matpoly(label: str, kind: Kind, s: int, matpoly: dict) -> LatticeModel:
    offsets = sorted(matpoly.keys())
    coeffs = np.array([matpoly[off] for off in offsets], dtype=complex)
    m = LatticeModel(label=label, kind=kind, dim_lattice=s,
                     dim_cell=coeffs.shape[1],
                     offsets=np.array(offsets, dtype=int),
                     coefficients=coeffs)
    validate_model(m)
    return m


# ---------------------------------------------------------------------------
# catalog entries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CatalogEntry:
    name: str
    model: LatticeModel
    closed_forms: dict = field(repr=False)
    notes: str = ""


def _coin1d_model(a: float) -> LatticeModel:
    if not 0.0 < a <= 1.0:
        raise UnknownCatalogName(f"coin1d needs 0 < a <= 1, got {a}")
    b = math.sqrt(1.0 - a * a)
    c_minus = np.array([[a, b], [0.0, 0.0]], dtype=complex)
    c_plus = np.array([[0.0, 0.0], [-b, a]], dtype=complex)
    m = LatticeModel(label=f"coin1d(a={a:.10g})", kind=Kind.WALK,
                     dim_lattice=1, dim_cell=2,
                     offsets=np.array([[-1], [1]]),
                     coefficients=np.array([c_minus, c_plus]))
    validate_model(m)
    return m


def _coin1d_forms(a: float) -> dict:
    b2 = 1.0 - a * a

    def dispersion(p) -> float:
        """omega(p) = arccos(a cos p), the positive band."""
        return math.acos(max(-1.0, min(1.0, a * math.cos(float(np.atleast_1d(p)[0])))))

    def velocity(p) -> float:
        """v(p) = a sin p / sqrt(1 - a^2 cos^2 p)."""
        p = float(np.atleast_1d(p)[0])
        return a * math.sin(p) / math.sqrt(1.0 - a * a * math.cos(p) ** 2)

    def dual_rate(lam) -> float:
        """R(l) = 2 arcsinh(a sinh(|l| / 2))."""
        lam = float(np.atleast_1d(lam)[0])
        return 2.0 * math.asinh(a * math.sinh(abs(lam) / 2.0))

    def lambda_of_x(x) -> float:
        """l(x) = 2 log((sqrt(x^2 - a^2) + x sqrt(1 - a^2)) / (a sqrt(1 - x^2)))."""
        x = abs(float(np.atleast_1d(x)[0]))
        if x < a or x >= 1.0:
            raise ValueError("closed-form maximizer needs a <= x < 1")
        return 2.0 * math.log(
            (math.sqrt(x * x - a * a) + x * math.sqrt(b2))
            / (a * math.sqrt(1.0 - x * x)))

    def rate(x) -> float:
        """I(x) = x l(x) - 2 log((sqrt(x^2 - a^2) + sqrt(1 - a^2)) / sqrt(1 - x^2)).

        Zero on [-a, a]; at |x| = 1 the supremum gives -log(a^2); infinite
        beyond the unit jump hull.
        """
        x = abs(float(np.atleast_1d(x)[0]))
        if x <= a:
            return 0.0
        if x > 1.0:
            return math.inf
        if x == 1.0:
            return -math.log(a * a)
        return x * lambda_of_x(x) - 2.0 * math.log(
            (math.sqrt(x * x - a * a) + math.sqrt(b2)) / math.sqrt(1.0 - x * x))

    return {
        "dispersion": dispersion,
        "group_velocity": velocity,
        "dual_rate": dual_rate,
        "lambda_of_x": lambda_of_x,
        "rate": rate,
        # ray expansion R(t n) = a t + (b/6) t^3 with b = a - a^3
        "boundary_coeffs": (a, a - a ** 3),
        "max_speed": a,
    }


def _weyl2d_entry() -> CatalogEntry:
    matpoly = mat_mul(spin_rotation(0, _SIGMA[1], 2),
                      spin_rotation(1, _SIGMA[3], 2))
    m = model_from_matpoly("weyl2d", Kind.WALK, 2, matpoly)

    def dispersion(p) -> float:
        """omega(p) = arccos(cos p1 cos p2)."""
        p = np.atleast_1d(p)
        return math.acos(max(-1.0, min(1.0, math.cos(p[0]) * math.cos(p[1]))))

    def speed(p) -> float:
        """|v(p)|^2 = ((1 - c1^2) c2^2 + c1^2 (1 - c2^2)) / (1 - c1^2 c2^2)."""
        p = np.atleast_1d(p)
        c1, c2 = math.cos(p[0]) ** 2, math.cos(p[1]) ** 2
        denom = 1.0 - c1 * c2
        if denom == 0.0:
            raise ValueError("conical point")
        return math.sqrt(((1.0 - c1) * c2 + c1 * (1.0 - c2)) / denom)

    def region_contains(v, tol: float = 1e-9) -> bool:
        """Propagation region is the closed unit disc."""
        return float(np.linalg.norm(np.atleast_1d(v))) <= 1.0 + tol

    forms = {"dispersion": dispersion, "speed": speed,
             "region_contains": region_contains, "max_speed": 1.0}
    return CatalogEntry(name="weyl2d", model=m, closed_forms=forms,
                        notes="two-axis spin walk whose cone is exactly circular")


def _nonconvex2d_entry() -> CatalogEntry:
    poly = poly_add(poly_mul(p_cos(0, 2), p_cos(1, 2)),
                    poly_scale(p_sin(0, 2), -1.0))
    matpoly = {off: np.array([[c]], dtype=complex) for off, c in poly.items()}
    m = model_from_matpoly("nonconvex2d", Kind.HAMILTONIAN, 2, matpoly)

    def dispersion(p) -> float:
        """omega(p) = cos p1 cos p2 - sin p1 (single band)."""
        p = np.atleast_1d(p)
        return math.cos(p[0]) * math.cos(p[1]) - math.sin(p[0])

    forms = {"dispersion": dispersion}
    return CatalogEntry(name="nonconvex2d", model=m, closed_forms=forms,
                        notes="scalar lattice Hamiltonian with a non-convex "
                              "propagation region")


def _weyl3d_entry() -> CatalogEntry:
    prod = mat_mul(mat_mul(spin_rotation(0, _SIGMA[1], 3),
                           spin_rotation(1, _SIGMA[2], 3)),
                   spin_rotation(2, _SIGMA[3], 3))
    # orient so the numeric bands match the dispersion formula below
    matpoly = mat_flip(prod)
    m = model_from_matpoly("weyl3d", Kind.WALK, 3, matpoly)

    def dispersion(p) -> float:
        """omega(p) = arccos(cos p1 cos p2 cos p3 - sin p1 sin p2 sin p3)."""
        p = np.atleast_1d(p)
        c = math.cos(p[0]) * math.cos(p[1]) * math.cos(p[2])
        sn = math.sin(p[0]) * math.sin(p[1]) * math.sin(p[2])
        return math.acos(max(-1.0, min(1.0, c - sn)))

    def region_contains(v, tol: float = 1e-9) -> bool:
        """Intersection of the three orthogonal unit cylinders."""
        v = np.atleast_1d(v)
        pairs = [(0, 1), (0, 2), (1, 2)]
        return all(v[i] ** 2 + v[j] ** 2 <= 1.0 + tol for i, j in pairs)

    forms = {"dispersion": dispersion, "region_contains": region_contains}
    return CatalogEntry(name="weyl3d", model=m, closed_forms=forms,
                        notes="three-axis spin walk; cone is a tricylinder")


def _spherical3d_entry() -> CatalogEntry:
    s = 3
    c1c2 = poly_mul(p_cos(0, s), p_cos(1, s))
    e00 = poly_mul(c1c2, p_exp(2, s, +1))
    e11 = poly_mul(c1c2, p_exp(2, s, -1))
    c1s2 = poly_mul(p_cos(0, s), p_sin(1, s))
    is1 = poly_scale(p_sin(0, s), 1.0j)
    e01 = poly_add(poly_scale(c1s2, -1.0), is1)
    e10 = poly_add(c1s2, is1)

    matpoly: dict = {}
    for poly, (i, j) in [(e00, (0, 0)), (e01, (0, 1)), (e10, (1, 0)), (e11, (1, 1))]:
        basis = np.zeros((2, 2), dtype=complex)
        basis[i, j] = 1.0
        matpoly = mat_add(matpoly, mat_from_scalar(poly, basis))
    m = model_from_matpoly("spherical3d", Kind.WALK, 3, matpoly)

    def dispersion(p) -> float:
        """omega(p) = arccos(cos p1 cos p2 cos p3)."""
        p = np.atleast_1d(p)
        return math.acos(max(-1.0, min(
            1.0, math.cos(p[0]) * math.cos(p[1]) * math.cos(p[2]))))

    def speed(p) -> float:
        """|v|^2 = 1 - ((1-c3)(1-c1 c2) + c3 (1-c1)(1-c2)) / (1 - c1 c2 c3),
        with c_k = cos^2 p_k."""
        p = np.atleast_1d(p)
        c1, c2, c3 = (math.cos(v) ** 2 for v in p)
        denom = 1.0 - c1 * c2 * c3
        if denom == 0.0:
            raise ValueError("conical point")
        frac = ((1.0 - c3) * (1.0 - c1 * c2) + c3 * (1.0 - c1) * (1.0 - c2)) / denom
        return math.sqrt(max(0.0, 1.0 - frac))

    def radial_dual(ell) -> float:
        """R_radial(l) = 2 arcosh(cosh(l / (2 sqrt(3)))^3)."""
        ell = float(np.atleast_1d(ell)[0])
        return 2.0 * math.acosh(math.cosh(ell / (2.0 * math.sqrt(3.0))) ** 3)

    forms = {"dispersion": dispersion, "speed": speed,
             "radial_dual": radial_dual, "max_speed": 1.0,
             "region_contains": lambda v, tol=1e-9:
                 float(np.linalg.norm(np.atleast_1d(v))) <= 1.0 + tol}
    return CatalogEntry(name="spherical3d", model=m, closed_forms=forms,
                        notes="three-axis spin walk with an exactly spherical cone")


_COIN_RE = re.compile(r"^coin1d(?:\((?P<a>[^)]+)\))?$")


def catalog_names() -> list[str]:
    return ["coin1d(a)", "weyl2d", "nonconvex2d", "weyl3d", "spherical3d"]


def catalog_get(name: str) -> CatalogEntry:
    """Look up a built-in model; `coin1d(a)` takes the coin parameter inline."""
    name = name.strip()
    match = _COIN_RE.match(name)
    if match:
        a = SQRT2_INV if match.group("a") is None else float(match.group("a"))
        model = _coin1d_model(a)
        return CatalogEntry(name=f"coin1d({a:.10g})", model=model,
                            closed_forms=_coin1d_forms(a),
                            notes="nearest-neighbour coined walk; the default "
                                  "coin a = 1/sqrt(2) is the balanced one")
    if name == "weyl2d":
        return _weyl2d_entry()
    if name == "nonconvex2d":
        return _nonconvex2d_entry()
    if name == "weyl3d":
        return _weyl3d_entry()
    if name == "spherical3d":
        return _spherical3d_entry()
    raise UnknownCatalogName(
        f"unknown catalog name {name!r}; known: {', '.join(catalog_names())}")


def resolve_model(source: str) -> LatticeModel:
    """Interpret a CLI model argument: catalog name first, then file path."""
    try:
        return catalog_get(source).model
    except UnknownCatalogName:
        from .model import load_model
        return load_model(source)
