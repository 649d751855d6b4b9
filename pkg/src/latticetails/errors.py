"""Exception types shared across the package."""


class LatticeTailsError(Exception):
    """Base class for all package-specific errors."""


class ModelFormatError(LatticeTailsError):
    """The model document violates the file schema."""


class ModelValidationError(LatticeTailsError):
    """The model parses but fails a physics invariant (unitarity, hermiticity)."""


class EigenError(LatticeTailsError):
    """Dense eigensolver did not converge or violated its residual contract."""


class DegeneratePoint(LatticeTailsError):
    """Spectrum too degenerate at a momentum for branch-wise quantities."""

    def __init__(self, p, gap):
        super().__init__(f"degenerate spectrum at p={p} (gap={gap:.3e})")
        self.p = p
        self.gap = gap


class NonUniqueMaximizer(LatticeTailsError):
    """Several boundary maximizers with genuinely different expansions."""


class DegenerateMaximizer(LatticeTailsError):
    """Boundary maximizer sits at a spectral degeneracy."""


class ThirdDerivativeUnstable(LatticeTailsError):
    """Finite-difference third derivative failed its step-halving check."""


class InsufficientData(LatticeTailsError):
    """Not enough usable points for a fit."""


class BoxTooLarge(LatticeTailsError):
    """Requested evolution box exceeds the memory budget."""

    def __init__(self, required_cells, budget_cells):
        super().__init__(
            f"evolution box needs {required_cells} cells, budget is {budget_cells}; "
            "reduce t_max or raise the budget"
        )
        self.required_cells = required_cells
        self.budget_cells = budget_cells


class UnknownCatalogName(LatticeTailsError):
    """Requested catalog entry does not exist."""
