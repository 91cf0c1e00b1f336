"""Error taxonomy for the production-loss and index pipeline.

Every failure the pipeline can diagnose maps to one class here so the CLI
can translate it into a stable exit code: schema problems (exit 2),
numerical failures (exit 3) and missing prerequisites (exit 4).
"""


class BasisRiskError(Exception):
    """Base class for all package errors."""


class SchemaError(BasisRiskError):
    """An input file violates its column/type/unit contract."""


class MissingPrerequisiteError(BasisRiskError):
    """A pipeline stage was invoked before the artifacts it consumes exist."""


class NumericalError(BasisRiskError):
    """Base class for numerical failures (CLI exit code 3)."""


# -- solar / production chain -------------------------------------------------

class PolarEdgeError(NumericalError):
    """Sun never rises or never sets on the requested date and latitude."""


class MissingHoursError(BasisRiskError):
    """A daylight hour required for daily aggregation is absent."""


class MissingPriceError(BasisRiskError):
    """An hourly price required by the compensation scheme is absent."""


# -- stationarization ---------------------------------------------------------

class DegenerateGroupError(NumericalError):
    """A month-year group has too few days or zero dispersion."""


class MissingStatsError(BasisRiskError):
    """No monthly statistics are available for a (month, year) key."""


# -- GLM fitting --------------------------------------------------------------

class RankDeficientError(NumericalError):
    """Covariate matrix does not have full column rank."""


class NonConvergenceError(NumericalError):
    """Iteratively reweighted least squares failed to converge."""


class NonPositivePredictorError(NumericalError):
    """Power-link prediction requested at a non-positive linear predictor."""


# -- kernel estimation --------------------------------------------------------

class DegenerateSampleError(NumericalError):
    """Sample is too small or has zero dispersion for bandwidth selection."""


class NearZeroDensityError(NumericalError):
    """Density at a query point is too small for stable log-derivatives."""


class EmptyNeighborhoodError(NumericalError):
    """No samples contribute kernel weight at a query point."""


# -- scenario enrichment ------------------------------------------------------

class FitFailureError(NumericalError):
    """No candidate marginal family produced a finite maximum likelihood."""


# -- index construction -------------------------------------------------------

class EmptyFilterError(NumericalError):
    """Filtered day set is too small to fit tail models."""


class TailCollapseError(NumericalError):
    """Most corrected tail means hit the numerical floor, so the candidate
    weights sit outside the deviation expansion's validity region."""


class ZeroVarianceSumError(NumericalError):
    """All conditional variances vanish; allocation weights are undefined."""


class InsufficientDaysError(BasisRiskError):
    """Not enough daily observations to run the requested stage."""
