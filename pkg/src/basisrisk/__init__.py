"""Weather-index insurance for solar producers, with peer-to-peer
sharing of the residual basis risk.

The package covers the full chain: hourly PV production from forecast
and observed weather, daily loss panels with monthly stationarization,
per-farm GLMs, kernel-based conditional moments, index-weight
optimization, and the variance-proportional allocation of the pooled
basis risk. The ``basisrisk`` command line drives the staged pipeline.
"""

__version__ = "0.1.0"

from .exceptions import BasisRiskError  # noqa: F401
