"""cyrisk: score corporate disclosures for cyber-risk content and test
whether the score is priced in stock returns.

The pipeline: EDGAR index parsing and filing download (`edgar`), text
cleanup into token paragraphs (`textprep`), a from-scratch paragraph
embedding engine (`embed`), similarity scoring against a reference corpus
of attack-technique descriptions (`scoring`), value-weighted portfolio
sorts (`portfolio`), and an econometric test suite - rolling-beta
cross-sectional premia, joint pricing-error tests, and a closed-form
Bayesian factor-model scan (`apt`).
"""

__version__ = "0.1.0"

from . import apt, edgar, embed, months, panels, portfolio, scoring, textprep
from .errors import ConfigError, CyriskError, DataError, NumericError

__all__ = [
    "__version__",
    "apt",
    "edgar",
    "embed",
    "months",
    "panels",
    "portfolio",
    "scoring",
    "textprep",
    "CyriskError",
    "ConfigError",
    "DataError",
    "NumericError",
]
