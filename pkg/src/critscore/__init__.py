"""Score-based inference that stays valid near singular Fisher information."""

__version__ = "0.1.0"

from .chisq import chisq_cdf, chisq_quantile, chisq_sf
from .core import (CriticalPattern, ModifiedScore, ParameterPoint, TestResult, critical_pattern,
                   detect_critical_numeric, modified_score, modified_statistic, schur_complement,
                   subvector_statistic)
from .exceptions import (CritScoreError, DomainError, EmptyGroup, EmptyRegion, MissingColumn,
                         NonNumericCell, NonOrthogonalNuisanceWarning, RankDeficientDesign,
                         SingularInformation)
from .regions import componentwise_interval, invert_region

__all__ = [
    "__version__",
    "chisq_cdf", "chisq_quantile", "chisq_sf",
    "CriticalPattern", "ModifiedScore", "ParameterPoint", "TestResult", "critical_pattern",
    "detect_critical_numeric", "modified_score", "modified_statistic", "schur_complement",
    "subvector_statistic",
    "CritScoreError", "DomainError", "EmptyGroup", "EmptyRegion", "MissingColumn", "NonNumericCell",
    "NonOrthogonalNuisanceWarning", "RankDeficientDesign", "SingularInformation",
    "componentwise_interval", "invert_region",
]
