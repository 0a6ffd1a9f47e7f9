import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import isotonic_regression
from scipy.stats import kendalltau

logger = logging.getLogger(__name__)


@dataclass
class TrendTest:
    tau: float
    p_value: float
    rise: float
    tolerance: float
    increasing: bool

    def to_dict(self):
        return {'tau': self.tau, 'p_value': self.p_value, 'rise': self.rise, 'tolerance': self.tolerance,
                'increasing': self.increasing}


def trend_as_t_decreases(times, values, stderr=None, alpha=0.05, z=3.0, rtol=1e-8):
    """Flag growth of ``values`` as t decreases.

    A trend is reported only when the one-sided Kendall test rejects at
    ``alpha`` and the isotonic fit rises by more than z times the largest
    standard error (and by more than rtol of the largest value).
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = np.isfinite(values)
    times, values = times[keep], values[keep]
    if len(values) < 3:
        return TrendTest(np.nan, 1.0, 0.0, 0.0, False)
    order = np.argsort(-times)
    ordered = values[order]
    if np.all(ordered == ordered[0]):
        return TrendTest(0.0, 1.0, 0.0, 0.0, False)
    result = kendalltau(-times, values, alternative='greater')
    fitted = isotonic_regression(ordered, increasing=True).x
    rise = float(fitted[-1] - fitted[0])
    tolerance = rtol * float(np.max(np.abs(values)))
    if stderr is not None:
        tolerance = max(tolerance, z * float(np.nanmax(np.asarray(stderr, dtype=float)[keep])))
    increasing = bool(result.pvalue < alpha and rise > tolerance)
    if increasing:
        logger.warning("values grow as t decreases (tau %.3f, p %.3g, rise %.4g)", result.statistic,
                       result.pvalue, rise)
    return TrendTest(float(result.statistic), float(result.pvalue), rise, tolerance, increasing)
