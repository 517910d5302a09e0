"""Log-log regression of endpoint power laws v ~ C |t - t0|^alpha."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import FitError

DEFAULT_MARGIN = 0.02
MIN_SAMPLES = 8
MIN_DECADES = 1.5


@dataclass
class SingularityReport:
    """Fitted local exponent of a series near ``t0``.

    Attributes
    ----------
    alpha : float
        Slope of log|v| against log|t - t0|.
    coefficient : float
        Signed prefactor C, so that v ~ C |t - t0|^alpha.
    r_squared : float
        Coefficient of determination of the log-log fit.
    integrable : bool
        True iff alpha > -1 + margin.
    margin : float
        Guard band around the integrability boundary alpha = -1.
    window : tuple
        Range of |t - t0| actually used.
    n : int
        Number of samples used.
    """

    alpha: float
    coefficient: float
    r_squared: float
    integrable: bool
    margin: float
    window: tuple
    n: int
    t0: float = 0.0

    @property
    def classification(self) -> str:
        """"integrable", "non-integrable" or "borderline" (inside the margin)."""
        if self.alpha > -1.0 + self.margin:
            return "integrable"
        if self.alpha < -1.0 - self.margin:
            return "non-integrable"
        return "borderline"


def fit_exponent(t, v, t0: float = 0.0, window=None, margin: float = DEFAULT_MARGIN) -> SingularityReport:
    """Fit v ~ C |t - t0|^alpha by least squares in log-log coordinates.

    Parameters
    ----------
    t, v : array_like
        Samples near ``t0`` (on one side of it).
    t0 : float
        Location of the suspected singularity.
    window : (lo, hi), optional
        Keep only samples with lo <= |t - t0| <= hi.
    margin : float
        Guard band for the integrable flag.

    Raises
    ------
    FitError
        Fewer than 8 samples, span under 1.5 decades, zeros or sign changes.
    """
    t = np.asarray(t, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if t.shape != v.shape:
        raise FitError("t and v must have the same length")
    d = np.abs(t - t0)
    keep = d > 0
    if window is not None:
        lo, hi = window
        keep &= (d >= lo) & (d <= hi)
    d, v = d[keep], v[keep]
    if d.size < MIN_SAMPLES:
        raise FitError(f"need at least {MIN_SAMPLES} samples, got {d.size}")
    span = np.log10(d.max() / d.min())
    if span < MIN_DECADES:
        raise FitError(f"samples span {span:.2f} decades, need {MIN_DECADES}")
    if not np.all(np.isfinite(v)):
        raise FitError("non-finite samples in the fit window")
    if np.any(v == 0):
        raise FitError("zero samples in the fit window")
    sign = np.sign(v)
    if np.any(sign != sign[0]):
        raise FitError("sign change in the fit window")
    X, Y = np.log(d), np.log(np.abs(v))
    if np.ptp(Y) == 0.0:
        alpha, intercept, r2 = 0.0, float(Y[0]), 1.0
    else:
        alpha, intercept = np.polyfit(X, Y, 1)
        resid = Y - (alpha * X + intercept)
        ss_tot = float(np.sum((Y - Y.mean()) ** 2))
        r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    alpha = float(alpha)
    return SingularityReport(
        alpha=alpha,
        coefficient=float(sign[0] * np.exp(intercept)),
        r_squared=float(r2),
        integrable=alpha > -1.0 + margin,
        margin=margin,
        window=(float(d.min()), float(d.max())),
        n=int(d.size),
        t0=float(t0),
    )
