import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
from scipy import stats
from scipy.special import loggamma

from btree.models import GAPS
from spectral.models import SpectrumBundle
from urn.models import Trajectory
from utils.errors import InvalidInputError, PhaseMismatchError

MIN_GAUSSIAN_SAMPLES = 500
GAUSSIAN_SE_THRESHOLD = 4.0


@dataclass
class ProjectionSeries:
    """W_n = u2(G_n) n^(-lambda2) and the drift error along one trajectory (n >= 1)."""
    spectrum: SpectrumBundle
    steps: np.ndarray
    w: np.ndarray
    drift_error: np.ndarray
    trajectory: Optional[Trajectory] = None

    def to_frame(self):
        return pd.DataFrame({
            "n": self.steps,
            "re_w": self.w.real,
            "im_w": self.w.imag,
            "drift_err": self.drift_error,
        })


def _check_pairing(trajectory, spectrum):
    rule = trajectory.rule
    if rule.algorithm != "optimistic" or rule.m != spectrum.m:
        raise InvalidInputError(
            f"Trajectory of m={rule.m} {rule.algorithm} does not match the m={spectrum.m} spectrum")


def project_W(trajectory, spectrum):
    """
    Project a trajectory on the lambda2 eigenform.

    n^(-lambda2) is always exp(-lambda2 ln n), never a complex power of n.
    """
    _check_pairing(trajectory, spectrum)
    keep = trajectory.steps >= 1
    steps = trajectory.steps[keep]
    compositions = trajectory.compositions[keep].astype(float)

    w = (compositions @ spectrum.u2) * np.exp(-spectrum.lambda2 * np.log(steps))
    drift = np.max(np.abs(compositions / steps[:, None] - spectrum.v1[None, :]), axis=1)
    return ProjectionSeries(spectrum, steps, w, drift, trajectory)


def fit_cosine(log_n, x, tau):
    """
    Least squares x ~ a cos(tau log n) + b sin(tau log n).

    Returns:
        (rho, phi, residual) with x ~ rho cos(tau log n + phi) and the RMS
        misfit relative to rho
    """
    design = np.column_stack([np.cos(tau * log_n), np.sin(tau * log_n)])
    (a, b), *_ = np.linalg.lstsq(design, x, rcond=None)
    rho = math.hypot(a, b)
    phi = math.atan2(-b, a) % (2 * math.pi)
    misfit = x - design @ np.array([a, b])
    residual = float(np.sqrt(np.mean(misfit ** 2)) / rho) if rho > 0 else float("inf")
    return rho, phi, residual


def oscillation_fit(series):
    """
    Fit the large-phase spiral on the last decade of the series.

    The observed signal is x_n = 2 Re(u2(G_n)) / n^sigma2 = Re(2 W_n e^(i tau2 ln n)),
    so rho estimates 2|W| and phi estimates arg W.

    Returns:
        (rho, phi, residual)

    Raises:
        PhaseMismatchError: the spectrum is in the small phase (m <= 59)
    """
    spectrum = series.spectrum
    if spectrum.sigma2 <= 0.5:
        raise PhaseMismatchError(
            f"m={spectrum.m} is in the small phase (sigma2 = {spectrum.sigma2:.4f}); "
            "there is no oscillation to fit")

    final = int(series.steps[-1])
    if final < 100_000:
        logging.warning(f"Oscillation fit at n={final}; the remainder may still dominate")
    window = series.steps >= final / 10
    if window.sum() < 3:
        raise InvalidInputError("Fewer than 3 recorded points in the last decade; use a geometric schedule")

    log_n = np.log(series.steps[window])
    x = np.real(2 * series.w[window] * np.exp(1j * spectrum.tau2 * log_n))
    return fit_cosine(log_n, x, spectrum.tau2)


def gaussian_diagnostic(samples):
    """
    Skewness and excess kurtosis of ``samples`` against the normal null.

    Returns:
        (skewness, excess_kurtosis, passed) where passed means both lie
        within 4 standard errors of zero
    """
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < MIN_GAUSSIAN_SAMPLES:
        raise InvalidInputError(f"Need at least {MIN_GAUSSIAN_SAMPLES} samples, got {n}")

    skewness = float(stats.skew(x))
    kurtosis = float(stats.kurtosis(x))
    se_skew = math.sqrt(6 * n * (n - 1) / ((n - 2) * (n + 1) * (n + 3)))
    se_kurt = 2 * se_skew * math.sqrt((n * n - 1) / ((n - 3) * (n + 5)))
    passed = abs(skewness) < GAUSSIAN_SE_THRESHOLD * se_skew and abs(kurtosis) < GAUSSIAN_SE_THRESHOLD * se_kurt
    return skewness, kurtosis, passed


def _initial_gaps(spectrum, initial):
    if initial.kind != GAPS:
        raise InvalidInputError("Expected a composition in gap coordinates")
    if initial.dim != spectrum.m:
        raise InvalidInputError(f"Composition of dimension {initial.dim} for m={spectrum.m}")
    return initial.as_array().astype(float)


def expected_limit(spectrum, initial):
    """E W = Gamma(K0) / Gamma(K0 + lambda2) u2(G0)."""
    g0 = _initial_gaps(spectrum, initial)
    k0 = g0.sum()
    lam = spectrum.lambda2
    return complex(np.exp(loggamma(k0) - loggamma(k0 + lam)) * (g0 @ spectrum.u2))


def expected_projection(spectrum, initial, n):
    """
    Exact E W_n at step n >= 1.

    u2(G_n) Gamma(K0+n) / Gamma(K0+n+lambda2) is a martingale, so
    E u2(G_n) = u2(G0) Gamma(K0+n+lambda2) Gamma(K0) / (Gamma(K0+n) Gamma(K0+lambda2)).
    """
    if n < 1:
        raise InvalidInputError(f"W_n is defined for n >= 1, got {n}")
    g0 = _initial_gaps(spectrum, initial)
    k0 = g0.sum()
    lam = spectrum.lambda2
    log_growth = loggamma(k0 + n + lam) - loggamma(k0 + n) - lam * math.log(n)
    return complex(expected_limit(spectrum, initial) * np.exp(log_growth))


def scaled_fluctuation(trajectory, spectrum, k, divisor="sqrt"):
    """
    (G_n^(k) - n v1^(k)) divided by sqrt(n) (small phase) or n^sigma2 (large phase).

    Args:
        k: 1-based type
        divisor: "sqrt" or "sigma2"

    Returns:
        (steps, values) for n >= 1
    """
    _check_pairing(trajectory, spectrum)
    if not 1 <= k <= spectrum.m:
        raise InvalidInputError(f"Type {k} outside 1..{spectrum.m}")
    if divisor not in ("sqrt", "sigma2"):
        raise InvalidInputError(f"Unknown divisor {divisor!r}")

    keep = trajectory.steps >= 1
    steps = trajectory.steps[keep].astype(float)
    centered = trajectory.compositions[keep, k - 1] - steps * spectrum.v1[k - 1]
    exponent = 0.5 if divisor == "sqrt" else spectrum.sigma2
    return trajectory.steps[keep], centered / steps ** exponent


def cauchy_increments(series, ns):
    """|W_n - W_2n| for every n in ``ns``; both n and 2n must be recorded."""
    index = {int(n): i for i, n in enumerate(series.steps)}
    rows = []
    for n in ns:
        if int(n) not in index or 2 * int(n) not in index:
            raise InvalidInputError(f"Series does not record both n={n} and 2n={2 * n}")
        rows.append((int(n), abs(series.w[index[2 * int(n)]] - series.w[index[int(n)]])))
    return pd.DataFrame(rows, columns=["n", "increment"])
