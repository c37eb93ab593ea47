import logging
import math
from functools import lru_cache

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from spectral.eigen import normalized_product, eigen_data, dual_matrix
from spectral.models import SpectrumBundle
from utils.errors import InvalidParameterError, InvalidInputError, NumericFailureError

NEWTON_TOL = 1e-13
BRANCH_RTOL = 1e-14
MAX_ITERATIONS = 200
DEDUP_TOL = 1e-6
ROOT_CHECK = 1e-10
LAMBDA2_START = 0.5 + 9.0j
RESEED_FACTORS = (1.0, 0.9, 1.1, 0.75, 1.3)


def _check_m(m):
    if not isinstance(m, (int, np.integer)) or m < 2:
        raise InvalidParameterError(f"B-tree parameter must be an integer >= 2, got {m!r}")
    return int(m)


def char_poly_eval(m, x):
    """
    Normalized characteristic polynomial prod_{k=m}^{2m-1} (x+k)/(k+1) - 1.

    Same roots as prod (X+k) - (2m)!/m!, without the overflow of the raw form.
    """
    _check_m(m)
    return normalized_product(m, x) - 1


def _log_target(m):
    return float(np.sum(np.log(np.arange(m + 1, 2 * m + 1, dtype=float))))


def _branch_newton(m, seeds, branches):
    """
    Newton on h_j(x) = sum_k Log(x+k) - log((2m)!/m!) - 2 pi i j, one branch per seed.

    Upper half-plane roots only: a step that would leave it is halved.
    """
    ks = np.arange(m, 2 * m, dtype=float)
    target = _log_target(m) + 2j * np.pi * branches
    x = np.array(seeds, dtype=complex)
    done = np.zeros(x.shape, dtype=bool)

    for iteration in range(MAX_ITERATIONS):
        shifted = x[:, None] + ks[None, :]
        h = np.sum(np.log(shifted), axis=1) - target
        # |target| grows like m log m, and so does the rounding floor of h
        done |= np.abs(h) < BRANCH_RTOL * np.maximum(1.0, np.abs(target))
        if done.all():
            break
        slope = np.sum(1.0 / shifted, axis=1)
        delta = np.where(done, 0, h / slope)
        proposal = x - delta
        for _ in range(60):
            bad = proposal.imag <= 0
            if not bad.any():
                break
            delta = np.where(bad, delta / 2, delta)
            proposal = x - delta
        x = proposal

    logging.debug(f"Branch Newton m={m}: {iteration + 1} iterations, {int(done.sum())}/{len(x)} converged")
    return x, done


def _branch_seed(m, j):
    """Roots of (x + (3m-1)/2)^m = (2m)!/m!, the equal-shift approximation."""
    return np.exp((_log_target(m) + 2j * np.pi * j) / m) - (3 * m - 1) / 2


def _negative_real_root(m):
    """Even m only: the real root to the left of every pole."""
    ks = np.arange(m, 2 * m, dtype=float)
    target = _log_target(m)

    def f(x):
        return float(np.sum(np.log(np.abs(x + ks)))) - target

    right = -(2 * m - 1) - 1e-12
    left = -(3 * m - 1) / 2 - 2 * math.exp(target / m)
    return brentq(f, left, right, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=MAX_ITERATIONS)


def find_roots(m):
    """
    All m roots, sorted by decreasing real part, positive imaginary part first.

    Raises:
        NumericFailureError: a branch did not converge or two roots coincide
    """
    m = _check_m(m)
    branches = np.arange(1, math.ceil(m / 2), dtype=float)

    upper = np.array([], dtype=complex)
    if branches.size:
        seeds = np.array([_branch_seed(m, j) for j in branches])
        seeds[0] = LAMBDA2_START
        upper, done = _branch_newton(m, seeds, branches)
        # LAMBDA2_START suits m near 60; failed branches get rescaled seeds
        seeds[0] = _branch_seed(m, 1)
        shift = (3 * m - 1) / 2
        for factor in RESEED_FACTORS:
            if done.all():
                break
            retry = ~done
            logging.warning(f"Reseeding {int(retry.sum())} branches for m={m} (factor {factor})")
            upper[retry], done[retry] = _branch_newton(
                m, (seeds[retry] + shift) * factor - shift, branches[retry])
        if not done.all():
            failed = [int(j) for j in branches[~done]]
            raise NumericFailureError(f"Newton did not converge for m={m} on branches {failed}")

    roots = [1.0 + 0j]
    roots.extend(upper)
    roots.extend(np.conj(upper))
    if m % 2 == 0:
        roots.append(complex(_negative_real_root(m)))
    roots = np.array(roots, dtype=complex)

    if roots.size != m:
        raise NumericFailureError(f"Found {roots.size} roots for m={m}, expected {m}")
    gaps = np.abs(roots[:, None] - roots[None, :]) + np.eye(m) * DEDUP_TOL * 2
    if (gaps < DEDUP_TOL).any():
        raise NumericFailureError(f"Two roots of the m={m} polynomial coincide")
    worst = max(abs(char_poly_eval(m, z)) for z in roots)
    if worst > ROOT_CHECK:
        raise NumericFailureError(f"Root check failed for m={m}: |chi| = {worst:.3g}")

    order = np.lexsort((-roots.imag, -roots.real))
    return roots[order]


def _third_real_part(roots):
    distinct = []
    for x in roots.real:
        if not distinct or abs(x - distinct[-1]) > DEDUP_TOL:
            distinct.append(float(x))
    return distinct[2] if len(distinct) > 2 else float("nan")


@lru_cache(maxsize=512)
def compute_spectrum(m):
    """
    Full spectral data of the optimistic gap urn of parameter m.

    Returns:
        SpectrumBundle with lambda2 the root of second largest real part and
        nonnegative imaginary part, sigma3 the third largest real part
    """
    roots = find_roots(m)
    lambda2 = complex(roots[1])

    pairs = [eigen_data(m, lam) for lam in roots]
    eigvecs = np.array([v for v, _ in pairs])
    eigforms = np.array([u for _, u in pairs])
    residual = float(np.max(np.abs(dual_matrix(eigvecs, eigforms) - np.eye(m))))
    if residual > 1e-8:
        logging.warning(f"Dual basis residual {residual:.2e} for m={m}")

    bundle = SpectrumBundle(
        m=m,
        roots=roots,
        lambda2=lambda2,
        sigma2=lambda2.real,
        tau2=lambda2.imag,
        sigma3=_third_real_part(roots),
        eigvecs=eigvecs,
        eigforms=eigforms,
        v1=eigvecs[0].real.copy(),
        residuals=residual,
    )
    for array in (bundle.roots, bundle.eigvecs, bundle.eigforms, bundle.v1):
        array.flags.writeable = False
    logging.info(f"Spectrum m={m}: lambda2 = {lambda2:.10f}, dual residual {residual:.2e}")
    return bundle


def companion_roots(m):
    """Eigenvalues of the companion matrix of the normalized polynomial (small m only)."""
    m = _check_m(m)
    coefficients = np.array([1.0])  # lowest degree first
    for k in range(m, 2 * m):
        coefficients = np.convolve(coefficients, [k / (k + 1), 1 / (k + 1)])
    coefficients[0] -= 1
    roots = np.roots(coefficients[::-1])
    return roots[np.lexsort((-roots.imag, -roots.real))]


def lambda2_newton(m, start=LAMBDA2_START, tol=NEWTON_TOL):
    """Plain Newton on the normalized polynomial from a single starting point."""
    m = _check_m(m)
    ks = np.arange(m, 2 * m, dtype=float)
    x = complex(start)
    for _ in range(MAX_ITERATIONS):
        product = normalized_product(m, x)
        value = product - 1
        if abs(value) < tol:
            return x
        x -= value / (product * np.sum(1.0 / (x + ks)))
    raise NumericFailureError(f"Newton from {start} did not converge for m={m}")


def expansion_sigma_tau(m):
    """First-order 1/m expansions of sigma2 and tau2."""
    if m < 2:
        raise InvalidParameterError(f"B-tree parameter must be >= 2, got {m}")
    log2 = math.log(2)
    sigma = 1 - (math.pi ** 2 / log2 ** 3) / m
    tau = 2 * math.pi / log2 + (math.pi / (2 * log2 ** 2)) / m
    return sigma, tau


def phase(m):
    return "small" if compute_spectrum(m).sigma2 < 0.5 else "large"


QUANTITIES = ("sigma2", "tau2", "sigma3", "sigma2_approx", "tau2_approx")


def spectral_table(quantity, m_from, m_to):
    """DataFrame with columns ``m`` and ``quantity`` for every m in [m_from, m_to]."""
    if quantity not in QUANTITIES:
        raise InvalidInputError(f"Unknown quantity {quantity!r}. Use one of {QUANTITIES}")
    if m_from < 2 or m_to < m_from:
        raise InvalidParameterError(f"Invalid range [{m_from}, {m_to}]")

    values = []
    for m in range(m_from, m_to + 1):
        if quantity.endswith("_approx"):
            sigma, tau = expansion_sigma_tau(m)
            values.append(sigma if quantity == "sigma2_approx" else tau)
        else:
            values.append(getattr(compute_spectrum(m), quantity))
    return pd.DataFrame({"m": range(m_from, m_to + 1), quantity: values})
