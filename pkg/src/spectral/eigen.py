import numpy as np
from scipy.special import loggamma

from btree.rules import make_rule
from utils.errors import InvalidInputError

ROOT_TOL = 1e-8


def _types(m):
    return np.arange(m, 2 * m, dtype=float)


def normalized_product(m, x):
    """prod_{k=m}^{2m-1} (x+k)/(k+1); equals 1 exactly at the roots."""
    ks = _types(m)
    return complex(np.prod((x + ks) / (ks + 1)))


def eigen_data(m, lam):
    """
    Eigenvector v(lam) and eigenform u(lam) of the optimistic urn, in closed form.

    v solves R^T v = lam v, u solves R u = lam u, and u(v) = 1.

    Args:
        m: B-tree parameter
        lam: root of the characteristic polynomial

    Returns:
        (v, u) as complex numpy vectors of length m
    """
    lam = complex(lam)
    if abs(normalized_product(m, lam) - 1) > ROOT_TOL:
        raise InvalidInputError(f"{lam} is not a root of the m={m} characteristic polynomial")

    i = np.arange(1, m, dtype=float)
    # running products of ratios, never factorials
    v_ratios = np.concatenate([[1.0], np.cumprod((m + i) / (m + i + lam))])
    scale = 1.0 / ((m + lam) * np.sum(1.0 / (lam + _types(m))))
    v = scale * v_ratios

    j = np.arange(0, m - 1, dtype=float)
    u = np.concatenate([[1.0], np.cumprod((lam + m + j) / (1 + m + j))]).astype(complex)
    return v, u


def transposed_eigen_residual(m, lam, v):
    """max |R^T v - lam v| for the optimistic rule."""
    rows = make_rule(m).matrix().astype(float)
    return float(np.max(np.abs(rows.T @ v - lam * v)))


def eigenform_residual(m, lam, u):
    rows = make_rule(m).matrix().astype(float)
    return float(np.max(np.abs(rows @ u - lam * u)))


def dual_matrix(eigvecs, eigforms):
    """Entry (i, j) is u(lam_i) applied to v(lam_j)."""
    return eigforms @ eigvecs.T


def dual_residual(bundle):
    """max |u(lam_i)(v(lam_j)) - delta_ij| over all root pairs of a SpectrumBundle."""
    return float(np.max(np.abs(dual_matrix(bundle.eigvecs, bundle.eigforms) - np.eye(bundle.m))))


def beta_moment(m, s):
    """
    2 E(B^s) for B ~ Beta(m, m), in product form prod (k+1)/(k+s), k = m..2m-1.

    Raises:
        InvalidInputError: at a pole s = -k, or when Re(s) <= -m (no moment)
    """
    s = complex(s)
    if s.imag == 0 and s.real in set(-_types(m)):
        raise InvalidInputError(f"s = {s.real:g} is a pole of the Beta({m},{m}) moment")
    if s.real <= -m:
        raise InvalidInputError(f"E B^s is infinite for Re(s) = {s.real} <= -{m}")
    return 1.0 / normalized_product(m, s)


def beta_moment_gamma(m, s):
    """2 E(B^s) as 2 Gamma(2m) Gamma(m+s) / (Gamma(m) Gamma(2m+s))."""
    s = complex(s)
    if s.real <= -m:
        raise InvalidInputError(f"E B^s is infinite for Re(s) = {s.real} <= -{m}")
    return complex(2 * np.exp(loggamma(2 * m) + loggamma(m + s) - loggamma(m) - loggamma(2 * m + s)))


def joint_beta_moment(m, a, b):
    """E[B^a (1-B)^b] for B ~ Beta(m, m)."""
    a, b = complex(a), complex(b)
    if a.real <= -m or b.real <= -m:
        raise InvalidInputError(f"Joint Beta moment diverges for a={a}, b={b}")
    if a == 0 and b == 0:
        return 1 + 0j
    log_value = (loggamma(2 * m) + loggamma(m + a) + loggamma(m + b)
                 - 2 * loggamma(m) - loggamma(2 * m + a + b))
    return complex(np.exp(log_value))


def clock_product(m, s):
    """
    prod_{k=1}^{m} (m+k-1)/(m+k-1+s): the transform E e^{-s(tau_1+...+tau_m)}
    of independent exponential clocks of rates m..2m-1, equal to E B^s.
    """
    if s == 0:
        return 1 + 0j
    rates = _types(m)
    return complex(np.prod(rates / (rates + s)))
