import logging
import math

import numpy as np
import pandas as pd
from scipy.special import factorial, loggamma

from analysis.projection import expected_limit
from btree.rules import make_rule, btree_start
from spectral.eigen import clock_product, joint_beta_moment
from utils.config import Config, VARIANTS
from utils.errors import (
    InvalidParameterError, InvalidInputError, NonContractiveError, NumericFailureError,
)
from wlimit.models import MomentTable

DEGENERATE_TOL = 1e-10


def _check(variant, lam):
    if variant not in VARIANTS:
        raise InvalidParameterError(f"Unknown variant {variant!r}. Use one of {VARIANTS}")
    lam = complex(lam)
    if lam.real <= 0.5:
        raise NonContractiveError(f"Re(lambda) = {lam.real:.6f} <= 1/2")
    return lam


def _solvability(m, s):
    """E B^s and the coefficient 1 - 2 E B^s of the unknown moment."""
    weight = clock_product(m, s)
    coefficient = 1 - 2 * weight
    if abs(coefficient) < DEGENERATE_TOL:
        raise NumericFailureError(f"Degenerate moment coefficient at s={s} (m={m})")
    return weight, coefficient


def _pair_weight(variant, m, left, right):
    """E[B^left (1-B)^right] (DT) or E B^(left+right) (CT) for the two halves of a split."""
    if variant == "CT":
        return clock_product(m, left + right)
    return joint_beta_moment(m, left, right)


def contraction_factor(m, lam):
    """2 E|B^lam|^2 = 2 E B^(2 Re lam), the squared L2 Lipschitz constant of the smoothing map."""
    return float((2 * clock_product(m, 2 * complex(lam).real)).real)


def moments_W(variant, m, lam, anchor, pmax, depth=None):
    """
    Analytic moments mu_p = E W^p, p = 0..pmax, with mu_1 = anchor.

    For the limit law (depth None), mu_p (1 - 2 E B^(lam p)) equals the
    cross terms of the split; with a depth, the moments of the cascade
    Y_depth started at the anchor are returned instead.
    """
    lam = _check(variant, lam)
    anchor = complex(anchor)
    if pmax < 0:
        raise InvalidParameterError(f"pmax must be >= 0, got {pmax}")

    if depth is None:
        mu = np.zeros(pmax + 1, dtype=complex)
        mu[0] = 1
        if pmax >= 1:
            mu[1] = anchor
        for p in range(2, pmax + 1):
            weight, coefficient = _solvability(m, lam * p)
            cross = sum(
                math.comb(p, j) * _pair_weight(variant, m, lam * j, lam * (p - j)) * mu[j] * mu[p - j]
                for j in range(1, p)
            )
            mu[p] = cross / coefficient
    else:
        mu = anchor ** np.arange(pmax + 1)
        for _ in range(depth):
            mu = np.array([
                sum(
                    math.comb(p, j) * _pair_weight(variant, m, lam * j, lam * (p - j)) * mu[j] * mu[p - j]
                    for j in range(p + 1)
                )
                for p in range(pmax + 1)
            ], dtype=complex)
            # the level map fixes mass and mean
            mu[0] = 1
            if pmax >= 1:
                mu[1] = anchor

    return MomentTable(variant, m, lam, anchor, mu, depth)


def mixed_moments(variant, m, lam, anchor, order, depth=None):
    """
    E[W^a conj(W)^b] for a + b <= order, as an (order+1) x (order+1) array.

    Same recursion as ``moments_W`` with weights E B^(lam a + conj(lam) b);
    entries with a + b > order are left at zero.
    """
    lam = _check(variant, lam)
    anchor = complex(anchor)
    lam_bar = lam.conjugate()
    size = order + 1

    def split_sum(M, a, b, skip_ends):
        total = 0j
        for i in range(a + 1):
            for j in range(b + 1):
                if skip_ends and (i, j) in ((0, 0), (a, b)):
                    continue
                left = lam * i + lam_bar * j
                right = lam * (a - i) + lam_bar * (b - j)
                total += (math.comb(a, i) * math.comb(b, j) * _pair_weight(variant, m, left, right)
                          * M[i, j] * M[a - i, b - j])
        return total

    M = np.zeros((size, size), dtype=complex)
    if depth is None:
        M[0, 0] = 1
        if order >= 1:
            M[1, 0], M[0, 1] = anchor, anchor.conjugate()
        for t in range(2, order + 1):
            for a in range(t + 1):
                b = t - a
                _, coefficient = _solvability(m, lam * a + lam_bar * b)
                M[a, b] = split_sum(M, a, b, skip_ends=True) / coefficient
    else:
        for a in range(size):
            for b in range(size - a):
                M[a, b] = anchor ** a * anchor.conjugate() ** b
        for _ in range(depth):
            updated = np.zeros_like(M)
            for a in range(size):
                for b in range(size - a):
                    updated[a, b] = split_sum(M, a, b, skip_ends=False)
            updated[0, 0] = 1
            if order >= 1:
                updated[1, 0], updated[0, 1] = anchor, anchor.conjugate()
            M = updated
    return M


def cascade_variance(variant, m, lam, anchor, depth=None):
    """
    Var Y_depth of the cascade from Y_0 = anchor (Var W when depth is None).

    V_{n+1} = 2q V_n + |anchor|^2 (c - 1), q = E B^(2 Re lam), where
    c = E|sum of split weights|^2 is 4q (CT) or 2q + 2 Re E[B^lam (1-B)^conj(lam)] (DT).
    """
    lam = _check(variant, lam)
    q = float(clock_product(m, 2 * lam.real).real)
    if variant == "CT":
        c = 4 * q
    else:
        c = 2 * q + 2 * joint_beta_moment(m, lam, lam.conjugate()).real
    limit = abs(complex(anchor)) ** 2 * (c - 1) / (1 - 2 * q)
    if depth is None:
        return float(limit)
    return float(limit * (1 - (2 * q) ** depth))


def intermediate_tables(m, lam, anchor, pmax):
    """
    Per-type moments mu_p^(k) for k = 1..m (rows) and p = 0..pmax (columns).

    W_k = e^(-lam tau_k) W_{k+1} with tau_k ~ Exp(m+k-1), closed by
    W_m = e^(-lam tau_m) (W_1' + W_1''); row 0 is the CT law with mean ``anchor``.
    """
    lam = _check("CT", lam)
    first = moments_W("CT", m, lam, anchor, pmax).moments
    p = np.arange(pmax + 1)
    table = np.zeros((m, pmax + 1), dtype=complex)

    rate = 2 * m - 1
    for q in range(pmax + 1):
        table[m - 1, q] = rate / (rate + lam * q) * sum(
            math.comb(q, j) * first[j] * first[q - j] for j in range(q + 1))
    for k in range(m - 1, 0, -1):
        rate = m + k - 1
        table[k - 1] = rate / (rate + lam * p) * table[k]
    return table


def intermediate_moments(m, lam, anchor, p):
    """mu_p^(k) for k = 1..m."""
    if p < 0:
        raise InvalidParameterError(f"Moment order must be >= 0, got {p}")
    return intermediate_tables(m, lam, anchor, p)[:, p]


def laplace_residual(m, lam, pmax, anchor=None, tables=None):
    """
    Coefficient mismatch of the Laplace system, one value per equation k = 1..m.

    With phi_k(z) = sum_p mu_p^(k) z^p / p!, equation k reads
    ((m+k-1)/lam) phi_k + z phi_k' = ((m+k-1)/lam) phi_{k+1}, and phi_{m+1} = phi_1^2.
    Each residual is the largest relative mismatch over z^0..z^pmax.
    """
    lam = complex(lam)
    if tables is None:
        tables = intermediate_tables(m, lam, m if anchor is None else anchor, pmax)
    tables = np.asarray(tables, dtype=complex)
    if tables.ndim != 2 or tables.shape[0] != m or tables.shape[1] < pmax + 1:
        raise InvalidInputError(f"Need an {m} x {pmax + 1} table of per-type moments, got {tables.shape}")

    p = np.arange(pmax + 1)
    series = tables[:, :pmax + 1] / factorial(p)
    squared = np.convolve(series[0], series[0])[:pmax + 1]

    residuals = np.zeros(m)
    for k in range(1, m + 1):
        ratio = (m + k - 1) / lam
        lhs = ratio * series[k - 1] + p * series[k - 1]
        rhs = ratio * (series[k] if k < m else squared)
        scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), np.finfo(float).tiny)
        residuals[k - 1] = np.max(np.abs(lhs - rhs) / scale)
    return residuals


def _mean_and_stderr(values):
    return float(values.mean()), float(values.std() / np.sqrt(values.size))


def exp_moment_check(samples, t_grid, C=None, eps=None):
    """
    Empirical E exp(<t, W>) against exp(<t, anchor> + C |t|^2), and
    E exp(|t W|) against 4 exp(|anchor| |t| + 2 C |t|^2).

    <t, w> is the real pairing Re(conj(t) w). A row is a violation when either
    empirical mean exceeds its bound by more than 3 standard errors.

    Raises:
        InvalidInputError: for |t| > eps
    """
    default_c, default_eps = Config.exp_moment_constants(samples.m)
    C = default_c if C is None else C
    eps = default_eps if eps is None else eps

    rows = []
    for t in t_grid:
        t = complex(t)
        if abs(t) > eps:
            raise InvalidInputError(f"|t| = {abs(t):.4g} exceeds eps = {eps}")
        values = np.exp(np.real(np.conj(t) * samples.samples))
        empirical, stderr = _mean_and_stderr(values)
        bound = float(np.exp(np.real(np.conj(t) * samples.anchor) + C * abs(t) ** 2))

        abs_values = np.exp(np.abs(t * samples.samples))
        abs_empirical, abs_stderr = _mean_and_stderr(abs_values)
        abs_bound = float(4 * np.exp(abs(samples.anchor) * abs(t) + 2 * C * abs(t) ** 2))

        violation = empirical - 3 * stderr > bound or abs_empirical - 3 * abs_stderr > abs_bound
        rows.append((t.real, t.imag, empirical, stderr, bound, abs_empirical, abs_stderr, abs_bound, violation))

    table = pd.DataFrame(rows, columns=[
        "t_re", "t_im", "empirical", "stderr", "bound",
        "abs_empirical", "abs_stderr", "abs_bound", "violation",
    ])
    if table["violation"].any():
        logging.warning(f"Exponential moment bound exceeded at {int(table['violation'].sum())} grid points")
    return table


def default_anchor(variant, spectrum):
    """Mean of W for the B-tree start: m (CT) or m!/Gamma(m + lambda2) (DT)."""
    start = btree_start(make_rule(spectrum.m))
    if variant == "CT":
        return complex(start.as_array() @ spectrum.u2)
    return expected_limit(spectrum, start)


def martingale_connection_gap(spectrum, initial):
    """
    |E xi^lambda2 * E W^DT - u2(G0)| with xi ~ Gamma(K0).

    Both factors come from Gamma ratios; u2(G0) is the mean of W^CT.
    """
    k0 = initial.total
    lam = spectrum.lambda2
    xi_moment = complex(np.exp(loggamma(k0 + lam) - loggamma(k0)))
    ct_mean = complex(initial.as_array() @ spectrum.u2)
    return abs(xi_moment * expected_limit(spectrum, initial) - ct_mean)
