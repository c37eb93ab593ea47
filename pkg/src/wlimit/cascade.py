import logging

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from utils.config import Config, VARIANTS
from utils.errors import InvalidParameterError, InvalidInputError, NonContractiveError, ResourceLimitError
from wlimit.models import WSampleSet
from wlimit.moments import cascade_variance, contraction_factor


def check_contractive(lam):
    if complex(lam).real <= 0.5:
        raise NonContractiveError(
            f"Re(lambda) = {complex(lam).real:.6f} <= 1/2: the smoothing map is not an L2 contraction")


def _check_variant(variant):
    if variant not in VARIANTS:
        raise InvalidParameterError(f"Unknown variant {variant!r}. Use one of {VARIANTS}")


def beta_weights(rng, m, size):
    """Beta(m, m) draws as G1 / (G1 + G2) with independent Gamma(m) variables."""
    g1 = rng.standard_gamma(m, size)
    g2 = rng.standard_gamma(m, size)
    return g1 / (g1 + g2)


def smooth(variant, lam, b, left, right):
    """One application of the smoothing map to paired values."""
    # B in (0,1): principal log is real, so B^lam has no branch ambiguity
    log_b = np.log(b)
    if variant == "CT":
        return np.exp(lam * log_b) * (left + right)
    return np.exp(lam * log_b) * left + np.exp(lam * np.log1p(-b)) * right


def cascade_sample(variant, m, lam, depth, count, seed, anchor=None, budget=None):
    """
    Sample Y_depth of the binary cascade started from Y_0 = anchor.

    CT: Y_{n+1} = B^lam (Y_n' + Y_n'');  DT: Y_{n+1} = B^lam Y_n' + (1-B)^lam Y_n''.

    Args:
        variant: "CT" or "DT"
        m: B-tree parameter (B ~ Beta(m, m))
        lam: complex exponent with Re(lam) > 1/2
        depth: number of cascade levels (0 returns the anchor)
        count: number of independent samples
        seed: master seed; chunk c uses stream (seed, c)
        anchor: Y_0, defaults to m
        budget: leaf values per chunk, defaults to Config.node_budget()

    Returns:
        WSampleSet
    """
    _check_variant(variant)
    lam = complex(lam)
    check_contractive(lam)
    if depth < 0 or count < 1:
        raise InvalidParameterError(f"Need depth >= 0 and count >= 1, got depth={depth}, count={count}")
    anchor = complex(m if anchor is None else anchor)
    budget = budget or Config.node_budget()
    leaves = 2 ** depth
    if leaves > budget:
        raise ResourceLimitError(f"Depth {depth} needs {leaves} leaves per sample, budget is {budget}")

    per_chunk = max(1, budget // leaves)
    samples = np.empty(count, dtype=complex)
    for chunk, start in enumerate(range(0, count, per_chunk)):
        size = min(per_chunk, count - start)
        rng = np.random.default_rng([int(seed), chunk])
        values = np.full((size, leaves), anchor)
        while values.shape[1] > 1:
            b = beta_weights(rng, m, (size, values.shape[1] // 2))
            values = smooth(variant, lam, b, values[:, 0::2], values[:, 1::2])
        samples[start:start + size] = values[:, 0]
        logging.debug(f"Cascade chunk {chunk}: {start + size}/{count} samples")

    truncation = cascade_variance(variant, m, lam, anchor) * contraction_factor(m, lam) ** depth
    logging.info(f"Cascade {variant} m={m} depth={depth}: {count} samples")
    return WSampleSet(variant, m, lam, depth, seed, samples, anchor, float(truncation))


def wasserstein2(x, y):
    """Empirical 2-Wasserstein distance between equal-size point sets in the complex plane."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if x.shape != y.shape:
        raise InvalidInputError(f"Point sets differ in size: {x.size} vs {y.size}")
    cost = cdist(np.column_stack([x.real, x.imag]), np.column_stack([y.real, y.imag]), metric="sqeuclidean")
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(cost[rows, cols].mean()))


def fixpoint_iterate(variant, m, lam, anchor, n_samples, n_iters, seed, subsample=None, recenter=True):
    """
    Iterate the smoothing map on an empirical law, starting from the point mass at anchor.

    Each iteration draws fresh Beta weights and resampled pairs. The map
    preserves the mean in law; with ``recenter`` the sample is shifted back
    onto ``anchor`` so the resampling drift of the mean does not accumulate.

    Returns:
        (WSampleSet of the last iterate, array of W2 distances between consecutive iterates)
    """
    _check_variant(variant)
    lam = complex(lam)
    check_contractive(lam)
    anchor = complex(anchor)
    subsample = min(subsample or Config.w2_subsample(), n_samples)
    rng = np.random.default_rng(int(seed))

    current = np.full(n_samples, anchor)
    trace = []
    for iteration in range(n_iters):
        b = beta_weights(rng, m, n_samples)
        left = current[rng.integers(n_samples, size=n_samples)]
        right = current[rng.integers(n_samples, size=n_samples)]
        updated = smooth(variant, lam, b, left, right)
        if recenter:
            updated += anchor - updated.mean()
        trace.append(wasserstein2(updated[:subsample], current[:subsample]))
        current = updated
        logging.debug(f"Fixpoint iteration {iteration + 1}: W2 = {trace[-1]:.6g}")

    logging.info(f"Fixpoint {variant} m={m}: {n_iters} iterations, last W2 step {trace[-1] if trace else 0.0:.4g}")
    return WSampleSet(variant, m, lam, n_iters, seed, current, anchor), np.array(trace)


def contraction_ratio(trace, burn_in=5):
    """Median ratio of consecutive distances after ``burn_in`` iterations."""
    trace = np.asarray(trace, dtype=float)
    tail = trace[burn_in:]
    if tail.size < 2:
        raise InvalidInputError(f"Need at least {burn_in + 2} distances, got {trace.size}")
    return float(np.median(tail[1:] / tail[:-1]))
