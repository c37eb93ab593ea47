import logging

from btree.models import CompositionVector, ReplacementRule, FRINGE, GAPS
from utils.config import ALGORITHMS
from utils.errors import InvalidParameterError, InvalidInputError, InvariantViolation


def _increments(m, algorithm):
    """Fringe-node increment vectors w_k, one per type."""
    dim = m if algorithm == "optimistic" else m + 1
    increments = []
    for k in range(dim - 1):
        w = [0] * dim
        w[k] = -1
        w[k + 1] = 1
        increments.append(w)

    # A saturated node splits in two: two type-1 nodes (optimistic),
    # or one type-1 and one type-2 node (prudent).
    w = [0] * dim
    w[-1] = -1
    if algorithm == "optimistic":
        w[0] += 2
    else:
        w[0] += 1
        w[1] += 1
    increments.append(w)
    return increments


def make_rule(m, algorithm="optimistic"):
    """
    Build the replacement structure of the gap urn of a B-tree.

    Args:
        m: B-tree parameter, at least 2
        algorithm: "optimistic" (dimension m) or "prudent" (dimension m+1)

    Returns:
        ReplacementRule whose rows are P w_k, P = Diag(m, ..., m+dim-1)
    """
    if not isinstance(m, int) or m < 2:
        raise InvalidParameterError(f"B-tree parameter must be an integer >= 2, got {m!r}")
    if algorithm not in ALGORITHMS:
        raise InvalidParameterError(f"Unknown algorithm: {algorithm!r}. Use one of {ALGORITHMS}")

    increments = _increments(m, algorithm)
    dim = len(increments)
    gap_diag = tuple(m + k for k in range(dim))
    rows = tuple(tuple(p * x for p, x in zip(gap_diag, w)) for w in increments)

    rule = ReplacementRule(
        m=m,
        algorithm=algorithm,
        dim=dim,
        rows=rows,
        increments=tuple(tuple(w) for w in increments),
        gap_diag=gap_diag,
        balance=sum(rows[0]),
    )
    _check_rule(rule)
    logging.debug(f"Built {algorithm} rule for m={m} (dim={dim})")
    return rule


def _check_rule(rule):
    for i, row in enumerate(rule.rows):
        if sum(row) != rule.balance:
            raise InvariantViolation(f"Row {i + 1} sums to {sum(row)}, expected {rule.balance}")
        for j, a in enumerate(row):
            if i == j and a >= 0:
                raise InvariantViolation(f"Diagonal entry ({i + 1},{i + 1}) = {a} is not negative")
            if i != j and a < 0:
                raise InvariantViolation(f"Off-diagonal entry ({i + 1},{j + 1}) = {a} is negative")
    if rule.balance != 1:
        raise InvariantViolation(f"Balance is {rule.balance}, expected 1")

    for j, modulus in enumerate(rule.divisibility_moduli()):
        for i in range(rule.dim):
            if rule.rows[i][j] % modulus:
                raise InvariantViolation(
                    f"Column {j + 1}: entry {rule.rows[i][j]} is not a multiple of {modulus}")


def check_tenable(rule, initial):
    """
    Tenability of an initial gap composition: |a_kk| divides the k-th count.

    The column condition is already a construction invariant of the rule,
    so only the initial counts remain to be checked.
    """
    if initial.kind == FRINGE:
        initial = initial.to_gaps(rule)
    rule.check_dim(initial)
    if any(c < 0 for c in initial.counts):
        raise InvalidInputError(f"Negative entry in initial composition {initial.counts}")
    if initial.total == 0:
        raise InvalidInputError("Initial composition is empty")

    return all(c % modulus == 0 for c, modulus in zip(initial.counts, rule.divisibility_moduli()))


def btree_start(rule, kind=GAPS):
    """Composition of a tree whose root holds m-1 keys: L = e_1, G = P e_1."""
    counts = [0] * rule.dim
    counts[0] = 1
    start = CompositionVector(tuple(counts), FRINGE)
    return start if kind == FRINGE else start.to_gaps(rule)
