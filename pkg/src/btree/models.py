from dataclasses import dataclass

import numpy as np

from utils.errors import InvalidInputError

FRINGE = "L"
GAPS = "G"


@dataclass(frozen=True)
class CompositionVector:
    """Per-type counts, either of fringe nodes (kind "L") or of gaps (kind "G").

    Types are 1-based in every external format; ``counts[0]`` is type 1.
    """
    counts: tuple
    kind: str = GAPS

    def __post_init__(self):
        if self.kind not in (FRINGE, GAPS):
            raise InvalidInputError(f"Unknown composition kind: {self.kind}")
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    @property
    def dim(self):
        return len(self.counts)

    @property
    def total(self):
        return sum(self.counts)

    def as_array(self):
        return np.array(self.counts, dtype=np.int64)

    def to_gaps(self, rule):
        """G = P L (gap-node relation)."""
        if self.kind == GAPS:
            return self
        rule.check_dim(self)
        return CompositionVector(tuple(p * c for p, c in zip(rule.gap_diag, self.counts)), GAPS)

    def to_fringe(self, rule):
        if self.kind == FRINGE:
            return self
        rule.check_dim(self)
        for k, (p, c) in enumerate(zip(rule.gap_diag, self.counts), start=1):
            if c % p:
                raise InvalidInputError(f"Gap count {c} of type {k} is not a multiple of {p}")
        return CompositionVector(tuple(c // p for p, c in zip(rule.gap_diag, self.counts)), FRINGE)


@dataclass(frozen=True)
class ReplacementRule:
    m: int
    algorithm: str
    dim: int
    rows: tuple
    increments: tuple
    gap_diag: tuple
    balance: int

    def matrix(self):
        return np.array(self.rows, dtype=np.int64)

    def divisibility_moduli(self):
        """|a_kk| for every column k: the step by which type-k balls come and go."""
        return tuple(-self.rows[k][k] for k in range(self.dim))

    def check_dim(self, composition):
        if composition.dim != self.dim:
            raise InvalidInputError(
                f"Composition has dimension {composition.dim}, rule expects {self.dim}")

    def to_dict(self):
        return {
            "m": self.m,
            "algorithm": self.algorithm,
            "dim": self.dim,
            "rows": [list(row) for row in self.rows],
            "increments": [list(w) for w in self.increments],
            "gap_diag": list(self.gap_diag),
            "balance": self.balance,
        }


class Node:
    __slots__ = ("keys", "children", "parent", "kind", "slot")

    def __init__(self, keys=None, children=None, parent=None):
        self.keys = list(keys or [])
        self.children = list(children or [])
        self.parent = parent
        # fringe type while registered, else None
        self.kind = None
        self.slot = -1

    @property
    def is_fringe(self):
        return not self.children
