from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import pandas as pd

from btree.models import CompositionVector, ReplacementRule, GAPS
from utils.errors import InvalidInputError


@dataclass(frozen=True)
class UrnState:
    """Gap urn after ``n`` draws; ``gap_total`` is K_n = n + |G_0|."""
    rule: ReplacementRule
    composition: CompositionVector
    n: int = 0
    gap_total: int = field(default=None)

    def __post_init__(self):
        if self.composition.kind != GAPS:
            object.__setattr__(self, "composition", self.composition.to_gaps(self.rule))
        self.rule.check_dim(self.composition)
        if self.gap_total is None:
            object.__setattr__(self, "gap_total", self.composition.total)

    @property
    def counts(self):
        return self.composition.counts


@dataclass
class Trajectory:
    """
    Seeded record of one urn (or tree) run, in gap coordinates.

    ``steps`` and ``compositions`` are aligned arrays; ``jump_times`` holds
    the continuous-time instants tau_(n) at the same steps once embedded.
    """
    rule: ReplacementRule
    initial: CompositionVector
    seed: int
    index: int
    stride: int
    steps: np.ndarray
    compositions: np.ndarray
    jump_times: Optional[np.ndarray] = None

    @property
    def k0(self):
        return self.initial.total

    @property
    def final_step(self):
        return int(self.steps[-1])

    @property
    def final(self):
        return CompositionVector(tuple(self.compositions[-1]))

    def records(self):
        """(n, CompositionVector) pairs."""
        return [(int(n), CompositionVector(tuple(g))) for n, g in zip(self.steps, self.compositions)]

    def with_jump_times(self, jump_times):
        jump_times = np.asarray(jump_times, dtype=float)
        if jump_times.shape != self.steps.shape:
            raise InvalidInputError(
                f"Got {jump_times.shape[0]} jump times for {self.steps.shape[0]} records")
        return replace(self, jump_times=jump_times)

    def fringe_compositions(self):
        return self.compositions // np.array(self.rule.gap_diag, dtype=np.int64)

    def to_frame(self, coords="gaps"):
        """DataFrame ``n,g1..gdim`` (or ``n,l1..ldim`` for fringe coordinates)."""
        if coords == "gaps":
            values, prefix = self.compositions, "g"
        elif coords == "fringe":
            values, prefix = self.fringe_compositions(), "l"
        else:
            raise InvalidInputError(f"Unknown coordinates: {coords!r}")

        df = pd.DataFrame(values, columns=[f"{prefix}{k}" for k in range(1, self.rule.dim + 1)])
        df.insert(0, "n", self.steps)
        if self.jump_times is not None:
            df["tau"] = self.jump_times
        return df
