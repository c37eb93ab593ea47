from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd


@dataclass
class WSampleSet:
    """Complex samples of a W-type limit law, with their provenance."""
    variant: str
    m: int
    lam: complex
    depth: int
    seed: int
    samples: np.ndarray
    anchor: complex = 0j
    truncation_error: Optional[float] = None
    summary: dict = field(init=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        self.summary = self.summarize()

    def summarize(self):
        x = self.samples
        mean = complex(x.mean())
        second = float(np.mean(np.abs(x) ** 2))
        return {
            "count": int(x.size),
            "mean": mean,
            "mean_stderr": float(np.std(x) / np.sqrt(x.size)),
            "second_abs_moment": second,
            "variance": second - abs(mean) ** 2,
        }

    def empirical_moment(self, p):
        """Sample mean of W^p and its standard error."""
        powers = self.samples ** p
        return complex(powers.mean()), float(np.std(powers) / np.sqrt(powers.size))

    def to_frame(self):
        return pd.DataFrame({"re": self.samples.real, "im": self.samples.imag})

    def metadata(self):
        summary = dict(self.summary)
        summary["mean"] = {"re": summary["mean"].real, "im": summary["mean"].imag}
        return {
            "variant": self.variant,
            "m": self.m,
            "lambda": {"re": self.lam.real, "im": self.lam.imag},
            "anchor": {"re": self.anchor.real, "im": self.anchor.imag},
            "depth": self.depth,
            "seed": self.seed,
            "truncation_error": self.truncation_error,
            "summary": summary,
        }


@dataclass
class MomentTable:
    """mu_p = E W^p for p = 0..pmax; ``depth`` is None for the limit law."""
    variant: str
    m: int
    lam: complex
    anchor: complex
    moments: np.ndarray
    depth: Optional[int] = None

    @property
    def pmax(self):
        return len(self.moments) - 1

    def to_frame(self):
        return pd.DataFrame({
            "p": np.arange(len(self.moments)),
            "re": self.moments.real,
            "im": self.moments.imag,
        })

    def to_records(self):
        return [{"p": int(p), "re": float(z.real), "im": float(z.imag)} for p, z in enumerate(self.moments)]
