from dataclasses import dataclass

import numpy as np

from utils.errors import InvalidInputError


@dataclass(frozen=True)
class SpectrumBundle:
    """
    Roots of the characteristic polynomial of the optimistic urn of parameter m,
    with the eigen data attached to every root.

    Row i of ``eigvecs`` / ``eigforms`` belongs to ``roots[i]``.
    """
    m: int
    roots: np.ndarray
    lambda2: complex
    sigma2: float
    tau2: float
    sigma3: float
    eigvecs: np.ndarray
    eigforms: np.ndarray
    v1: np.ndarray
    residuals: float

    def root_index(self, lam, tol=1e-6):
        i = int(np.argmin(np.abs(self.roots - lam)))
        if abs(self.roots[i] - lam) > tol:
            raise InvalidInputError(f"{lam} is not a root of the m={self.m} polynomial")
        return i

    def eigvec(self, lam):
        return self.eigvecs[self.root_index(lam)]

    def eigform(self, lam):
        return self.eigforms[self.root_index(lam)]

    @property
    def u2(self):
        return self.eigform(self.lambda2)

    @property
    def v2(self):
        return self.eigvec(self.lambda2)

    def to_dict(self, include_roots=False):
        payload = {
            "m": self.m,
            "lambda2": {"re": float(self.lambda2.real), "im": float(self.lambda2.imag)},
            "sigma2": self.sigma2,
            "tau2": self.tau2,
            "sigma3": None if np.isnan(self.sigma3) else self.sigma3,
            "dual_residual": self.residuals,
            "v1": [float(x) for x in self.v1],
        }
        if include_roots:
            payload["roots"] = [{"re": float(z.real), "im": float(z.imag)} for z in self.roots]
        return payload
