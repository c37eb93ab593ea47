import os
import logging
from dataclasses import dataclass, field, asdict
from dotenv import load_dotenv, find_dotenv

from utils.errors import ConfigurationError, InvalidParameterError

# Try to find .env file in parent directories if not in current directory
dotenv_path = find_dotenv(usecwd=True)
if dotenv_path:
    logging.debug(f"Found .env file at: {dotenv_path}")
    load_dotenv(dotenv_path)
else:
    load_dotenv()

VERSION = "0.1.0"

ALGORITHMS = ("optimistic", "prudent")
ENGINES = ("tree", "urn")
VARIANTS = ("CT", "DT")
FORMATS = ("csv", "json")


class Config:
    OUTPUT_DIR = os.getenv("BTREE_URN_OUTPUT_DIR", ".")
    LOG_LEVEL = os.getenv("BTREE_URN_LOG_LEVEL", "INFO")
    DEFAULT_SEED = os.getenv("BTREE_URN_DEFAULT_SEED", "20240601")
    WORKERS = os.getenv("BTREE_URN_WORKERS", "1")
    NODE_BUDGET = os.getenv("BTREE_URN_NODE_BUDGET", str(2 ** 22))
    W2_SUBSAMPLE = os.getenv("BTREE_URN_W2_SUBSAMPLE", "500")
    EXP_C_FACTOR = os.getenv("BTREE_URN_EXP_C_FACTOR", "100")
    EXP_EPS = os.getenv("BTREE_URN_EXP_EPS", "0.01")

    @staticmethod
    def validate():
        problems = []
        if Config.LOG_LEVEL.upper() not in logging.getLevelNamesMapping():
            problems.append(f"BTREE_URN_LOG_LEVEL={Config.LOG_LEVEL}")
        for name in ("DEFAULT_SEED", "WORKERS", "NODE_BUDGET", "W2_SUBSAMPLE"):
            value = getattr(Config, name)
            if not value.isdigit() or (name != "DEFAULT_SEED" and int(value) < 1):
                problems.append(f"BTREE_URN_{name}={value}")
        for name in ("EXP_C_FACTOR", "EXP_EPS"):
            value = getattr(Config, name)
            try:
                if float(value) <= 0:
                    problems.append(f"BTREE_URN_{name}={value}")
            except ValueError:
                problems.append(f"BTREE_URN_{name}={value}")

        if problems:
            raise ConfigurationError(f"Invalid environment variables: {', '.join(problems)}")
        return True

    @staticmethod
    def seed():
        return int(Config.DEFAULT_SEED)

    @staticmethod
    def workers():
        return int(Config.WORKERS)

    @staticmethod
    def node_budget():
        return int(Config.NODE_BUDGET)

    @staticmethod
    def w2_subsample():
        return min(int(Config.W2_SUBSAMPLE), 2000)

    @staticmethod
    def exp_moment_constants(m):
        """C and epsilon for the exponential-moment check of parameter m."""
        return float(Config.EXP_C_FACTOR) * m * m, float(Config.EXP_EPS)


def load_config():
    configs = Config()
    if configs.validate():
        return {
            "BTREE_URN_OUTPUT_DIR": configs.OUTPUT_DIR,
            "BTREE_URN_LOG_LEVEL": configs.LOG_LEVEL.upper(),
            "BTREE_URN_DEFAULT_SEED": configs.seed(),
            "BTREE_URN_WORKERS": configs.workers(),
            "BTREE_URN_NODE_BUDGET": configs.node_budget(),
            "BTREE_URN_W2_SUBSAMPLE": configs.w2_subsample(),
            "BTREE_URN_EXP_C_FACTOR": float(configs.EXP_C_FACTOR),
            "BTREE_URN_EXP_EPS": float(configs.EXP_EPS),
        }


@dataclass
class RunConfig:
    """Everything one CLI invocation needs; embedded in every output file."""
    subcommand: str
    m: int = 2
    algorithm: str = "optimistic"
    engine: str = "urn"
    n_steps: int = 1000
    seed: int = field(default_factory=Config.seed)
    stride: int = 1
    depth: int = 15
    samples: int = 1000
    pmax: int = 12
    iters: int = 50
    runs: int = 1
    variant: str = "CT"
    coords: str = "gaps"
    quantity: str = "sigma2"
    m_from: int = 2
    m_to: int = 300
    figure: str = ""
    scale: str = "desk"
    geometric: bool = False
    finite_depth: bool = False
    roots: bool = False
    workers: int = field(default_factory=Config.workers)
    output: str = ""
    format: str = "csv"

    def validate(self):
        problems = []
        if self.m < 2:
            problems.append(f"m must be >= 2 (got {self.m})")
        for name in ("stride", "samples", "pmax", "iters", "runs", "workers"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be positive (got {getattr(self, name)})")
        if self.depth < 0:
            problems.append(f"depth must be >= 0 (got {self.depth})")
        if self.n_steps < 0:
            problems.append(f"n must be >= 0 (got {self.n_steps})")
        if self.seed < 0:
            problems.append(f"seed must be >= 0 (got {self.seed})")
        if self.algorithm not in ALGORITHMS:
            problems.append(f"algorithm must be one of {ALGORITHMS}")
        if self.engine not in ENGINES:
            problems.append(f"engine must be one of {ENGINES}")
        if self.variant not in VARIANTS:
            problems.append(f"variant must be one of {VARIANTS}")
        if self.coords not in ("gaps", "fringe"):
            problems.append("coords must be gaps or fringe")
        if self.scale not in ("desk", "full"):
            problems.append("scale must be desk or full")
        if self.format not in FORMATS:
            problems.append(f"format must be one of {FORMATS}")
        if self.m_from < 2 or self.m_to < self.m_from:
            problems.append(f"invalid m range [{self.m_from}, {self.m_to}]")

        if problems:
            raise InvalidParameterError("; ".join(problems))
        return True

    def to_dict(self):
        return asdict(self)

    def output_path(self, default_name):
        """Explicit --output, else the default name inside Config.OUTPUT_DIR."""
        if self.output:
            return self.output
        return os.path.join(Config.OUTPUT_DIR, default_name)
