import hashlib
import json
import logging
import os
import sys
from enum import Enum
from typing import Any, Dict, List, Union

log = logging.getLogger(__name__)

# fmt: off
if sys.version_info >= (3, 12):
    from typing import override
else:
    def override(func):  # noqa
        return func
# fmt: on


class TraceRatioError(Exception):
    """Base class of all expected errors raised by trace_ratio"""


class DimensionError(TraceRatioError, ValueError):
    """Raised on shape mismatches or subspace dimension out of range"""


class NotOrthonormalError(TraceRatioError, ValueError):
    """Raised when a matrix expected on the Stiefel manifold is not orthonormal"""


class ProblemError(TraceRatioError, ValueError):
    """Raised when a trace ratio problem violates its construction invariants"""


class DenominatorError(ProblemError):
    """Raised when tr(X'BX) vanishes, i.e. the rank assumption on B is violated"""


class NonFiniteError(TraceRatioError, ArithmeticError):
    """Raised when NaN or Inf shows up in the arithmetic"""


class BootstrapError(TraceRatioError):
    """Raised when the bootstrap phase cannot reach a nonnegative numerator"""


class EigensolverContractError(TraceRatioError):
    """Raised when a pluggable eigensolver fails to increase tr(X'EX)"""


class DatasetError(TraceRatioError):
    """Raised on malformed multi-view datasets"""


class SplitError(TraceRatioError, ValueError):
    """Raised when a dataset cannot be split into train and test sets"""


class FormatError(TraceRatioError):
    """Raised when a file does not follow the expected binary or text format"""


class NormMode(Enum):
    SPECTRAL = 2
    ONE = 1

    @classmethod
    def make(
        cls, val: Union[str, "NormMode", None], default: Union["NormMode", None] = None
    ) -> "NormMode":
        if isinstance(val, NormMode):
            return val
        if isinstance(val, str):
            val = val.lower()
            if val in ["2", "spectral", "two"]:
                return cls.SPECTRAL
            if val in ["1", "one", "one-norm"]:
                return cls.ONE
        if default is not None:
            return default
        raise ValueError(f"Unknown norm mode: {val}")

    def __str__(self) -> str:
        return "spectral" if self == NormMode.SPECTRAL else "one-norm"


class UpdateMode(Enum):
    JACOBI = "J"
    GAUSS_SEIDEL = "G"

    @classmethod
    def make(
        cls,
        val: Union[str, "UpdateMode", None],
        default: Union["UpdateMode", None] = None,
    ) -> "UpdateMode":
        if isinstance(val, UpdateMode):
            return val
        if isinstance(val, str):
            val = val.lower().replace("_", "-")
            if val in ["j", "jacobi"]:
                return cls.JACOBI
            if val in ["g", "gs", "gauss-seidel", "gaussseidel"]:
                return cls.GAUSS_SEIDEL
        if default is not None:
            return default
        raise ValueError(f"Unknown update mode: {val}")

    def __str__(self) -> str:
        return "jacobi" if self == UpdateMode.JACOBI else "gauss-seidel"


def theta_grid(step: float = 0.1) -> List[float]:
    """Return 0, step, ..., 1 rounded so that the values print cleanly"""
    count = int(round(1.0 / step))
    return [round(i * step, 10) for i in range(count + 1)]


def config_hash(config: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON form of a configuration dictionary"""
    text = json.dumps(config, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def expand_dir(dir: str) -> str:
    return os.path.realpath(os.path.expandvars(os.path.expanduser(dir)))
