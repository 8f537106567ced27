"""Shared types, configuration checks and seeded randomness."""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field

import numpy as np


class ConfigError(ValueError):
    """Raised when a PQConfig cannot be used with the given data."""


class DataError(ValueError):
    """Raised for malformed or non-finite input data."""


class Method(enum.IntEnum):
    KMEANS = 0
    ANISO = 1  # anisotropic k-clustering (ScaNN-style baseline)
    PCPQ = 2
    APCPQ = 3

    @property
    def projective(self) -> bool:
        return self in (Method.PCPQ, Method.APCPQ)

    @property
    def anisotropic(self) -> bool:
        return self in (Method.ANISO, Method.APCPQ)

    @classmethod
    def parse(cls, name: str | int | "Method") -> "Method":
        if isinstance(name, Method):
            return name
        if isinstance(name, (int, np.integer)):
            return cls(int(name))
        key = name.strip().lower()
        aliases = {"kmeans": cls.KMEANS, "kmeans++": cls.KMEANS,
                   "aniso": cls.ANISO, "scann": cls.ANISO,
                   "pcpq": cls.PCPQ, "apcpq": cls.APCPQ}
        if key not in aliases:
            raise ConfigError(f"unknown method {name!r}")
        return aliases[key]


@dataclass(frozen=True)
class Dataset:
    """Dense float32 point set, one row per point."""

    data: np.ndarray
    source: str = "memory"

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DataError(f"expected a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("dataset contains NaN or Inf entries")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class PQConfig:
    """Product-quantization build parameters.

    ``padded_d``, ``dbar`` and ``t`` are filled in by :func:`validate_config`.
    """

    m: int
    k: int = 16
    s: int = 8
    method: Method = Method.KMEANS
    quantize_scalars: bool = True
    t_frac: float = 0.2
    max_iters: int = 20
    tol: float = 1e-6
    seed: int = 0
    padded_d: int | None = None
    dbar: int | None = None
    t: float | None = None

    @property
    def resolved(self) -> bool:
        return self.padded_d is not None

    @property
    def effective_s(self) -> int:
        """Scalar codebook size actually stored.

        1 for the non-projective baselines (no scalar stage), 0 when projective
        scalars are kept as raw floats.
        """
        if not Method.parse(self.method).projective:
            return 1
        return self.s if self.quantize_scalars else 0

    @property
    def label(self) -> str:
        method = Method.parse(self.method)
        names = {Method.KMEANS: "k-means++", Method.ANISO: "ScaNN",
                 Method.PCPQ: "PCPQ", Method.APCPQ: "APCPQ"}
        name = names[method]
        if method.projective and self.quantize_scalars:
            name = "Q-" + name
        return name

    @property
    def bits_label(self) -> str:
        return f"{bit_width(self.k)}-bit"


@dataclass
class ClusterModel:
    """Result of one clustering run on a single section."""

    centers: np.ndarray
    assignment: np.ndarray
    alphas: np.ndarray
    loss_trace: list = field(default_factory=list)
    degenerate: bool = False

    @property
    def loss(self) -> float:
        return float(self.loss_trace[-1]) if self.loss_trace else 0.0


def bit_width(count: int) -> int:
    """ceil(log2(count)); 0 for a single symbol."""
    if count <= 1:
        return 0
    return int(count - 1).bit_length()


def padded_dim(d: int, m: int) -> int:
    return -(-d // m) * m


def pad_columns(X: np.ndarray, padded_d: int) -> np.ndarray:
    """Append zero columns up to ``padded_d``; returns X itself if already wide enough."""
    X = np.asarray(X)
    extra = padded_d - X.shape[-1]
    if extra < 0:
        raise ConfigError(f"cannot pad dimension {X.shape[-1]} down to {padded_d}")
    if extra == 0:
        return X
    widths = [(0, 0)] * (X.ndim - 1) + [(0, extra)]
    return np.pad(X, widths)


def validate_config(config: PQConfig, dims: tuple[int, int], mean_norm: float) -> PQConfig:
    """Check ``config`` against an (n, d) dataset and derive padded_d, dbar and t.

    ``mean_norm`` is the mean l2 norm of the dataset rows; t = t_frac * mean_norm.
    Calling again on the returned config yields an equal config.
    """
    n, d = (int(v) for v in dims)
    if n < 1 or d < 1:
        raise ConfigError(f"dataset dims must be positive, got {(n, d)}")
    method = Method.parse(config.method)
    if config.m < 1:
        raise ConfigError("m must be >= 1")
    if config.m > d:
        raise ConfigError(f"m={config.m} exceeds dimension d={d}")
    if config.k < 2:
        raise ConfigError("k must be >= 2")
    if config.k >= 2**32:
        raise ConfigError("k must be < 2**32")
    if config.s < 1:
        raise ConfigError("s must be >= 1")
    if config.s >= 2**16:
        raise ConfigError("s must be < 2**16")
    if not math.isfinite(config.t_frac) or config.t_frac < 0:
        raise ConfigError(f"t_frac must be finite and >= 0, got {config.t_frac}")
    if config.max_iters < 1:
        raise ConfigError("max_iters must be >= 1")
    if not config.tol > 0:
        raise ConfigError("tol must be > 0")
    if not math.isfinite(mean_norm) or mean_norm < 0:
        raise ConfigError(f"mean norm must be finite and >= 0, got {mean_norm}")
    pd = padded_dim(d, config.m)
    dbar = pd // config.m
    if method.anisotropic and dbar < 2:
        raise ConfigError("anisotropic methods need at least 2 coordinates per section")
    return dataclasses.replace(config, method=method, padded_d=pd, dbar=dbar,
                               t=float(config.t_frac * mean_norm))


def mean_row_norm(X: np.ndarray) -> float:
    return float(np.mean(np.linalg.norm(np.asarray(X, dtype=np.float64), axis=1)))


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent Philox stream for (seed, *keys); same inputs, same stream."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
