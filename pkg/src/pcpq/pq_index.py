"""Product-quantization index: build, lookup-table scoring and the PCPQIDX1 file format."""

from __future__ import annotations

import dataclasses
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .clustering import (anisotropic_k_clustering, aniso_projective_k_clustering,
                         kmeans_pp, point_weights, projective_k_clustering)
from .core import (ConfigError, Method, PQConfig, bit_width, make_rng, mean_row_norm,
                   pad_columns, validate_config)
from .scalar_quant import quantize_anisotropic, quantize_projective

MAGIC = b"PCPQIDX1"
VERSION = 1
_HEADER = struct.Struct("<8I")
_T = struct.Struct("<d")


class IndexFormatError(ValueError):
    code = 10


class BadMagicError(IndexFormatError):
    code = 11


class TruncatedIndexError(IndexFormatError):
    code = 12


class CodeRangeError(IndexFormatError):
    code = 13


class UnsupportedVersionError(IndexFormatError):
    code = 14


class HeaderError(IndexFormatError):
    code = 15


@dataclass
class OpCounter:
    """Arithmetic performed by one lookup-table build plus scan."""

    table_madds: int = 0
    scalar_mults: int = 0
    lookups: int = 0
    additions: int = 0
    scan_mults: int = 0

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class PQIndex:
    """Codes and codebooks for n points.

    ``scalar_codebooks`` has shape (m, s): a single 1.0 per section for the
    non-projective methods, and zero columns when projective scalars are kept
    unquantized in ``alphas``.
    """

    config: PQConfig
    d: int
    codebooks: np.ndarray
    center_codes: np.ndarray
    scalar_codebooks: np.ndarray
    scalar_codes: np.ndarray
    alphas: np.ndarray | None = None
    train_loss: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n(self) -> int:
        return self.center_codes.shape[0]

    @property
    def m(self) -> int:
        return self.config.m

    @property
    def k(self) -> int:
        return self.config.k

    @property
    def s(self) -> int:
        return self.scalar_codebooks.shape[1]

    @property
    def dbar(self) -> int:
        return self.config.dbar

    @property
    def method(self) -> Method:
        return Method.parse(self.config.method)

    @cached_property
    def _lut_codes(self) -> np.ndarray:
        s = max(self.s, 1)
        return np.ascontiguousarray(self.center_codes.astype(np.int32) * s
                                    + self.scalar_codes.astype(np.int32))

    def section_scalars(self) -> np.ndarray:
        """Per (point, section) scalar actually used for reconstruction."""
        if self.alphas is not None:
            return self.alphas.astype(np.float32)
        m = self.m
        return self.scalar_codebooks[np.arange(m)[None, :], self.scalar_codes]

    def reconstruct(self) -> np.ndarray:
        """Decoded points, n x padded_d, in float64."""
        m, dbar = self.m, self.dbar
        scal = self.section_scalars().astype(np.float64)
        out = np.empty((self.n, m * dbar))
        for j in range(m):
            out[:, j * dbar:(j + 1) * dbar] = (
                scal[:, j, None] * self.codebooks[j][self.center_codes[:, j]].astype(np.float64))
        return out


@dataclass
class LookupTable:
    eta: np.ndarray
    eta_lambda: np.ndarray | None


def split_sections(X, m: int) -> list:
    """m contiguous column blocks of X (views)."""
    X = np.asarray(X)
    if X.shape[1] % m:
        raise ConfigError(f"dimension {X.shape[1]} is not divisible by m={m}")
    dbar = X.shape[1] // m
    return [X[:, j * dbar:(j + 1) * dbar] for j in range(m)]


def section_seed(seed: int, section: int) -> int:
    return int(make_rng(seed, 0x5EC, section).integers(2**63))


def _fit_section(Xj, config: PQConfig, seed: int, limit: str, select: str, init: str):
    """Run the configured solver on one section; returns (model, weights or None)."""
    method = Method.parse(config.method)
    k = config.k
    common = dict(max_iters=config.max_iters, tol=config.tol, seed=seed, init=init)
    weights = None
    if method.anisotropic:
        # threshold scaled to this section's own mean norm
        t_sec = config.t_frac * float(np.mean(np.linalg.norm(Xj, axis=1)))
        weights = point_weights(Xj, t_sec, limit)
    if method is Method.KMEANS:
        model = kmeans_pp(Xj, k, **common)
    elif method is Method.ANISO:
        model = anisotropic_k_clustering(Xj, k, weights=weights, **common)
    elif method is Method.PCPQ:
        model = projective_k_clustering(Xj, k, **common)
    else:
        model = aniso_projective_k_clustering(Xj, k, weights=weights, select=select, **common)
    return model, weights


def _pad_codebook(values: np.ndarray, s: int) -> np.ndarray:
    out = np.empty(s, dtype=np.float32)
    v = np.asarray(values, dtype=np.float32)
    out[:v.size] = v
    out[v.size:] = v[-1]
    return out


def build_pq_index(X, config: PQConfig, *, limit: str = "arccos",
                   select: str = "loss", init: str = "kmeans++") -> PQIndex:
    """Cluster every section with the configured method and encode all points.

    ``limit`` and ``select`` are passed to the anisotropic solvers and ``init``
    ("kmeans++" or "normalized") to every solver.
    """
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 2:
        raise ConfigError("X must be 2-D")
    n, d = X.shape
    cfg = validate_config(config, (n, d), mean_row_norm(X))
    if n < cfg.k:
        raise ConfigError(f"need at least k={cfg.k} points, have {n}")
    method = Method.parse(cfg.method)
    m, k = cfg.m, cfg.k
    s_eff = cfg.effective_s
    Xp = pad_columns(X, cfg.padded_d).astype(np.float64)

    codebooks = np.empty((m, k, cfg.dbar), dtype=np.float32)
    center_codes = np.empty((n, m), dtype=np.int64)
    scalar_codebooks = np.ones((m, s_eff), dtype=np.float32)
    scalar_codes = np.zeros((n, m if s_eff else 0), dtype=np.int64)
    alphas = np.empty((n, m), dtype=np.float32) if s_eff == 0 else None
    train_loss = np.empty(m)

    for j, Xj in enumerate(split_sections(Xp, m)):
        seed = section_seed(cfg.seed, j)
        model, weights = _fit_section(Xj, cfg, seed, limit, select, init)
        codebooks[j] = model.centers.astype(np.float32)
        center_codes[:, j] = model.assignment
        train_loss[j] = model.loss
        if not method.projective:
            continue
        if s_eff == 0:
            alphas[:, j] = model.alphas
            continue
        if method is Method.PCPQ:
            q = quantize_projective(model.alphas, s_eff, seed=seed)
        else:
            q = quantize_anisotropic(Xj, codebooks[j].astype(np.float64), model.assignment,
                                     weights, s_eff, seed=seed, alphas=model.alphas)
        scalar_codebooks[j] = _pad_codebook(q.values, s_eff)
        scalar_codes[:, j] = q.codes

    return PQIndex(config=cfg, d=d, codebooks=codebooks, center_codes=center_codes,
                   scalar_codebooks=scalar_codebooks, scalar_codes=scalar_codes,
                   alphas=alphas, train_loss=train_loss)


def reconstruction_loss(index: PQIndex, X) -> float:
    Xp = pad_columns(np.asarray(X, dtype=np.float64), index.config.padded_d)
    return float(np.sum((Xp - index.reconstruct()) ** 2))


def _padded_query(q, index: PQIndex) -> np.ndarray:
    q = np.asarray(q, dtype=np.float32).reshape(-1)
    if q.size != index.d:
        raise ValueError(f"query has dimension {q.size}, index expects {index.d}")
    return pad_columns(q[None, :], index.config.padded_d)[0]


def build_lookup_table(q, index: PQIndex, counter: OpCounter | None = None) -> LookupTable:
    """Per-section query/center inner products and their products with the scalars."""
    qp = _padded_query(q, index)
    m, k, dbar = index.m, index.k, index.dbar
    qs = qp.reshape(m, dbar)
    eta = np.zeros((m, k), dtype=np.float32)
    # fixed accumulation order over the section's coordinates
    for t in range(dbar):
        eta += index.codebooks[:, :, t] * qs[:, t][:, None]
    if counter is not None:
        counter.table_madds += m * k * dbar
    s = index.s
    if s == 0:
        return LookupTable(eta=eta, eta_lambda=None)
    if not index.method.projective:
        return LookupTable(eta=eta, eta_lambda=eta[:, :, None])
    eta_lambda = eta[:, :, None] * index.scalar_codebooks[:, None, :]
    if counter is not None:
        counter.scalar_mults += m * k * s
    return LookupTable(eta=eta, eta_lambda=eta_lambda)


def score_all(q, index: PQIndex, table: LookupTable | None = None,
              counter: OpCounter | None = None) -> np.ndarray:
    """Approximate <q, x_i> for every indexed point from m table reads each."""
    if table is None:
        table = build_lookup_table(q, index, counter)
    n, m = index.n, index.m
    if table.eta_lambda is None:
        codes = np.ascontiguousarray(index.center_codes, dtype=np.int32)
        scores = kernels.adc_scan_scaled(np.ascontiguousarray(table.eta), codes,
                                         np.ascontiguousarray(index.alphas))
        if counter is not None:
            counter.scan_mults += n * m
    else:
        lut = np.ascontiguousarray(table.eta_lambda.reshape(m, -1))
        scores = kernels.adc_scan(lut, index._lut_codes)
    if counter is not None:
        counter.lookups += n * m
        counter.additions += n * max(m - 1, 0)
    return scores


def code_width(count: int) -> int:
    """Bytes per stored code for an alphabet of ``count`` symbols."""
    if count <= 256:
        return 1
    if count <= 65536:
        return 2
    return 4


def code_payload_bits(index: PQIndex) -> int:
    """Information content of the code arrays: n*m*(ceil(log2 k) + ceil(log2 s))."""
    per_section = bit_width(index.k) + (32 if index.s == 0 else bit_width(index.s))
    return index.n * index.m * per_section


def _row_dtype(m: int, k: int, s: int) -> np.dtype:
    fields = [("c", f"<u{code_width(k)}", (m,))]
    if s == 0:
        fields.append(("a", "<f4", (m,)))
    else:
        fields.append(("s", f"<u{code_width(s)}", (m,)))
    return np.dtype(fields)


def serialize(index: PQIndex) -> bytes:
    cfg = index.config
    n, m, k, s = index.n, index.m, index.k, index.s
    parts = [MAGIC,
             _HEADER.pack(VERSION, int(index.method), n, index.d, cfg.padded_d, m, k, s),
             _T.pack(float(cfg.t)),
             np.ascontiguousarray(index.codebooks, dtype="<f4").tobytes()]
    if s:
        parts.append(np.ascontiguousarray(index.scalar_codebooks, dtype="<f4").tobytes())
    rows = np.empty(n, dtype=_row_dtype(m, k, s))
    rows["c"] = index.center_codes
    if s == 0:
        rows["a"] = index.alphas
    else:
        rows["s"] = index.scalar_codes
    parts.append(rows.tobytes())
    return b"".join(parts)


def _take(buf: memoryview, pos: int, size: int, what: str):
    if pos + size > len(buf):
        raise TruncatedIndexError(f"truncated {what} at byte {pos}: need {size}, "
                                  f"have {len(buf) - pos}")
    return buf[pos:pos + size], pos + size


def deserialize(data: bytes) -> PQIndex:
    buf = memoryview(bytes(data))
    if len(buf) < len(MAGIC) or bytes(buf[:len(MAGIC)]) != MAGIC:
        raise BadMagicError("not a PCPQIDX1 index")
    pos = len(MAGIC)
    raw, pos = _take(buf, pos, _HEADER.size, "header")
    version, method, n, d, padded_d, m, k, s = _HEADER.unpack(raw)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported index version {version}")
    raw, pos = _take(buf, pos, _T.size, "header")
    (t,) = _T.unpack(raw)
    if method > 3 or m < 1 or k < 2 or d < 1 or padded_d < d or padded_d % m:
        raise HeaderError(f"inconsistent header fields: method={method} d={d} "
                          f"padded_d={padded_d} m={m} k={k}")
    if not np.isfinite(t):
        raise HeaderError("threshold t is not finite")
    method = Method(method)
    if not method.projective and s != 1:
        raise HeaderError(f"non-projective index must have s=1, got {s}")
    dbar = padded_d // m
    raw, pos = _take(buf, pos, 4 * m * k * dbar, "codebooks")
    codebooks = np.frombuffer(raw, dtype="<f4").reshape(m, k, dbar).astype(np.float32)
    if s:
        raw, pos = _take(buf, pos, 4 * m * s, "scalar codebooks")
        scalar_codebooks = np.frombuffer(raw, dtype="<f4").reshape(m, s).astype(np.float32)
    else:
        scalar_codebooks = np.ones((m, 0), dtype=np.float32)
    dt = _row_dtype(m, k, s)
    raw, pos = _take(buf, pos, dt.itemsize * n, "code rows")
    if pos != len(buf):
        raise TruncatedIndexError(f"{len(buf) - pos} trailing bytes after code rows")
    rows = np.frombuffer(raw, dtype=dt)
    center_codes = rows["c"].astype(np.int64).reshape(n, m)
    if n and center_codes.max() >= k:
        raise CodeRangeError(f"center code {center_codes.max()} out of range for k={k}")
    alphas = None
    if s == 0:
        alphas = rows["a"].astype(np.float32).reshape(n, m)
        scalar_codes = np.zeros((n, 0), dtype=np.int64)
    else:
        scalar_codes = rows["s"].astype(np.int64).reshape(n, m)
        if n and scalar_codes.max() >= s:
            raise CodeRangeError(f"scalar code {scalar_codes.max()} out of range for s={s}")
    cfg = PQConfig(m=m, k=k, s=max(s, 1), method=method,
                   quantize_scalars=(s != 0), padded_d=padded_d, dbar=dbar, t=t)
    return PQIndex(config=cfg, d=d, codebooks=codebooks, center_codes=center_codes,
                   scalar_codebooks=scalar_codebooks, scalar_codes=scalar_codes,
                   alphas=alphas)


def save_index(index: PQIndex, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(index))


def load_index(path) -> PQIndex:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
