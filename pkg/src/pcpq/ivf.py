"""Coarse k-means partition with a residual PQ index per cluster."""

from __future__ import annotations

import dataclasses
import struct
from dataclasses import dataclass, field

import numpy as np

from .clustering import kmeans_pp
from .core import ConfigError, PQConfig, make_rng
from .pq_index import (BadMagicError, HeaderError, IndexFormatError, PQIndex,
                       TruncatedIndexError, UnsupportedVersionError, build_lookup_table,
                       build_pq_index,
                       deserialize, score_all, serialize)

MAGIC = b"PCPQIVF1"
RAW_MAGIC = b"PCPQRAW1"
VERSION = 1
_HEADER = struct.Struct("<4I")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


@dataclass
class RawResiduals:
    """Exact fallback for clusters too small to quantize."""

    residuals: np.ndarray

    @property
    def n(self) -> int:
        return self.residuals.shape[0]


@dataclass
class IVFIndex:
    coarse_centers: np.ndarray
    members: list
    sub_indexes: list
    pq_config: PQConfig | None = None
    seed: int = 0

    @property
    def kbar(self) -> int:
        return self.coarse_centers.shape[0]

    @property
    def d(self) -> int:
        return self.coarse_centers.shape[1]

    @property
    def n(self) -> int:
        return int(sum(len(mb) for mb in self.members))

    @property
    def fallback_clusters(self) -> list:
        return [c for c, sub in enumerate(self.sub_indexes) if isinstance(sub, RawResiduals)]


@dataclass
class QueryResult:
    ids: np.ndarray
    scores: np.ndarray
    short: bool = False
    probed: list = field(default_factory=list)


def default_kbar(n: int) -> int:
    """About 1000 points per coarse cluster."""
    return max(1, round(n / 1000))


def build_ivf(X, kbar: int, pq_config: PQConfig, seed: int = 0, **build_kwargs) -> IVFIndex:
    """k-means++ coarse partition (l2), then a PQ index over each cluster's residuals.

    Each cluster uses k = min(k, cluster size); clusters with fewer than two
    points keep their residuals verbatim.
    """
    X = np.asarray(X, dtype=np.float32)
    n = X.shape[0]
    if not 1 <= kbar <= n:
        raise ConfigError(f"kbar={kbar} must be between 1 and n={n}")
    coarse_seed = int(make_rng(seed, 0xC0A).integers(2**63))
    coarse = kmeans_pp(X.astype(np.float64), kbar, max_iters=pq_config.max_iters,
                       tol=pq_config.tol, seed=coarse_seed)
    centers = coarse.centers.astype(np.float32)
    labels = coarse.assignment
    members, subs = [], []
    for c in range(kbar):
        ids = np.flatnonzero(labels == c).astype(np.int64)
        members.append(ids)
        resid = X[ids] - centers[c]
        if ids.size < 2:
            subs.append(RawResiduals(resid.astype(np.float32)))
            continue
        sub_seed = int(make_rng(seed, 0x5B, c).integers(2**63))
        cfg = dataclasses.replace(pq_config, k=min(pq_config.k, ids.size), seed=sub_seed,
                                  padded_d=None, dbar=None, t=None)
        subs.append(build_pq_index(resid, cfg, **build_kwargs))
    return IVFIndex(coarse_centers=centers, members=members, sub_indexes=subs,
                    pq_config=pq_config, seed=seed)


def coarse_scores(q, index: IVFIndex) -> np.ndarray:
    q = np.asarray(q, dtype=np.float32).reshape(-1)
    return (index.coarse_centers.astype(np.float64) @ q.astype(np.float64)).astype(np.float32)


def _cluster_scores(q, index: IVFIndex, c: int, coarse: np.ndarray, counter=None) -> np.ndarray:
    sub = index.sub_indexes[c]
    q32 = np.asarray(q, dtype=np.float32).reshape(-1)
    if isinstance(sub, RawResiduals):
        resid = (sub.residuals.astype(np.float64) @ q32.astype(np.float64)).astype(np.float32)
    else:
        resid = score_all(q32, sub, build_lookup_table(q32, sub, counter), counter)
    return coarse[c] + resid


def score_ivf_all(q, index: IVFIndex, counter=None) -> np.ndarray:
    """Approximate scores for every point (every cluster probed), indexed by point id."""
    coarse = coarse_scores(q, index)
    out = np.empty(index.n, dtype=np.float32)
    for c, ids in enumerate(index.members):
        if ids.size:
            out[ids] = _cluster_scores(q, index, c, coarse, counter)
    return out


def probe_order(q, index: IVFIndex) -> np.ndarray:
    coarse = coarse_scores(q, index)
    return np.lexsort((np.arange(index.kbar), -coarse.astype(np.float64)))


def query_ivf(q, index: IVFIndex, k_probe: int, topN: int, counter=None) -> QueryResult:
    """Top-N points by approximate score among the k_probe best coarse clusters.

    Clusters are ranked by <q, center>; a point's score is <q, center> plus its
    residual score. Ties go to the lower id.
    """
    if not 1 <= k_probe <= index.kbar:
        raise ValueError(f"k_probe={k_probe} must be between 1 and kbar={index.kbar}")
    if topN < 1:
        raise ValueError("topN must be >= 1")
    coarse = coarse_scores(q, index)
    order = np.lexsort((np.arange(index.kbar), -coarse.astype(np.float64)))[:k_probe]
    ids_parts, score_parts = [], []
    for c in order:
        ids = index.members[c]
        if ids.size:
            ids_parts.append(ids)
            score_parts.append(_cluster_scores(q, index, int(c), coarse, counter))
    if ids_parts:
        ids = np.concatenate(ids_parts)
        scores = np.concatenate(score_parts)
    else:
        ids = np.zeros(0, dtype=np.int64)
        scores = np.zeros(0, dtype=np.float32)
    rank = np.lexsort((ids, -scores.astype(np.float64)))[:topN]
    return QueryResult(ids=ids[rank], scores=scores[rank], short=ids.size < topN,
                       probed=[int(c) for c in order])


def serialize_ivf(index: IVFIndex) -> bytes:
    kbar, d = index.coarse_centers.shape
    parts = [MAGIC, _HEADER.pack(VERSION, index.n, d, kbar),
             np.ascontiguousarray(index.coarse_centers, dtype="<f4").tobytes()]
    for ids in index.members:
        parts.append(_U32.pack(ids.size))
        parts.append(np.asarray(ids, dtype="<u4").tobytes())
    for sub in index.sub_indexes:
        if isinstance(sub, RawResiduals):
            r = np.ascontiguousarray(sub.residuals, dtype="<f4")
            blob = RAW_MAGIC + struct.pack("<2I", r.shape[0], r.shape[1]) + r.tobytes()
        else:
            blob = serialize(sub)
        parts.append(_U64.pack(len(blob)))
        parts.append(blob)
    return b"".join(parts)


def deserialize_ivf(data: bytes) -> IVFIndex:
    buf = memoryview(bytes(data))

    def take(pos, size, what):
        if pos + size > len(buf):
            raise TruncatedIndexError(f"truncated {what} at byte {pos}")
        return buf[pos:pos + size], pos + size

    if bytes(buf[:len(MAGIC)]) != MAGIC:
        raise BadMagicError("not a PCPQIVF1 index")
    raw, pos = take(len(MAGIC), _HEADER.size, "header")
    version, n, d, kbar = _HEADER.unpack(raw)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported IVF version {version}")
    if d < 1 or kbar < 1:
        raise HeaderError(f"bad IVF header d={d} kbar={kbar}")
    raw, pos = take(pos, 4 * kbar * d, "coarse centers")
    centers = np.frombuffer(raw, dtype="<f4").reshape(kbar, d).astype(np.float32)
    members = []
    for _ in range(kbar):
        raw, pos = take(pos, 4, "member count")
        (cnt,) = _U32.unpack(raw)
        raw, pos = take(pos, 4 * cnt, "member ids")
        members.append(np.frombuffer(raw, dtype="<u4").astype(np.int64))
    all_ids = np.concatenate(members) if members else np.zeros(0, dtype=np.int64)
    if all_ids.size != n or not np.array_equal(np.sort(all_ids), np.arange(n)):
        raise HeaderError("member lists do not partition the point ids")
    subs = []
    for c in range(kbar):
        raw, pos = take(pos, 8, "blob length")
        (size,) = _U64.unpack(raw)
        blob, pos = take(pos, size, "blob")
        blob = bytes(blob)
        if blob[:len(RAW_MAGIC)] == RAW_MAGIC:
            cnt, dim = struct.unpack_from("<2I", blob, len(RAW_MAGIC))
            body = blob[len(RAW_MAGIC) + 8:]
            if len(body) != 4 * cnt * dim:
                raise TruncatedIndexError("raw residual blob has the wrong size")
            sub = RawResiduals(np.frombuffer(body, dtype="<f4").reshape(cnt, dim).astype(np.float32))
        else:
            sub = deserialize(blob)
        if sub.n != members[c].size:
            raise HeaderError(f"cluster {c}: sub-index has {sub.n} points, "
                              f"member list has {members[c].size}")
        subs.append(sub)
    if pos != len(buf):
        raise TruncatedIndexError(f"{len(buf) - pos} trailing bytes")
    return IVFIndex(coarse_centers=centers, members=members, sub_indexes=subs)


def save_any(index, path) -> None:
    data = serialize_ivf(index) if isinstance(index, IVFIndex) else serialize(index)
    with open(path, "wb") as fh:
        fh.write(data)


def load_any(path) -> "IVFIndex | PQIndex":
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:len(MAGIC)] == MAGIC:
        return deserialize_ivf(data)
    if data[:8] == b"PCPQIDX1":
        return deserialize(data)
    raise BadMagicError(f"{path}: unrecognized index file")


__all__ = ["IVFIndex", "QueryResult", "RawResiduals", "build_ivf", "query_ivf",
           "score_ivf_all", "coarse_scores", "probe_order", "default_kbar",
           "serialize_ivf", "deserialize_ivf", "save_any", "load_any", "IndexFormatError"]
