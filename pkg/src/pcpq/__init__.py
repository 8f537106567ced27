"""Projective-clustering product quantization for MIPS."""

from .core import ConfigError, DataError, Dataset, Method, PQConfig
from .evaluation import EvalReport, brute_force_topN, evaluate
from .ivf import IVFIndex, build_ivf, query_ivf, score_ivf_all
from .pq_index import PQIndex, build_pq_index, load_index, save_index, score_all

__all__ = ["ConfigError", "DataError", "Dataset", "EvalReport", "IVFIndex", "Method",
           "PQConfig", "PQIndex", "brute_force_topN", "build_ivf", "build_pq_index",
           "evaluate", "load_index", "query_ivf", "save_index", "score_all", "score_ivf_all"]
