"""Nearest-neighbour information estimators for short continuous streams.

Mutual information, conditional mutual information and total correlation
use the Kraskov-Stoegbauer-Grassberger construction (max-norm, first
algorithm); entropies use the Kozachenko-Leonenko estimator. Results are in
nats.

Context-level streams are short and often contain ties (for instance every
context that hard-sets a variable yields the same mean), so each dependence
estimator standardises its inputs and adds a deterministic jitter of size
1e-10. The jitter of a stream is seeded from its own bytes, which keeps the
estimate identical when arguments are swapped.
"""

from __future__ import annotations

import functools
import zlib
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma

from ..errors import InsufficientContexts

MIN_LENGTH = 8
DEFAULT_K = 3
JITTER = 1e-10


@dataclass(frozen=True)
class InfoEstimate:
    """An information quantity in nats.

    ``value`` is ``max(raw, 0)`` for dependence measures; entropies are
    reported unclamped (``value == raw``).
    """

    value: float
    raw: float
    estimator: str
    sample_count: int

    @classmethod
    def clamped(cls, raw: float, estimator: str, n: int) -> "InfoEstimate":
        raw = float(raw)
        return cls(max(raw, 0.0), raw, estimator, int(n))


def _as_2d(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError("streams must be 1-D or 2-D (samples x dims)")
    return arr


def _check_lengths(*streams, min_len: int = MIN_LENGTH) -> int:
    n = len(streams[0])
    if any(len(s) != n for s in streams):
        raise ValueError(f"streams have different lengths: {[len(s) for s in streams]}")
    if n < min_len:
        raise InsufficientContexts(min_len, n)
    return n


def _jitter(arr: np.ndarray, seed: int, scale: float = JITTER) -> np.ndarray:
    key = zlib.crc32(np.ascontiguousarray(arr).tobytes()) ^ (seed & 0xFFFFFFFF)
    rng = np.random.default_rng(key)
    return arr + scale * rng.standard_normal(arr.shape)


def _prepare(x, seed: int) -> np.ndarray:
    arr = _as_2d(x).copy()
    std = arr.std(axis=0)
    nz = std > 0
    arr[:, nz] = (arr[:, nz] - arr[:, nz].mean(axis=0)) / std[nz]
    return _jitter(arr, seed)


def _kth_radius(points: np.ndarray, k: int) -> np.ndarray:
    dist, _ = cKDTree(points).query(points, k=k + 1, p=np.inf)
    return dist[:, -1]


def _count_within(points: np.ndarray, radius: np.ndarray) -> np.ndarray:
    """Neighbours strictly closer than ``radius`` (self excluded)."""
    tree = cKDTree(points)
    r = np.nextafter(radius, 0)
    return tree.query_ball_point(points, r=r, p=np.inf, return_length=True) - 1


def _ksg_mi(x: np.ndarray, y: np.ndarray, k: int) -> float:
    n = len(x)
    eps = _kth_radius(np.hstack([x, y]), k)
    nx = _count_within(x, eps)
    ny = _count_within(y, eps)
    return digamma(k) + digamma(n) - np.mean(digamma(nx + 1) + digamma(ny + 1))


def _histogram_codes(x: np.ndarray, bins: int) -> np.ndarray:
    codes = np.zeros(len(x), dtype=np.int64)
    for col in x.T:
        lo, hi = col.min(), col.max()
        if hi > lo:
            b = np.minimum(((col - lo) / (hi - lo) * bins).astype(np.int64), bins - 1)
        else:
            b = np.zeros(len(col), dtype=np.int64)
        codes = codes * bins + b
    return codes


def _plugin_entropy(codes: np.ndarray) -> float:
    _, counts = np.unique(codes, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def _histogram_mi(x: np.ndarray, y: np.ndarray, bins: int) -> float:
    cx, cy = _histogram_codes(x, bins), _histogram_codes(y, bins)
    joint = cx * (bins ** y.shape[1]) + cy
    return _plugin_entropy(cx) + _plugin_entropy(cy) - _plugin_entropy(joint)


def _default_bins(n: int) -> int:
    return max(2, int(np.sqrt(n / 5)))


def mutual_information(
    xs,
    ys,
    *,
    estimator: str = "ksg",
    k: int = DEFAULT_K,
    bins: int | None = None,
    seed: int = 0,
    min_len: int = MIN_LENGTH,
) -> InfoEstimate:
    """I(X; Y) between two aligned streams (scalar or vector valued).

    ``estimator="ksg"`` (default) is the Kraskov estimator with ``k``
    neighbours; ``"histogram"`` is a plug-in estimate on equal-width bins,
    kept as a cross-check.
    """
    n = _check_lengths(xs, ys, min_len=min_len)
    if estimator == "ksg":
        x, y = _prepare(xs, seed), _prepare(ys, seed)
        return InfoEstimate.clamped(_ksg_mi(x, y, k), f"ksg(k={k})", n)
    if estimator == "histogram":
        bins = bins or _default_bins(n)
        raw = _histogram_mi(_as_2d(xs), _as_2d(ys), bins)
        return InfoEstimate.clamped(raw, f"histogram(bins={bins})", n)
    raise ValueError(f"unknown estimator {estimator!r}")


def conditional_mutual_information(
    xs,
    ys,
    zs,
    *,
    estimator: str = "ksg",
    k: int = DEFAULT_K,
    bins: int | None = None,
    seed: int = 0,
    min_len: int = MIN_LENGTH,
) -> InfoEstimate:
    """I(X; Y | Z), Frenzel-Pompe form of the KSG estimator."""
    n = _check_lengths(xs, ys, zs, min_len=min_len)
    if estimator == "histogram":
        bins = bins or _default_bins(n)
        x, y, z = (_histogram_codes(_as_2d(s), bins) for s in (xs, ys, zs))
        scale = bins ** (_as_2d(xs).shape[1] + _as_2d(ys).shape[1] + _as_2d(zs).shape[1])
        xz, yz = x * scale + z, y * scale + z
        xyz = (x * scale + y) * scale + z
        raw = (
            _plugin_entropy(xz) + _plugin_entropy(yz) - _plugin_entropy(xyz) - _plugin_entropy(z)
        )
        return InfoEstimate.clamped(raw, f"histogram(bins={bins})", n)
    if estimator != "ksg":
        raise ValueError(f"unknown estimator {estimator!r}")
    x, y, z = _prepare(xs, seed), _prepare(ys, seed), _prepare(zs, seed)
    eps = _kth_radius(np.hstack([x, y, z]), k)
    nxz = _count_within(np.hstack([x, z]), eps)
    nyz = _count_within(np.hstack([y, z]), eps)
    nz = _count_within(z, eps)
    raw = digamma(k) - np.mean(digamma(nxz + 1) + digamma(nyz + 1) - digamma(nz + 1))
    return InfoEstimate.clamped(raw, f"ksg(k={k})", n)


def total_correlation(streams, *, k: int = DEFAULT_K, seed: int = 0, min_len: int = MIN_LENGTH) -> InfoEstimate:
    """Sum of marginal entropies minus the joint entropy.

    Marginal entropies are evaluated at the joint k-NN radius, so for two
    streams this is exactly the KSG mutual information.
    """
    streams = list(streams)
    if len(streams) < 2:
        raise ValueError("total correlation needs at least two streams")
    n = _check_lengths(*streams, min_len=min_len)
    parts = [_prepare(s, seed) for s in streams]
    eps = _kth_radius(np.hstack(parts), k)
    counts = sum(digamma(_count_within(p, eps) + 1) for p in parts)
    raw = digamma(k) + (len(parts) - 1) * digamma(n) - np.mean(counts)
    return InfoEstimate.clamped(raw, f"ksg(k={k})", n)


def _kl_entropy(x: np.ndarray, k: int) -> float:
    n, d = x.shape
    eps = _kth_radius(x, k)
    return digamma(n) - digamma(k) + d * np.mean(np.log(2 * eps))


def entropy(stream, *, k: int = DEFAULT_K, seed: int = 0, min_len: int = MIN_LENGTH) -> InfoEstimate:
    """Differential entropy (Kozachenko-Leonenko, max-norm). Can be negative."""
    n = _check_lengths(stream, min_len=min_len)
    raw = _kl_entropy(_jitter(_as_2d(stream), seed), k)
    return InfoEstimate(float(raw), float(raw), f"kl(k={k})", n)


def conditional_entropy(stream, given, *, k: int = DEFAULT_K, seed: int = 0, min_len: int = MIN_LENGTH) -> InfoEstimate:
    """H(X | Y) = H(X, Y) - H(Y). Can be negative."""
    n = _check_lengths(stream, given, min_len=min_len)
    x, y = _as_2d(stream), _as_2d(given)
    # Independent jitter per column block keeps H(X, X) finite but very small.
    joint = np.hstack([_jitter(x, seed), _jitter(y, seed + 1)])
    raw = _kl_entropy(joint, k) - _kl_entropy(_jitter(y, seed + 1), k)
    return InfoEstimate(float(raw), float(raw), f"kl(k={k})", n)


@functools.lru_cache(maxsize=64)
def mi_null_quantile(n: int, q: float = 0.95, trials: int = 100, k: int = DEFAULT_K, seed: int = 0) -> float:
    """q-quantile of the clamped KSG estimate over independent Gaussian streams
    of length ``n``; the noise floor for comparisons between MI values."""
    rng = np.random.default_rng(seed)
    vals = [
        mutual_information(rng.standard_normal(n), rng.standard_normal(n), k=k, seed=t).value
        for t in range(trials)
    ]
    return float(np.quantile(vals, q))
