"""Batched numeric kernels for geometry and routing sweeps.

Hot loops (hop counts over millions of origin/target pairs, per-id level and
parent vectors) run as numba @njit kernels when numba is importable; a pure
numpy fallback covers the same surface. Set ``NBDTSIM_PURE_NUMPY=1`` to force
the fallback. Both paths must agree bit for bit; the benchmark in
``benchmarks/bench_kernels.py`` compares their throughput.
"""

from __future__ import annotations

import os

import numpy as np

from .geometry import relay_path

# Level tables cover every id < 65816 + 2**32; simulated overlays are far
# smaller, and the scalar functions in geometry.py have no such cap.
LEVEL_STARTS = np.array(
    [1, 2, 4, 8, 24, 280, 65816, 65816 + (1 << 32)], dtype=np.int64)
LEVEL_WIDTHS = np.array(
    [1, 2, 4, 16, 256, 65536, 1 << 32], dtype=np.int64)
MAX_ID = int(LEVEL_STARTS[-1]) - 1

FORCE_NUMPY = os.environ.get("NBDTSIM_PURE_NUMPY", "") not in ("", "0")


def _load_njit():
    try:
        from numba import njit
        return njit
    except ImportError:
        return None


njit = None if FORCE_NUMPY else _load_njit()
HAVE_NUMBA = njit is not None


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def level_of_batch_numpy(ids: np.ndarray) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    return np.searchsorted(LEVEL_STARTS, ids, side="right") - 1


def parent_of_batch_numpy(ids: np.ndarray) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    lv = level_of_batch_numpy(ids)
    lv1 = np.maximum(lv, 1)
    off = (ids - LEVEL_STARTS[lv1]) // LEVEL_WIDTHS[lv1 - 1]
    parents = LEVEL_STARTS[lv1 - 1] + off
    return np.where(lv <= 1, 1, parents)


def hop_counts_numpy(origins: np.ndarray, targets: np.ndarray, n: int) -> np.ndarray:
    """Relay-path lengths for each (origin, target) pair, fresh-message rule."""
    origins = np.asarray(origins, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    out = np.empty(origins.shape, dtype=np.int64)
    order = np.argsort(targets, kind="stable")
    st = targets[order]
    so = origins[order]
    res = np.empty(so.shape, dtype=np.int64)
    i = 0
    while i < len(st):
        j = i
        t = st[i]
        while j < len(st) and st[j] == t:
            j += 1
        seq = relay_path(int(t), n)
        k = len(seq)
        block = so[i:j]
        hops = np.full(j - i, k, dtype=np.int64)
        for idx, sid in enumerate(seq):
            hops[block == sid] = k - idx - 1
        hops[block == t] = 0
        res[i:j] = hops
        i = j
    out[order] = res
    return out


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _level_of_jit(ids, starts):  # pragma: no cover - exercised via wrapper
        out = np.empty(len(ids), dtype=np.int64)
        for p in range(len(ids)):
            l = 0
            while starts[l + 1] <= ids[p]:
                l += 1
            out[p] = l
        return out

    @njit(cache=True)
    def _parent_of_jit(ids, starts, widths):  # pragma: no cover
        out = np.empty(len(ids), dtype=np.int64)
        for p in range(len(ids)):
            v = ids[p]
            l = 0
            while starts[l + 1] <= v:
                l += 1
            if l <= 1:
                out[p] = 1
            else:
                out[p] = starts[l - 1] + (v - starts[l]) // widths[l - 1]
        return out

    @njit(cache=True)
    def _hop_counts_jit(origins, targets, n, starts, widths):  # pragma: no cover
        out = np.empty(len(origins), dtype=np.int64)
        seq = np.empty(32, dtype=np.int64)
        for p in range(len(origins)):
            o = origins[p]
            t = targets[p]
            if o == t:
                out[p] = 0
                continue
            lt = 0
            while starts[lt + 1] <= t:
                lt += 1
            seq[0] = starts[lt]
            k = 1
            if seq[0] != t:
                # collection span of t on its level
                if lt == 1:
                    lo, hi = 2, 3
                else:
                    par = starts[lt - 1] + (t - starts[lt]) // widths[lt - 1]
                    lo = starts[lt] + (par - starts[lt - 1]) * widths[lt - 1]
                    hi = lo + widths[lt - 1] - 1
                if hi > n:
                    hi = n
                if seq[k - 1] != lo:
                    seq[k] = lo
                    k += 1
                vlo = lo
                vsize = hi - lo + 1
                while seq[k - 1] != t:
                    lb = t - vlo + 1
                    ll = 0
                    while starts[ll + 1] <= lb:
                        ll += 1
                    if ll == 0:
                        break
                    if ll == 1:
                        clo, chi = 2, 3
                    else:
                        pr = starts[ll - 1] + (lb - starts[ll]) // widths[ll - 1]
                        clo = starts[ll] + (pr - starts[ll - 1]) * widths[ll - 1]
                        chi = clo + widths[ll - 1] - 1
                    if chi > vsize:
                        chi = vsize
                    if chi - clo + 1 <= 2:
                        seq[k] = t
                        k += 1
                        break
                    ns = vlo + starts[ll] - 1
                    if seq[k - 1] != ns:
                        seq[k] = ns
                        k += 1
                    if ns == t:
                        break
                    rep = vlo + clo - 1
                    if seq[k - 1] != rep:
                        seq[k] = rep
                        k += 1
                    vlo = rep
                    vsize = chi - clo + 1
            pos = -1
            for i in range(k):
                if seq[i] == o:
                    pos = i
                    break
            out[p] = k - pos - 1
        return out


# ---------------------------------------------------------------------------
# public surface
# ---------------------------------------------------------------------------

def level_of_batch(ids) -> np.ndarray:
    """Level index of each id."""
    ids = np.asarray(ids, dtype=np.int64)
    if HAVE_NUMBA:
        return _level_of_jit(ids, LEVEL_STARTS)
    return level_of_batch_numpy(ids)


def parent_of_batch(ids) -> np.ndarray:
    """Parent of each id (the root maps to itself's father convention: 1)."""
    ids = np.asarray(ids, dtype=np.int64)
    if HAVE_NUMBA:
        return _parent_of_jit(ids, LEVEL_STARTS, LEVEL_WIDTHS)
    return parent_of_batch_numpy(ids)


def hop_counts(origins, targets, n: int) -> np.ndarray:
    """Fresh-message routing hop count for each (origin, target) pair."""
    origins = np.asarray(origins, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    if origins.shape != targets.shape:
        raise ValueError("origins and targets must align")
    if n > MAX_ID:
        raise ValueError(f"batched kernels support n <= {MAX_ID}")
    if HAVE_NUMBA:
        return _hop_counts_jit(origins, targets, n, LEVEL_STARTS, LEVEL_WIDTHS)
    return hop_counts_numpy(origins, targets, n)


def all_pairs_max_hops(n: int, chunk: int = 512) -> tuple[int, np.ndarray]:
    """(max hops, histogram of hop counts) over every origin/target pair."""
    ids = np.arange(1, n + 1, dtype=np.int64)
    hist = np.zeros(64, dtype=np.int64)
    for lo in range(0, n, chunk):
        block = ids[lo:lo + chunk]
        origins = np.repeat(block, n)
        targets = np.tile(ids, len(block))
        h = hop_counts(origins, targets, n)
        hist += np.bincount(h, minlength=64)[:64]
    top = int(np.max(np.nonzero(hist)[0])) if hist.any() else 0
    return top, hist
