"""
Ядро выборок без возвращения.

Каждая реплика получает свой поток случайных чисел, который зависит только от
(master seed, хэш метки слоя и группы, номер реплики). Поэтому гистограмма L' одинакова
при любом разбиении реплик по потокам.

Смешивание: splitmix64.
    stream_key   = mix64(master_seed XOR mix64(label_hash(слой + US + группа)))
    replica_seed = mix64(stream_key + (rep + 1) * GOLDEN)
    next()       : state += GOLDEN; return mix64(state)
"""
from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional

import numpy as np
from numba import njit

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, nogil=True)
def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def mix64(z: int) -> int:
    """Та же функция на питоновских int (для ключей потоков)"""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def label_hash(label: str) -> int:
    """Стабильный 64-битный хэш метки (hash() в питоне солится между запусками)"""
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream_key(seed: int, label: str, stratum: Optional[str] = None) -> int:
    # F и M одной группы, ячейки регионов - разные потоки
    tag = label if stratum is None else f"{stratum}\x1f{label}"
    return mix64((seed & MASK64) ^ mix64(label_hash(tag)))


@njit(cache=True, nogil=True)
def _distinct_histogram(codes, n_names, n, key, rep_start, rep_stop):
    """
    Гистограмма числа различных имён L' по репликам [rep_start, rep_stop).

    Частичный Фишер-Йейтс по массиву индексов; после реплики перестановки
    откатываются, так что каждая реплика стартует с тождественной перестановки.
    """
    pool = codes.shape[0]
    idx = np.arange(pool)
    swaps = np.empty(n, np.int64)
    mark = np.zeros(n_names, np.int64)
    hist = np.zeros(n + 1, np.int64)

    for rep in range(rep_start, rep_stop):
        state = _mix64(key + np.uint64(rep + 1) * _GOLDEN)
        stamp = rep + 1
        distinct = 0
        for i in range(n):
            state = state + _GOLDEN
            r = _mix64(state)
            span = pool - i
            j = i + np.int64(np.float64(r >> _S11) * _INV53 * span)
            if j >= pool:
                j = pool - 1
            swaps[i] = j
            t = idx[i]
            idx[i] = idx[j]
            idx[j] = t
            c = codes[idx[i]]
            if mark[c] != stamp:
                mark[c] = stamp
                distinct += 1
        for i in range(n - 1, -1, -1):
            j = swaps[i]
            t = idx[i]
            idx[i] = idx[j]
            idx[j] = t
        hist[distinct] += 1

    return hist


def _chunks(n_sims: int, workers: int) -> List[tuple]:
    workers = max(1, min(workers, n_sims))
    bounds = np.linspace(0, n_sims, workers + 1).astype(np.int64)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def distinct_histogram(
    codes: np.ndarray,
    n_names: int,
    n: int,
    key: int,
    n_sims: int,
    workers: int = 1,
) -> np.ndarray:
    """
    Считает гистограмму L' для n_sims реплик выборки размера n.

    Реплики делятся между потоками (ядро отпускает GIL), результат от числа
    потоков не зависит.
    """
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    ukey = np.uint64(key & MASK64)
    chunks = _chunks(n_sims, workers)

    if len(chunks) == 1:
        a, b = chunks[0]
        return _distinct_histogram(codes, n_names, n, ukey, a, b)

    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(lambda ab: _distinct_histogram(codes, n_names, n, ukey, ab[0], ab[1]), chunks))
    return np.sum(parts, axis=0)
