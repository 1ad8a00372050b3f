"""Schedule-independent random streams.

Per-group draws use a counter-based construction: the ``j``-th variate of
group ``g`` under ``(seed, tag)`` is a SplitMix64 hash of those four integers,
so any subset of groups can be generated in any order with identical values.
Per-replication generators come from ``numpy.random.SeedSequence`` spawn keys.
"""

import numpy as np
from scipy.special import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(x):
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _key(seed, tag):
    base = _mix(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
    return _mix(base ^ np.uint64(tag & 0xFFFFFFFFFFFFFFFF))[0]


def group_uniforms(seed, groups, per_group, tag=0):
    """Open-interval uniforms of shape ``(len(groups), per_group)``."""
    groups = np.asarray(groups, dtype=np.uint64).reshape(-1, 1)
    j = np.arange(per_group, dtype=np.uint64).reshape(1, -1)
    key = _key(int(seed), int(tag))
    with np.errstate(over="ignore"):
        ctr = _mix(groups * np.uint64(0x100000000) + j) ^ key
    bits = _mix(ctr) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * 2.0**-53


def group_normals(seed, groups, per_group, tag=0):
    """Standard normals by inverse CDF of :func:`group_uniforms`."""
    return ndtri(group_uniforms(seed, groups, per_group, tag))


def rep_generator(seed, rep, *extra):
    """Independent ``Generator`` for replication ``rep`` of master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(rep), *map(int, extra))))
