"""Counter-based uniform variates.

Every value is a pure function of ``(seed, counter)``: the splitmix64
finalizer is applied to the seed and then to the counter-shifted state.
This makes label fields reproducible, independent of evaluation order and
trivially parallel.
"""

import numpy as np
from numba import njit

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def _fmix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def hash_counter(seed, counter):
    """64-bit hash of a (seed, counter) pair; both are uint64."""
    key = _fmix(np.uint64(seed) ^ _GOLDEN)
    return _fmix(key + (np.uint64(counter) + _ONE) * _GOLDEN)


@njit(cache=True, inline="always")
def uniform_at(seed, counter):
    """Uniform double strictly inside (0, 1) for one counter value."""
    h = hash_counter(seed, counter)
    return (np.float64(h >> _S11) + 0.5) * _INV53


@njit(cache=True)
def _fill_uniform(seed, start, out):
    for i in range(out.shape[0]):
        out[i] = uniform_at(seed, start + np.uint64(i))


def as_seed(seed):
    """Normalize any Python integer to an unsigned 64-bit seed."""
    return np.uint64(int(seed) & _MASK64)


def uniform_block(seed, count, start=0):
    """Return ``count`` uniforms for counters ``start, ..., start+count-1``."""
    out = np.empty(int(count), dtype=np.float64)
    _fill_uniform(as_seed(seed), np.uint64(start), out)
    return out


def derive_seed(master, index):
    """Seed of replica ``index`` derived from a master seed."""
    return int(hash_counter(as_seed(master), np.uint64(int(index) & _MASK64)))
