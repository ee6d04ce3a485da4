"""Counter-based 64-bit random streams.

Every random quantity in this package is a pure function of a 64-bit key.
Keys are derived by hashing integer tuples (splitmix64 finalizer chain), and
a key seeds a sequential splitmix64 stream.  The compiled engine reimplements
the same arithmetic on machine uint64; ``tests/test_engine.py`` pins bitwise
agreement between the two.

All functions here work on plain Python ints masked to 64 bits, so they are
exact and warning-free regardless of numpy version.
"""

from __future__ import annotations

import math

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
MIX_A = 0xBF58476D1CE4E5B9
MIX_B = 0x94D049BB133111EB

# 2^-53; uniforms are (x >> 11) * U53, giving the closed-open unit interval.
U53 = 1.0 / (1 << 53)

# Switch point between Knuth inversion and PTRS rejection for Poisson draws.
POISSON_PTRS_CUT = 10.0


def fmix64(z: int) -> int:
    """splitmix64 finalizer: a bijective 64-bit scrambler."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX_A) & MASK64
    z = ((z ^ (z >> 27)) * MIX_B) & MASK64
    return z ^ (z >> 31)


def mix_key(seed: int, a: int = 0, b: int = 0) -> int:
    """Derive a 64-bit stream key from (seed, a, b).

    This is the published mixing function used everywhere a key is derived
    from indices: driving-measure cells (seed, time-cell, mark-strip),
    replication seeds (base seed, horizon index, replication index) and
    discrete-chain steps (rep seed, step index, 0).  Negative indices enter
    as their two's complement.
    """
    h = fmix64((seed & MASK64) + GOLDEN)
    h = fmix64(h ^ ((a & MASK64) * MIX_A & MASK64))
    h = fmix64(h ^ ((b & MASK64) * MIX_B & MASK64))
    return h


def sm_next(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (new state, 64-bit output)."""
    state = (state + GOLDEN) & MASK64
    return state, fmix64(state)


def unit(x: int) -> float:
    """Map a 64-bit word to a uniform in [0, 1)."""
    return (x >> 11) * U53


class Stream:
    """Sequential draw helper over a splitmix64 state.

    The draw sequence (and hence every derived value) is a pure function of
    the construction key.
    """

    __slots__ = ("state",)

    def __init__(self, key: int):
        self.state = key & MASK64

    def u64(self) -> int:
        self.state, x = sm_next(self.state)
        return x

    def uniform(self) -> float:
        return unit(self.u64())

    def poisson(self, mean: float) -> int:
        if mean < POISSON_PTRS_CUT:
            return self._poisson_inv(mean)
        return self._poisson_ptrs(mean)

    def _poisson_inv(self, mean: float) -> int:
        if mean <= 0.0:
            return 0
        limit = math.exp(-mean)
        k = 0
        prod = self.uniform()
        while prod > limit:
            prod *= self.uniform()
            k += 1
        return k

    def _poisson_ptrs(self, mean: float) -> int:
        # Hoermann's transformed rejection with squeeze (PTRS), valid for
        # mean >= 10.  Consumes a variable number of uniforms.
        log_mean = math.log(mean)
        b = 0.931 + 2.53 * math.sqrt(mean)
        a = -0.059 + 0.02483 * b
        inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
        v_r = 0.9277 - 3.6224 / (b - 2.0)
        while True:
            u = self.uniform() - 0.5
            v = self.uniform()
            us = 0.5 - abs(u)
            k = math.floor((2.0 * a / us + b) * u + mean + 0.43)
            if us >= 0.07 and v <= v_r:
                return int(k)
            if k < 0 or (us < 0.013 and v > us):
                continue
            lhs = math.log(v * inv_alpha / (a / (us * us) + b))
            rhs = k * log_mean - mean - math.lgamma(k + 1.0)
            if lhs <= rhs:
                return int(k)
