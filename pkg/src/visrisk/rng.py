"""Portable deterministic randomness for split plans and seed derivation.

The evaluation harness draws one random permutation per run and must be
reproducible byte-for-byte from a single master seed, with runs independent
of each other so they can execute on any number of worker threads. Rather
than depending on a particular numpy bit-stream, the permutations are built
from the SplitMix64 mixing function with a fixed, documented constant set,
so an independent implementation can replay the exact same split sequences.

Derivation rule (all arithmetic mod 2**64):

    seed_i = mix64(parent_seed + (i + 1) * GOLDEN)

where ``GOLDEN = 0x9E3779B97F4A7C15`` and ``mix64`` is the SplitMix64
finalizer (xorshift-multiply with constants ``0xBF58476D1CE4E5B9`` and
``0x94D049BB133111EB``). A stream seeded with ``s`` emits
``mix64(s + GOLDEN), mix64(s + 2*GOLDEN), ...``. Bounded draws use plain
modulo rejection: a 64-bit word ``x`` is rejected while
``x >= 2**64 - (2**64 % n)``, then ``x % n`` is returned. Permutations use
the descending Fisher-Yates shuffle (``i = n-1 .. 1``, swap with
``j = randbelow(i + 1)``).
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB


def mix64(x: int) -> int:
    """SplitMix64 finalizer: scrambles a 64-bit word."""
    x &= _MASK64
    x = ((x ^ (x >> 30)) * _MIX_A) & _MASK64
    x = ((x ^ (x >> 27)) * _MIX_B) & _MASK64
    return x ^ (x >> 31)


def derive_seed(parent_seed: int, index: int) -> int:
    """Seed for the ``index``-th child stream of ``parent_seed``.

    Children of one parent are mutually independent streams; nesting
    ``derive_seed(derive_seed(s, a), b)`` yields hierarchical substreams.
    """
    if index < 0:
        raise ValueError(f"stream index must be >= 0, got {index}")
    return mix64((parent_seed + (index + 1) * GOLDEN) & _MASK64)


class SplitMix64:
    """Minimal SplitMix64 stream with bounded draws and shuffling."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + GOLDEN) & _MASK64
        return mix64(self._state)

    def randbelow(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` via modulo rejection (no bias)."""
        if n <= 0:
            raise ValueError(f"randbelow requires n >= 1, got {n}")
        threshold = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < threshold:
                return x % n

    def permutation(self, n: int) -> list[int]:
        """Uniform random permutation of ``range(n)`` (Fisher-Yates)."""
        items = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]
        return items
