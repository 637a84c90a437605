"""Deterministic 64-bit seed mixing.

Every random decision in the package derives its seed through
:func:`stable_hash`, a SplitMix64-style fold over integer parts.  The
constants are the published SplitMix64 constants, so two runs (or two
implementations) that mix the same parts obtain the same stream seeds
regardless of scheduling.
"""

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """SplitMix64 finalizer: avalanche a 64-bit integer."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def stable_hash(*parts: int) -> int:
    """Fold integers into one 64-bit seed.

    Order-sensitive: ``stable_hash(a, b) != stable_hash(b, a)`` in general.
    Negative integers are reduced modulo 2**64 first.
    """
    h = 0
    for p in parts:
        h = mix64((h + _GOLDEN + (int(p) & _MASK)) & _MASK)
    return h
