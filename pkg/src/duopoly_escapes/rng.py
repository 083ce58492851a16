"""Counter-based random streams (Philox4x32-10).

Every Gaussian draw is a pure function of ``(seed, period, firm, stream)``,
so any implementation of the same algorithm reproduces a run exactly and
draws can be generated in any order or in parallel.

Layout:

* key    = (seed & 0xFFFFFFFF, seed >> 32)
* counter = (period & 0xFFFFFFFF, period >> 32, firm, stream)
* the four 32-bit output words (w0, w1, w2, w3) give two 53-bit uniforms
  ``u = ((w >> 5) * 2**26 + (w' >> 6) + 0.5) / 2**53`` from (w0, w1) and
  (w2, w3); both lie strictly inside (0, 1)
* one standard normal per counter by Box-Muller:
  ``z = sqrt(-2 ln u1) * cos(2 pi u2)``
"""

from __future__ import annotations

import numpy as np

ALGORITHM = "philox4x32-10/box-muller"

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)

# stream ids
SHOCKS = 0
SEED_FANOUT = 0xFFFF


def _key(seed: int) -> tuple[int, int]:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed & 0xFFFFFFFF, seed >> 32


def philox4x32(counter, key: tuple[int, int]) -> np.ndarray:
    """Raw Philox4x32-10 block function.

    ``counter`` is a sequence of four uint32-valued arrays (broadcastable);
    returns an array of shape ``(4, ...)`` of uint32 words.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK32 for c in counter)
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT32) ^ c1 ^ np.uint64(k0),
            p1 & _MASK32,
            (p0 >> _SHIFT32) ^ c3 ^ np.uint64(k1),
            p0 & _MASK32,
        )
        k0 = (k0 + _W0) & 0xFFFFFFFF
        k1 = (k1 + _W1) & 0xFFFFFFFF
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    return np.stack([c0, c1, c2, c3]).astype(np.uint32)


def _uniform53(hi: np.ndarray, lo: np.ndarray) -> np.ndarray:
    a = (hi.astype(np.uint64) >> np.uint64(5)).astype(np.float64)
    b = (lo.astype(np.uint64) >> np.uint64(6)).astype(np.float64)
    return (a * 67108864.0 + b + 0.5) / 9007199254740992.0


def standard_normals(seed: int, periods, firm, stream: int = SHOCKS) -> np.ndarray:
    """N(0,1) draws addressed by (seed, period, firm, stream); broadcasts."""
    periods = np.asarray(periods, dtype=np.uint64)
    firm = np.asarray(firm, dtype=np.uint64)
    words = philox4x32(
        (periods & _MASK32, periods >> _SHIFT32, firm, np.uint64(stream)),
        _key(seed),
    )
    u1 = _uniform53(words[0], words[1])
    u2 = _uniform53(words[2], words[3])
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def shock_block(seed: int, start: int, count: int, sigma: float) -> np.ndarray:
    """Shocks for periods ``start .. start+count-1`` as a ``(count, 2)`` array.

    Periods are 1-based in the simulator, so period t uses counter t.
    """
    t = np.arange(start, start + count, dtype=np.uint64)[:, None]
    firms = np.arange(2, dtype=np.uint64)[None, :]
    return sigma * standard_normals(seed, t, firms)


def derive_seeds(master_seed: int, n: int) -> list[int]:
    """Deterministic 64-bit child seeds from a master seed."""
    idx = np.arange(n, dtype=np.uint64)
    words = philox4x32(
        (idx, np.uint64(0), np.uint64(0), np.uint64(SEED_FANOUT)), _key(master_seed)
    ).astype(np.uint64)
    return [int(x) for x in (words[0] << _SHIFT32) | words[1]]
