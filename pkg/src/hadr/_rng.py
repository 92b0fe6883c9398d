"""Deterministic random streams keyed by a 64-bit seed.

Philox is counter-based: the raw 64-bit word at any position of the keyed
stream is a pure function of (key, position). Two layouts are used by the
package, chosen so that serial and parallel executions produce identical
bits:

* word-positional streams: a consumer that owns word positions
  [start, start + count) can regenerate exactly those words no matter how
  the work is partitioned. Sanitization noise assigns word ``cell*K + cat``
  (plus a caller offset) to each cell/category pair.
* block substreams: Monte-Carlo replication block ``j`` draws from an
  independent generator spaced 2**64 counter blocks apart in a region
  disjoint from every word-positional stream, so tallies cannot depend on
  run order or thread count.
"""

from __future__ import annotations

import numpy as np

MAX_SEED = 2**64 - 1

# Counter layout: word-positional streams occupy counter blocks
# [0, 2**64); block substream j starts at _BLOCK_REGION + j * 2**64.
_BLOCK_REGION = 1 << 128
_BLOCK_STRIDE = 1 << 64


def check_seed(seed) -> int:
    """Validate and return a seed as a plain int in [0, 2**64)."""
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ValueError("seed must be an integer")
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError("seed must be in [0, 2**64)")
    return seed


def raw_words(seed: int, start: int, count: int) -> np.ndarray:
    """Return ``count`` raw 64-bit words at positions [start, start+count)."""
    seed = check_seed(seed)
    if start < 0 or count < 0:
        raise ValueError("stream position and count must be non-negative")
    if count == 0:
        return np.empty(0, dtype=np.uint64)
    block, lane = divmod(int(start), 4)
    bg = np.random.Philox(key=seed, counter=block)
    if lane:
        bg.random_raw(lane)
    out = bg.random_raw(count)
    if np.ndim(out) == 0:
        out = np.array([out], dtype=np.uint64)
    return out


def uniforms(seed: int, start: int, count: int) -> np.ndarray:
    """Uniform doubles on the open interval (0, 1), one per word position."""
    w = raw_words(seed, start, count)
    return ((w >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def block_generator(seed: int, index: int) -> np.random.Generator:
    """Independent generator for replication block ``index``.

    Each block owns 2**64 counter blocks, and the whole block region is
    disjoint from the word-positional streams above.
    """
    seed = check_seed(seed)
    if index < 0:
        raise ValueError("block index must be non-negative")
    counter = _BLOCK_REGION + index * _BLOCK_STRIDE
    return np.random.Generator(np.random.Philox(key=seed, counter=counter))
