"""Counter-based random streams.

Every stream is a Philox generator keyed by a ``SeedSequence`` built from the
user seed and an integer path (e.g. ``(stream_tag, replicate_index)``).  A
replicate's draws therefore depend only on ``(seed, path)``, never on how work
is split across threads.
"""

from __future__ import annotations

import os

import numpy as np

# Stream tags keep independent consumers of one seed apart.
STREAM_PERTURB = 1
STREAM_RESIDUAL = 2
STREAM_WILD = 3
STREAM_DATA = 10
STREAM_DESIGN = 11
STREAM_BOOT = 12
STREAM_MCSE = 13
STREAM_VALIDATE = 14


def stream(seed: int, *path: int) -> np.random.Generator:
    """Return the generator for ``seed`` at position ``path``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in path))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *path: int) -> int:
    """A 63-bit integer seed derived deterministically from ``(seed, path)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def default_threads() -> int:
    """Worker count from ``PERTBOOT_THREADS`` (default 1)."""
    raw = os.environ.get("PERTBOOT_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
