"""Counter-based randomness for exactly replayable simulations.

Every stochastic draw in the simulator is addressed by ``(seed, stream,
counter)`` and produced by the Philox counter-based generator, so a draw can
be recomputed at any time without replaying generator history.  This is what
makes device trajectories bit-identical under re-simulation and lets a
degradation step be a pure function of its inputs.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream ids partition a device seed's draw space by purpose.
STREAM_JITTER = 1       # per-device characteristic-life jitter
STREAM_HAZARD = 2       # per-device hard-failure hazard quantile
STREAM_SENSOR = 3       # per-trial sensor noise
STREAM_SCRIPT = 4       # randomized command scripts in tests


def uniform(seed: int, stream: int, counter: int = 0) -> float:
    """One float64 in [0, 1) at an absolute (seed, stream, counter) address."""
    bg = np.random.Philox(key=[seed & _MASK64, stream & _MASK64],
                          counter=[counter & _MASK64, 0, 0, 0])
    return float(np.random.Generator(bg).random())


def normal(seed: int, stream: int, counter: int = 0) -> float:
    """One standard-normal float64 at an absolute address."""
    bg = np.random.Philox(key=[seed & _MASK64, stream & _MASK64],
                          counter=[counter & _MASK64, 0, 0, 0])
    return float(np.random.Generator(bg).standard_normal())


def noise_generator(seed: int, stream: int = STREAM_SENSOR) -> np.random.Generator:
    """A bulk generator for vectorized sensor noise, keyed like the scalars."""
    return np.random.Generator(np.random.Philox(key=[seed & _MASK64, stream & _MASK64]))


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from a path of identifying parts.

    Floats are canonicalized through repr so 2.5 and 2.50 collide only when
    they are the same value.
    """
    text = "/".join(repr(p) for p in parts)
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1
