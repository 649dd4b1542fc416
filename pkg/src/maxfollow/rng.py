"""Seeded, counter-based random substreams.

Every random draw in the package goes through an :class:`RngStream`. A stream
is identified by a 64-bit seed plus a tuple of integer substream ids, and is
backed by numpy's Philox counter-based bit generator so identical
(seed, substream) pairs give identical draws on every platform.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    seed: int
    substream: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _SEED_MASK)
        sub = self.substream
        if isinstance(sub, (int, np.integer)):
            sub = (int(sub),)
        object.__setattr__(self, "substream", tuple(int(x) for x in sub))

    def child(self, *ids: int) -> "RngStream":
        """Derive an independent stream keyed by extra ids, e.g. ``(k, h)``."""
        return RngStream(self.seed, self.substream + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.substream)
        return np.random.Generator(np.random.Philox(ss))
