"""Deterministic, splittable random number streams.

Every stochastic operation in the package draws from an :class:`RngStream`,
which names a stream by ``(seed, path)``. The same pair always produces the
same draw sequence, on any platform and regardless of how many worker
processes are running, because child streams are derived by hashing labels
rather than by sharing mutable generator state.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

__all__ = ["RngStream"]


def _label_key(label) -> int:
    """Map an arbitrary label to a stable 64-bit integer."""
    digest = hashlib.sha256(repr(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class RngStream:
    """Immutable handle for a named random stream.

    ``substream`` extends the path; label concatenation is associative, so
    ``s.substream("a").substream("b")`` names the same stream as
    ``s.substream("a", "b")``. ``generator()`` materializes a fresh
    ``numpy.random.Generator`` (Philox, counter based) positioned at the
    start of the stream.
    """

    seed: int
    path: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "path", tuple(self.path))

    def substream(self, *labels) -> "RngStream":
        return RngStream(self.seed, self.path + labels)

    def generator(self) -> np.random.Generator:
        entropy = [int(self.seed)] + [_label_key(lab) for lab in self.path]
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
