"""Seeded, splittable random streams.

Backed by numpy's PCG64 bit generator. A child stream is derived from the
parent seed and a stable hash of the child's name, so consumers never share
draws and adding a new consumer never perturbs the existing ones.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _name_key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")


class Rng:
    def __init__(self, seed: int, path: tuple = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.path = tuple(path)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, name) -> "Rng":
        key = _name_key(name) if isinstance(name, str) else int(name)
        return Rng(self.seed, self.path + (key,))

    def normal(self, shape, scale=1.0):
        return self.gen.standard_normal(shape) * scale

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def choice(self, seq, size=None, replace=True):
        return self.gen.choice(seq, size=size, replace=replace)

    def permutation(self, n):
        return self.gen.permutation(n)

    def get_state(self) -> dict:
        return {"seed": self.seed, "path": list(self.path), "bit_generator": self.gen.bit_generator.state}

    @classmethod
    def from_state(cls, state: dict) -> "Rng":
        rng = cls(state["seed"], tuple(state["path"]))
        rng.gen.bit_generator.state = state["bit_generator"]
        return rng
