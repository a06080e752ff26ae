"""Flat parameter vectors, block layouts and seeded randomness.

Parameters live in one contiguous float64 array; a ``BlockLayout`` overlays named
slices (one per weight matrix or bias vector) so that every per-parameter statistic
in the optimizer can be stored as an array aligned by index.

Randomness: ``make_rng`` builds a NumPy ``Generator`` on the Philox-4x64 counter-based
bit generator, seeded with a 64-bit integer through ``SeedSequence``. Gaussian samples
come from NumPy's ziggurat normal sampler, so a given seed reproduces the same stream
for a given NumPy release.
"""

import math
from typing import List, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, Field, model_validator

from adasecant.errors import LayoutError, NonFiniteError, NumericsError, UnknownBlockError

ParamVector = npt.NDArray[np.float64]
Rng = np.random.Generator

SEED_MASK = (1 << 64) - 1


class Block(BaseModel):
    name: str = Field(min_length=1)
    offset: int = Field(ge=0)
    length: int = Field(ge=1)

    model_config = {"frozen": True}

    @property
    def stop(self) -> int:
        return self.offset + self.length


class BlockLayout(BaseModel):
    blocks: Tuple[Block, ...]

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def check_contiguous(self) -> "BlockLayout":
        if not self.blocks:
            raise ValueError("layout needs at least one block")
        expected = 0
        seen = set()
        for block in self.blocks:
            if block.name in seen:
                raise ValueError(f"duplicate block name {block.name!r}")
            seen.add(block.name)
            if block.offset != expected:
                raise ValueError(
                    f"block {block.name!r} starts at {block.offset}, expected {expected}"
                )
            expected = block.stop
        return self

    @classmethod
    def from_triples(cls, triples: Sequence[Tuple[str, int, int]]) -> "BlockLayout":
        try:
            return cls(blocks=tuple(Block(name=n, offset=o, length=l) for n, o, l in triples))
        except ValueError as e:
            raise LayoutError(f"Invalid block layout: {str(e)}") from e

    @classmethod
    def from_shapes(cls, shapes: Sequence[Tuple[str, Tuple[int, ...]]]) -> "BlockLayout":
        triples = []
        offset = 0
        for name, shape in shapes:
            length = int(np.prod(shape)) if len(shape) else 1
            triples.append((name, offset, length))
            offset += length
        return cls.from_triples(triples)

    @classmethod
    def single(cls, n: int, name: str = "theta") -> "BlockLayout":
        return cls.from_triples([(name, 0, n)])

    @classmethod
    def per_coordinate(cls, n: int, prefix: str = "x") -> "BlockLayout":
        return cls.from_triples([(f"{prefix}{i}", i, 1) for i in range(n)])

    @property
    def size(self) -> int:
        return self.blocks[-1].stop

    @property
    def names(self) -> List[str]:
        return [block.name for block in self.blocks]

    def get(self, name: str) -> Block:
        for block in self.blocks:
            if block.name == name:
                return block
        raise UnknownBlockError(f"Unknown block {name!r}; layout has {self.names}")

    def slices(self) -> List[slice]:
        return [slice(block.offset, block.stop) for block in self.blocks]


def make_rng(seed: int) -> Rng:
    return np.random.Generator(np.random.Philox(int(seed) & SEED_MASK))


def spawn_rngs(seed: int, n: int) -> List[Rng]:
    """Independent child streams of one seed (init, minibatches, gradient noise, ...)."""
    children = np.random.SeedSequence(int(seed) & SEED_MASK).spawn(n)
    return [np.random.Generator(np.random.Philox(child)) for child in children]


def gaussian_fill(rng: Rng, n: int, mean: float = 0.0, std: float = 1.0) -> ParamVector:
    if n < 1:
        raise NumericsError(f"gaussian_fill needs n >= 1, got {n}")
    if not (math.isfinite(mean) and math.isfinite(std)):
        raise NumericsError(f"gaussian_fill needs finite mean/std, got {mean}, {std}")
    if std < 0:
        raise NumericsError(f"gaussian_fill needs std >= 0, got {std}")
    if std == 0:
        return np.full(n, float(mean), dtype=np.float64)
    return rng.normal(loc=mean, scale=std, size=n).astype(np.float64, copy=False)


def block_view(v: ParamVector, layout: BlockLayout, name: str) -> ParamVector:
    """Slice of ``v`` for block ``name``; writes go through to ``v``."""
    if v.shape[0] != layout.size:
        raise LayoutError(f"vector of length {v.shape[0]} does not match layout of size {layout.size}")
    block = layout.get(name)
    return v[block.offset:block.stop]


def l2_norm(v: npt.ArrayLike) -> float:
    return float(np.sqrt(np.dot(np.ravel(v), np.ravel(v))))


def ensure_finite(values: npt.ArrayLike, stage: str) -> None:
    arr = np.asarray(values, dtype=np.float64)
    finite = np.isfinite(arr)
    if not finite.all():
        index = int(np.flatnonzero(~finite.ravel())[0])
        raise NonFiniteError(stage, index, float(arr.ravel()[index]))


def relative_error(a: npt.ArrayLike, b: npt.ArrayLike) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(l2_norm(a) + l2_norm(b), np.finfo(np.float64).tiny)
    return l2_norm(a - b) / scale
