from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..error_handler import DimensionError, ValidationError
from ..i18n import t


@dataclass(frozen=True)
class BlockPartition:
    """Contiguous, disjoint blocks covering R^n, one per agent."""

    sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "sizes", tuple(int(size) for size in self.sizes))
        if not self.sizes:
            raise ValidationError(t("error.partition.empty"), field="sizes")
        if any(size <= 0 for size in self.sizes):
            raise ValidationError(t("error.partition.size"), field="sizes")

    @classmethod
    def uniform(cls, count: int, size: int = 1) -> BlockPartition:
        return cls(tuple([size] * count))

    @property
    def count(self) -> int:
        return len(self.sizes)

    @property
    def dimension(self) -> int:
        return sum(self.sizes)

    @cached_property
    def offsets(self) -> tuple[int, ...]:
        return tuple(int(offset) for offset in np.concatenate(([0], np.cumsum(self.sizes)[:-1])))

    @cached_property
    def slices(self) -> tuple[slice, ...]:
        return tuple(slice(offset, offset + size) for offset, size in zip(self.offsets, self.sizes))

    def block(self, index: int) -> slice:
        return self.slices[index]

    def block_norms(self, vector: np.ndarray) -> np.ndarray:
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.dimension,):
            raise DimensionError(
                t("error.dimension", field="vector", expected=self.dimension, actual=vector.size), field="vector"
            )
        return np.sqrt(np.add.reduceat(vector * vector, list(self.offsets)))


def block_max_norm(vector: np.ndarray, partition: BlockPartition) -> float:
    return float(partition.block_norms(vector).max())


def restricted_block_max(vector: np.ndarray, partition: BlockPartition, blocks) -> float:
    """Block-max norm over a subset of blocks; 0 for an empty subset."""
    norms = partition.block_norms(vector)
    selected = [norms[index] for index in blocks]
    return float(max(selected)) if selected else 0.0


def block_operator_bound(matrix: np.ndarray, partition: BlockPartition) -> float:
    """max_i sum_j ||A_ij||_2, an upper bound on the operator norm induced by the block-max norm."""
    matrix = np.asarray(matrix, dtype=float)
    row_sums = [
        sum(np.linalg.norm(matrix[rows, cols], ord=2) for cols in partition.slices) for rows in partition.slices
    ]
    return float(max(row_sums))


def sampled_block_operator_norm(
    matrix: np.ndarray,
    partition: BlockPartition,
    samples: int = 1000,
    rng: np.random.Generator | None = None,
) -> float:
    """Largest observed ratio blockmax(Av) / blockmax(v) over random directions."""
    rng = rng if rng is not None else np.random.default_rng(0)
    matrix = np.asarray(matrix, dtype=float)
    largest = 0.0
    for direction in rng.standard_normal((samples, partition.dimension)):
        largest = max(largest, block_max_norm(matrix @ direction, partition) / block_max_norm(direction, partition))
    return largest
