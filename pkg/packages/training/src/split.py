"""Dataset splits and the per-epoch pair sequence."""

import math
from dataclasses import dataclass
from typing import Generic, Literal, Sequence, TypeVar

from packages.tensor.src.rng import make_rng

T = TypeVar("T")

SPLIT_STREAM = 5
PAIR_STREAM = 7


@dataclass(frozen=True)
class DatasetSplit(Generic[T]):
    """Disjoint train / validation / test subsets."""

    train: list[T]
    val: list[T]
    test: list[T]

    def to_dict(self) -> dict[str, list[T]]:
        return {"train": self.train, "val": self.val, "test": self.test}


def make_split(items: Sequence[T], fractions: Sequence[float], seed: int) -> DatasetSplit[T]:
    """Seeded shuffle, then partition; rounding remainders go to train.

    Args:
        items: Image paths or indices
        fractions: (train, val, test), summing to 1
        seed: Split seed

    Returns:
        DatasetSplit with val/test sizes floor(n·fraction)
    """
    n = len(items)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be three values summing to 1, got {list(fractions)}")
    order = make_rng(seed, SPLIT_STREAM).permutation(n)
    n_val = math.floor(n * fractions[1] + 1e-9)
    n_test = math.floor(n * fractions[2] + 1e-9)
    shuffled = [items[i] for i in order]
    n_train = n - n_val - n_test
    return DatasetSplit(
        train=shuffled[:n_train],
        val=shuffled[n_train : n_train + n_val],
        test=shuffled[n_train + n_val :],
    )


def all_pairs(n: int) -> list[tuple[int, int]]:
    """Every ordered pair (i, j), i ≠ j, in row-major order."""
    return [(i, j) for i in range(n) for j in range(n) if i != j]


def pair_iterator(
    n: int,
    strategy: Literal["all", "random"],
    seed: int,
    count: int | None = None,
    epoch: int = 0,
) -> list[tuple[int, int]]:
    """(source, target) index pairs for one epoch over a subset of n images.

    "all" yields the n(n−1) ordered pairs in a seeded per-epoch order;
    "random" draws ``count`` ordered pairs uniformly with i ≠ j.
    """
    if n < 2:
        raise ValueError(f"pairs need at least 2 images, got {n}")
    rng = make_rng(seed, PAIR_STREAM, epoch)
    if strategy == "all":
        pairs = all_pairs(n)
        return [pairs[k] for k in rng.permutation(len(pairs))]
    if strategy == "random":
        if count is None or count < 1:
            raise ValueError("random pairs need a positive count")
        sources = rng.integers(0, n, size=count)
        offsets = rng.integers(0, n - 1, size=count)
        targets = offsets + (offsets >= sources)
        return [(int(i), int(j)) for i, j in zip(sources, targets)]
    raise ValueError(f"unknown pair strategy {strategy!r}")
