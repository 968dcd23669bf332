"""Synthetic classification data, device partitioning schemes, and heterogeneity.

The partition schemes control how class-skewed each device's shard is:

* ``iid``     -- every device draws uniformly from the whole dataset.
* ``noniid1`` -- every device first picks 2 classes, then draws only from them.
* ``noniid2`` -- like noniid1 with a single class per device (the extreme case).
* ``mixed``   -- requires exactly 3 device sets: set 0 is iid, set 1 is
  noniid1, and in set 2 the first half of the devices are iid while the rest
  follow noniid1.

Heterogeneity is summarized by the largest squared deviation of a device's
full-shard gradient from the global gradient over a set of probe parameter
points.  Since a supremum over all of parameter space cannot be computed, the
estimate is a lower bound; probe points taken along a short training
trajectory cover the region a run actually visits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import models as _models
from .models import LabeledSample, ModelSpec

IID = "iid"
MIXED = "mixed"
NONIID1 = "noniid1"
NONIID2 = "noniid2"

SCHEMES = (IID, MIXED, NONIID1, NONIID2)

_CLASSES_PER_DEVICE = {NONIID1: 2, NONIID2: 1}


@dataclass
class DeviceShard:
    """One device's local dataset, with features pre-stacked for fast slicing."""

    set_index: int
    device_index: int
    samples: list[LabeledSample]
    features: np.ndarray = field(init=False, repr=False)
    labels: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.samples:
            raise ValueError("a device shard cannot be empty")
        self.features = np.stack([np.asarray(s.features, dtype=float) for s in self.samples])
        self.labels = np.array([s.label for s in self.samples], dtype=int)

    @property
    def size(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class PartitionScheme:
    kind: str = IID
    size_range: tuple[int, int] = (50, 150)

    def __post_init__(self) -> None:
        if self.kind not in SCHEMES:
            raise ValueError(f"unknown partition scheme {self.kind!r}")
        lo, hi = self.size_range
        if lo < 1 or hi < lo:
            raise ValueError("size_range must satisfy 1 <= min <= max")

    @property
    def classes_per_device(self) -> int | None:
        """Class budget for the skewed schemes; None means unrestricted."""
        return _CLASSES_PER_DEVICE.get(self.kind)


def make_synthetic_dataset(
    num_classes: int,
    per_class: int,
    input_dim: int,
    rng: np.random.Generator,
    *,
    separation: float = 6.0,
    noise: float = 1.0,
) -> list[LabeledSample]:
    """Balanced Gaussian class clusters.

    Class means are random directions scaled to length ``separation``; each
    sample is its class mean plus ``noise``-scaled standard normal jitter, so
    ``separation / noise`` controls how hard the task is.
    """
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    if per_class < 1:
        raise ValueError("per_class must be positive")
    directions = rng.standard_normal((num_classes, input_dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    means = separation * directions
    dataset: list[LabeledSample] = []
    for k in range(num_classes):
        points = means[k] + noise * rng.standard_normal((per_class, input_dim))
        dataset.extend(LabeledSample(features=p, label=k) for p in points)
    return dataset


def split_dataset(
    dataset: list[LabeledSample], test_fraction: float, rng: np.random.Generator
) -> tuple[list[LabeledSample], list[LabeledSample]]:
    """Shuffle and split into (train, test)."""
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError("test_fraction must be in [0, 1)")
    order = rng.permutation(len(dataset))
    n_test = int(round(test_fraction * len(dataset)))
    test = [dataset[i] for i in order[:n_test]]
    train = [dataset[i] for i in order[n_test:]]
    return train, test


def partition(
    dataset: list[LabeledSample],
    topology,
    scheme: PartitionScheme,
    rng: np.random.Generator,
    *,
    replace_when_short: bool = True,
) -> list[DeviceShard]:
    """Build one shard per device under the given scheme.

    Draws are without replacement from the device's allowed pool; when the
    pool is smaller than the drawn shard size, sampling falls back to
    with-replacement (or raises if ``replace_when_short`` is False).
    """
    if not dataset:
        raise ValueError("cannot partition an empty dataset")
    labels = np.array([s.label for s in dataset], dtype=int)
    num_classes = int(labels.max()) + 1
    by_class = [np.flatnonzero(labels == k) for k in range(num_classes)]
    present = [k for k in range(num_classes) if len(by_class[k])]

    budget = scheme.classes_per_device
    if budget is not None and budget > len(present):
        raise ValueError(
            f"scheme {scheme.kind!r} needs {budget} classes per device "
            f"but the dataset has only {len(present)}"
        )
    if scheme.kind == MIXED and topology.num_sets != 3:
        raise ValueError("the mixed scheme is defined for exactly 3 device sets")

    lo, hi = scheme.size_range
    all_indices = np.arange(len(dataset))
    shards: list[DeviceShard] = []
    for l in range(topology.num_sets):
        n_dev = topology.devices_per_set[l]
        for n in range(n_dev):
            rule = _device_rule(scheme, l, n, n_dev)
            size = int(rng.integers(lo, hi + 1))
            if rule == IID:
                pool = all_indices
            else:
                chosen = rng.choice(present, size=_CLASSES_PER_DEVICE[rule], replace=False)
                pool = np.concatenate([by_class[k] for k in np.sort(chosen)])
            if size <= len(pool):
                idx = rng.choice(pool, size=size, replace=False)
            elif replace_when_short:
                idx = rng.choice(pool, size=size, replace=True)
            else:
                raise ValueError(
                    f"device ({l},{n}): pool of {len(pool)} samples cannot fill "
                    f"a shard of {size} without replacement"
                )
            shards.append(
                DeviceShard(set_index=l, device_index=n, samples=[dataset[i] for i in idx])
            )
    return shards


def _device_rule(scheme: PartitionScheme, set_index: int, device_index: int, n_dev: int) -> str:
    if scheme.kind != MIXED:
        return scheme.kind
    if set_index == 0:
        return IID
    if set_index == 1:
        return NONIID1
    # set 2: first half iid, second half class-skewed
    return IID if device_index < (n_dev + 1) // 2 else NONIID1


# ---------------------------------------------------------------------------
# global loss and heterogeneity


def global_loss(shards: list[DeviceShard], spec: ModelSpec, w: np.ndarray) -> float:
    """Size-weighted average of per-shard losses.

    Equals the plain mean loss over the pooled multiset of all shard samples.
    """
    if not shards:
        raise ValueError("no shards")
    total = sum(s.size for s in shards)
    acc = 0.0
    for s in shards:
        acc += s.size * _models.loss(spec, w, (s.features, s.labels))
    return acc / total


def global_gradient(shards: list[DeviceShard], spec: ModelSpec, w: np.ndarray) -> np.ndarray:
    total = sum(s.size for s in shards)
    acc = np.zeros(spec.dim)
    for s in shards:
        acc += s.size * _models.gradient(spec, w, (s.features, s.labels))
    return acc / total


def estimate_heterogeneity(
    shards: list[DeviceShard], spec: ModelSpec, probes: list[np.ndarray]
) -> float:
    """Max over devices and probe points of ||grad_global - grad_device||^2."""
    if not shards:
        raise ValueError("no shards")
    if not probes:
        raise ValueError("need at least one probe point")
    worst = 0.0
    for w in probes:
        g_global = global_gradient(shards, spec, w)
        for s in shards:
            g_local = _models.gradient(spec, w, (s.features, s.labels))
            diff = g_global - g_local
            worst = max(worst, float(diff @ diff))
    return worst


def training_trajectory_probes(
    spec: ModelSpec,
    samples: list[LabeledSample],
    rng: np.random.Generator | None = None,
    *,
    count: int = 5,
    lr: float = 0.2,
    steps_between: int = 10,
) -> list[np.ndarray]:
    """Parameter snapshots along a short full-batch descent, starting at init.

    These make reasonable heterogeneity probes: they sit in the region of
    parameter space an actual run passes through.
    """
    if count < 1:
        raise ValueError("count must be positive")
    X, y = _models.stack_batch(samples)
    w = _models.init_params(spec, rng)
    probes = [w.copy()]
    while len(probes) < count:
        for _ in range(steps_between):
            w = w - lr * _models.gradient(spec, w, (X, y))
        probes.append(w.copy())
    return probes


# ---------------------------------------------------------------------------
# flat text import/export


def save_dataset(path, samples: list[LabeledSample]) -> None:
    """One sample per line: label then features, space-separated."""
    with open(path, "w", encoding="utf8") as fh:
        for s in samples:
            feats = " ".join(repr(float(v)) for v in np.asarray(s.features, dtype=float))
            fh.write(f"{int(s.label)} {feats}\n")


def load_dataset(path) -> list[LabeledSample]:
    samples: list[LabeledSample] = []
    with open(path, encoding="utf8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            try:
                label = int(parts[0])
                feats = np.array([float(v) for v in parts[1:]], dtype=float)
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: malformed sample line") from exc
            samples.append(LabeledSample(features=feats, label=label))
    return samples
