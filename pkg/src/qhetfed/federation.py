"""Hierarchical federated training engine: cloud, edge sets, devices.

Two algorithm families run over the same topology:

* ``qhetfed``: each global iteration performs tau synchronized rounds in
  which every device uploads a quantized mini-batch gradient, the edge
  averages them, and the whole set takes one shared descent step; then each
  device runs gamma solo steps, the edge averages the quantized parameter
  deltas, and the cloud averages quantized set deltas weighted by set size.
* ``hier_local_qsgd``: each of the tau rounds instead runs gamma solo steps
  per device followed by edge averaging of quantized deltas (model averaging
  at both levels).

``qhetfed_gamma1`` is the reduced form of the first family at gamma = 1 (tau
+ 1 gradient rounds, then cloud aggregation); ``centralized_sgd`` is the
single-worker oracle the degenerate topologies are checked against.

Every random draw is keyed by (master seed, purpose, set, device, iteration,
step) through :mod:`qhetfed.streams`, never by call order.  The batch step
index is global within an iteration: qhetfed's tau gradient rounds use
k = 0..tau-1 and its local phase k = tau..tau+gamma-1, the baseline's nested
loops use k = round*gamma + step, and the oracle consumes k = 0..steps-1.
Variants that perform the same conceptual draw therefore read the same
stream, which is what makes the equivalence tests exact.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import models as _models
from .datagen import DeviceShard, global_loss
from .models import ModelSpec
from .planner import PhaseTimes, baseline_iteration_delay, iteration_delay
from .quantizer import NonFiniteInputError, QuantizerSpec, identity_spec, quantize
from .streams import stream

QHETFED = "qhetfed"
HIER_LOCAL_QSGD = "hier_local_qsgd"
QHETFED_GAMMA1 = "qhetfed_gamma1"
CENTRALIZED_SGD = "centralized_sgd"

ALGORITHMS = (QHETFED, HIER_LOCAL_QSGD, QHETFED_GAMMA1, CENTRALIZED_SGD)


@dataclass(frozen=True)
class Topology:
    """Device sets hanging off one cloud: ``devices_per_set[l]`` devices in set l."""

    devices_per_set: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.devices_per_set:
            raise ValueError("need at least one device set")
        if any(n < 1 for n in self.devices_per_set):
            raise ValueError("every set needs at least one device")
        object.__setattr__(self, "devices_per_set", tuple(int(n) for n in self.devices_per_set))

    @property
    def num_sets(self) -> int:
        return len(self.devices_per_set)

    @property
    def num_devices(self) -> int:
        return int(sum(self.devices_per_set))


@dataclass(frozen=True)
class Schedule:
    """Iteration structure: tau rounds, gamma local steps, rate mu, T global iterations, batch B."""

    tau: int
    gamma: int
    mu: float
    rounds: int
    batch: int

    def __post_init__(self) -> None:
        if self.tau < 1 or self.gamma < 1:
            raise ValueError("tau and gamma must be >= 1")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")


@dataclass
class FedRunConfig:
    topology: Topology
    schedule: Schedule
    model: ModelSpec
    shards: list[DeviceShard]
    q1: QuantizerSpec = field(default_factory=identity_spec)
    q2: QuantizerSpec = field(default_factory=identity_spec)
    algorithm: str = QHETFED
    master_seed: int = 0
    test_samples: list | None = None
    times: PhaseTimes = field(default_factory=lambda: PhaseTimes(1.0, 0.1, 1.0))
    initial_params: np.ndarray | None = None
    init_scale: float = 0.1
    keep_snapshots: bool = False
    norm_guard: float = 1e9

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.algorithm == QHETFED_GAMMA1 and self.schedule.gamma != 1:
            raise ValueError("qhetfed_gamma1 requires schedule.gamma == 1")
        if len(self.shards) != self.topology.num_devices:
            raise ValueError(
                f"{len(self.shards)} shards for {self.topology.num_devices} devices"
            )
        if self.initial_params is not None and len(self.initial_params) != self.model.dim:
            raise ValueError("initial_params length does not match the model dimension")
        self._grid = _shard_grid(self.shards, self.topology)


def _shard_grid(shards: list[DeviceShard], topology: Topology) -> list[list[DeviceShard]]:
    grid: list[list[DeviceShard | None]] = [
        [None] * n for n in topology.devices_per_set
    ]
    for s in shards:
        if not (0 <= s.set_index < topology.num_sets):
            raise ValueError(f"shard set_index {s.set_index} outside topology")
        if not (0 <= s.device_index < topology.devices_per_set[s.set_index]):
            raise ValueError(
                f"shard device_index {s.device_index} outside set {s.set_index}"
            )
        if grid[s.set_index][s.device_index] is not None:
            raise ValueError(f"duplicate shard for device ({s.set_index},{s.device_index})")
        grid[s.set_index][s.device_index] = s
    for l, row in enumerate(grid):
        for n, entry in enumerate(row):
            if entry is None:
                raise ValueError(f"missing shard for device ({l},{n})")
    return grid  # type: ignore[return-value]


@dataclass
class RunRecord:
    """Per-global-iteration metrics plus the configuration that produced them.

    All lists have one entry per completed global iteration.  A run that trips
    the divergence guard stops early and stores the offending iteration index
    in ``diverged_at``; otherwise the lists have exactly ``schedule.rounds``
    entries.
    """

    algorithm: str
    master_seed: int
    train_loss: list[float]
    test_accuracy: list[float]
    runtime_s: list[float]
    param_hash: list[str]
    final_params: np.ndarray
    diverged_at: int | None
    snapshots: list[np.ndarray] | None
    config: FedRunConfig


def _param_hash(w: np.ndarray) -> str:
    return hashlib.sha256(w.tobytes()).hexdigest()


# ---------------------------------------------------------------------------
# aggregation operations


def _rng_list(rng, count: int) -> list[np.random.Generator]:
    if isinstance(rng, (list, tuple)):
        if len(rng) != count:
            raise ValueError(f"need {count} rng streams, got {len(rng)}")
        return list(rng)
    return [rng] * count


def edge_aggregate_gradients(local_grads, q1_spec: QuantizerSpec, rng) -> np.ndarray:
    """Mean of the quantized device gradients of one set.

    ``rng`` is a single generator (drawn from sequentially) or one generator
    per device.
    """
    if len(local_grads) == 0:
        raise ValueError("no gradients to aggregate")
    dims = {len(g) for g in local_grads}
    if len(dims) != 1:
        raise ValueError(f"gradient length mismatch: {sorted(dims)}")
    rngs = _rng_list(rng, len(local_grads))
    total = np.zeros(len(local_grads[0]))
    for g, r in zip(local_grads, rngs):
        total += quantize(g, q1_spec, r)
    return total / len(local_grads)


def edge_aggregate_models(deltas, base: np.ndarray, q1_spec: QuantizerSpec, rng) -> np.ndarray:
    """Set model after averaging quantized parameter deltas onto ``base``."""
    if len(deltas) == 0:
        raise ValueError("no deltas to aggregate")
    dims = {len(d) for d in deltas}
    if len(dims) != 1 or dims.pop() != len(base):
        raise ValueError("delta length mismatch")
    rngs = _rng_list(rng, len(deltas))
    total = np.zeros(len(base))
    for d, r in zip(deltas, rngs):
        total += quantize(d, q1_spec, r)
    return base + total / len(deltas)


def cloud_aggregate(set_models, global_prev: np.ndarray, topology: Topology, q2_spec: QuantizerSpec, rng) -> np.ndarray:
    """Global model from quantized set deltas, weighted by set device counts."""
    if len(set_models) != topology.num_sets:
        raise ValueError(
            f"{len(set_models)} set models for {topology.num_sets} sets"
        )
    rngs = _rng_list(rng, len(set_models))
    total = np.zeros(len(global_prev))
    for l, (m, r) in enumerate(zip(set_models, rngs)):
        total += topology.devices_per_set[l] * quantize(m - global_prev, q2_spec, r)
    return global_prev + total / topology.num_devices


# ---------------------------------------------------------------------------
# engine


def _initial_params(config: FedRunConfig) -> np.ndarray:
    if config.initial_params is not None:
        return np.array(config.initial_params, dtype=float)
    if config.model.kind == _models.MLP:
        return _models.init_params(
            config.model, stream(config.master_seed, "init"), scale=config.init_scale
        )
    return _models.init_params(config.model)


def _batch_view(shard: DeviceShard, config: FedRunConfig, l: int, n: int, t: int, k: int):
    """Mini-batch arrays for step k of global iteration t on device (l, n).

    A batch size at or above the shard size means exact full-batch descent
    (no randomness); otherwise indices are drawn uniformly with replacement.
    """
    B = config.schedule.batch
    if B >= shard.size:
        return shard.features, shard.labels
    idx = stream(config.master_seed, "batch", l, n, t, k).integers(0, shard.size, size=B)
    return shard.features[idx], shard.labels[idx]


def _metrics_appender(config: FedRunConfig, per_iteration_delay: float):
    record = RunRecord(
        algorithm=config.algorithm,
        master_seed=config.master_seed,
        train_loss=[],
        test_accuracy=[],
        runtime_s=[],
        param_hash=[],
        final_params=np.zeros(config.model.dim),
        diverged_at=None,
        snapshots=[] if config.keep_snapshots else None,
        config=config,
    )

    def append(w: np.ndarray, t: int) -> None:
        record.train_loss.append(global_loss(config.shards, config.model, w))
        if config.test_samples:
            record.test_accuracy.append(_models.accuracy(config.model, w, config.test_samples))
        else:
            record.test_accuracy.append(0.0)
        record.runtime_s.append((t + 1) * per_iteration_delay)
        record.param_hash.append(_param_hash(w))
        if record.snapshots is not None:
            record.snapshots.append(w.copy())

    return record, append


def _diverged(w: np.ndarray, guard: float) -> bool:
    return not np.all(np.isfinite(w)) or float(np.linalg.norm(w)) > guard


def run_qhetfed(config: FedRunConfig) -> RunRecord:
    """Gradient-aggregation rounds plus a trailing local phase, per global iteration."""
    if config.algorithm not in (QHETFED, QHETFED_GAMMA1):
        raise ValueError("config.algorithm does not name a qhetfed run")
    sched = config.schedule
    topo = config.topology
    grid = config._grid
    delay = iteration_delay(sched.tau, sched.gamma, config.times)
    record, append = _metrics_appender(config, delay)
    w = _initial_params(config)
    seed = config.master_seed

    for t in range(sched.rounds):
        try:
            set_models = []
            for l in range(topo.num_sets):
                # one shared array per set: the broadcast value every device holds
                w_set = w.copy()
                for i in range(sched.tau):
                    grads = [
                        _models.gradient(config.model, w_set, _batch_view(s, config, l, n, t, i))
                        for n, s in enumerate(grid[l])
                    ]
                    rngs = [stream(seed, "q1", l, n, t, i) for n in range(len(grid[l]))]
                    w_set = w_set - sched.mu * edge_aggregate_gradients(grads, config.q1, rngs)
                deltas = []
                for n, s in enumerate(grid[l]):
                    w_dev = w_set.copy()
                    for j in range(sched.gamma):
                        batch = _batch_view(s, config, l, n, t, sched.tau + j)
                        w_dev = w_dev - sched.mu * _models.gradient(config.model, w_dev, batch)
                    deltas.append(w_dev - w_set)
                rngs = [stream(seed, "q1", l, n, t, sched.tau) for n in range(len(grid[l]))]
                set_models.append(edge_aggregate_models(deltas, w_set, config.q1, rngs))
            rngs = [stream(seed, "q2", l, t) for l in range(topo.num_sets)]
            w_next = cloud_aggregate(set_models, w, topo, config.q2, rngs)
        except NonFiniteInputError:
            record.diverged_at = t
            break
        if _diverged(w_next, config.norm_guard):
            record.diverged_at = t
            break
        w = w_next
        append(w, t)

    record.final_params = w
    return record


def run_hier_local_qsgd(config: FedRunConfig) -> RunRecord:
    """Model averaging at both levels: gamma local steps inside each of tau rounds."""
    sched = config.schedule
    topo = config.topology
    grid = config._grid
    delay = baseline_iteration_delay(sched.tau, sched.gamma, config.times)
    record, append = _metrics_appender(config, delay)
    w = _initial_params(config)
    seed = config.master_seed

    for t in range(sched.rounds):
        try:
            set_models = []
            for l in range(topo.num_sets):
                w_set = w.copy()
                for i in range(sched.tau):
                    deltas = []
                    for n, s in enumerate(grid[l]):
                        w_dev = w_set.copy()
                        for j in range(sched.gamma):
                            batch = _batch_view(s, config, l, n, t, i * sched.gamma + j)
                            w_dev = w_dev - sched.mu * _models.gradient(config.model, w_dev, batch)
                        deltas.append(w_dev - w_set)
                    rngs = [stream(seed, "q1", l, n, t, i) for n in range(len(grid[l]))]
                    w_set = edge_aggregate_models(deltas, w_set, config.q1, rngs)
                set_models.append(w_set)
            rngs = [stream(seed, "q2", l, t) for l in range(topo.num_sets)]
            w_next = cloud_aggregate(set_models, w, topo, config.q2, rngs)
        except NonFiniteInputError:
            record.diverged_at = t
            break
        if _diverged(w_next, config.norm_guard):
            record.diverged_at = t
            break
        w = w_next
        append(w, t)

    record.final_params = w
    return record


def run_qhetfed_gamma1(config: FedRunConfig) -> RunRecord:
    """Reduced single-local-step variant: tau + 1 gradient rounds, then cloud aggregation.

    Trajectory-equivalent to ``run_qhetfed`` at gamma = 1 because round tau
    reads the same batch and quantizer streams as the local phase it replaces.
    """
    if config.schedule.gamma != 1:
        raise ValueError("the reduced variant requires gamma == 1")
    sched = config.schedule
    topo = config.topology
    grid = config._grid
    delay = iteration_delay(sched.tau, 1, config.times)
    record, append = _metrics_appender(config, delay)
    w = _initial_params(config)
    seed = config.master_seed

    for t in range(sched.rounds):
        try:
            set_models = []
            for l in range(topo.num_sets):
                w_set = w.copy()
                for i in range(sched.tau + 1):
                    grads = [
                        _models.gradient(config.model, w_set, _batch_view(s, config, l, n, t, i))
                        for n, s in enumerate(grid[l])
                    ]
                    rngs = [stream(seed, "q1", l, n, t, i) for n in range(len(grid[l]))]
                    w_set = w_set - sched.mu * edge_aggregate_gradients(grads, config.q1, rngs)
                set_models.append(w_set)
            rngs = [stream(seed, "q2", l, t) for l in range(topo.num_sets)]
            w_next = cloud_aggregate(set_models, w, topo, config.q2, rngs)
        except NonFiniteInputError:
            record.diverged_at = t
            break
        if _diverged(w_next, config.norm_guard):
            record.diverged_at = t
            break
        w = w_next
        append(w, t)

    record.final_params = w
    return record


def run_centralized_sgd(config: FedRunConfig, steps_per_iteration: int = 1) -> RunRecord:
    """Plain mini-batch SGD on the pooled data; the degenerate-case oracle.

    ``steps_per_iteration`` sets how many SGD steps count as one recorded
    iteration, so the oracle can be aligned with a federated run that takes
    several descent steps per global iteration.
    """
    if steps_per_iteration < 1:
        raise ValueError("steps_per_iteration must be positive")
    sched = config.schedule
    pooled_X = np.concatenate([s.features for row in config._grid for s in row])
    pooled_y = np.concatenate([s.labels for row in config._grid for s in row])
    pooled_size = len(pooled_y)
    delay = steps_per_iteration * config.times.t_cp
    record, append = _metrics_appender(config, delay)
    w = _initial_params(config)
    seed = config.master_seed

    for t in range(sched.rounds):
        for k in range(steps_per_iteration):
            if sched.batch >= pooled_size:
                X, y = pooled_X, pooled_y
            else:
                idx = stream(seed, "batch", 0, 0, t, k).integers(0, pooled_size, size=sched.batch)
                X, y = pooled_X[idx], pooled_y[idx]
            w = w - sched.mu * _models.gradient(config.model, w, (X, y))
        if _diverged(w, config.norm_guard):
            record.diverged_at = t
            break
        append(w, t)

    record.final_params = w
    return record


_RUNNERS = {
    QHETFED: run_qhetfed,
    HIER_LOCAL_QSGD: run_hier_local_qsgd,
    QHETFED_GAMMA1: run_qhetfed_gamma1,
    CENTRALIZED_SGD: run_centralized_sgd,
}


def run(config: FedRunConfig) -> RunRecord:
    """Dispatch on ``config.algorithm``."""
    return _RUNNERS[config.algorithm](config)
