"""Depth-pipelined training with delayed gradients.

The network is split into K contiguous modules.  On a global integer
clock, module k forwards batch b at tick b + (k-1) and backpropagates
it 2*(K-k) ticks later, so one tick does at most one forward and one
backward per module.  Within a tick the order is forward, backward,
update.

Per-module bookkeeping is indexed by the local slot u = tick - (k-1):
the forward of slot u is batch u, the backward of slot u is batch
u - 2*(K-k) (negative during pipeline fill -- a skipped slot that
contributes a zero gradient), and the accumulated-SGD update fires at
slots u = M-1 mod M.  With M*S batches this yields exactly S updates in
every module and keeps the version law  param_version(batch t) =
floor(t / M)  everywhere, which is what makes the delayed-gradient
replay oracle exact.

Because a module may update between a batch's forward and its delayed
backward, each worker keeps a ring of parameter snapshots per version.
Updates build fresh arrays, so a snapshot is just a reference to the
parameter list that was live at that version.

run_clocked executes the tick loop in-process; run_parallel runs one
thread per module connected by bounded FIFO queues and produces a
bit-identical trace (each worker performs the same float operations in
the same order, only wall-clock interleaving differs).
"""
from __future__ import annotations

import queue
import threading
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, sample_batch
from .errors import ConfigError, ProtocolError
from .net import (LOSS_KINDS, LayerState, init_states, layer_backward,
                  layer_forward, loss_and_grad)
from .optimizer import (Accumulator, SgdConfig, ga_update, global_grad_norm,
                        grads_sumsq, lr_at)
from .partition import Partition
from .trace import RunTrace, StopWatch, TickEvent, UpdateRecord

DIVERGENCE_LIMIT = 1e12


def schedule_position(b: int, k: int, K: int):
    """(forward_tick, backward_tick) of batch b in module k: the backward
    lags the forward by exactly 2*(K-k) ticks."""
    if b < 0:
        raise ConfigError(f"batch index must be >= 0, got {b}")
    if not 1 <= k <= K:
        raise ConfigError(f"module k must lie in 1..K, got k={k}, K={K}")
    return b + (k - 1), b + 2 * K - k - 1


@dataclass(frozen=True)
class ActivationMsg:
    batch_index: int
    payload: np.ndarray


@dataclass(frozen=True)
class GradientMsg:
    batch_index: int
    payload: np.ndarray


@dataclass
class ForwardContext:
    """State stashed at forward time for the matching delayed backward."""

    batch_index: int
    x: np.ndarray
    intermediates: list
    output: np.ndarray
    param_version: int


@dataclass
class WorkerUpdate:
    s: int
    sumsq: float          # squared norm of this module's averaged gradient
    slots: list           # provenance Slots, j = 0..M-1
    avg_flat: np.ndarray = None


@dataclass
class TrainConfig:
    layers: list
    partition: Partition
    loss: str
    ga_steps: int                 # M
    batch_size: int
    updates: int                  # S
    schedule: object
    sgd: SgdConfig = field(default_factory=SgdConfig)
    seed: int = 0                 # parameter init (and default sampler key)
    sampler_seed: int = None
    init_scale: float = 1.0
    record_params: bool = False
    record_grads: bool = False
    trace_ticks: bool = False
    divergence_limit: float = DIVERGENCE_LIMIT

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("need at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ConfigError(
                    f"layer chain mismatch: {a.kind}->{a.out_dim} feeds "
                    f"{b.kind}<-{b.in_dim}")
        if self.partition.num_layers != len(self.layers):
            raise ConfigError("partition does not cover the layer stack")
        if self.loss not in LOSS_KINDS:
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.ga_steps < 1 or self.updates < 1 or self.batch_size < 1:
            raise ConfigError("ga_steps, updates and batch_size must be >= 1")
        if self.sampler_seed is None:
            self.sampler_seed = self.seed

    @property
    def K(self) -> int:
        return self.partition.K

    @property
    def total_batches(self) -> int:
        return self.ga_steps * self.updates


class ModuleWorker:
    """One pipeline stage: a contiguous slice of layers plus its
    accumulator, momentum state and parameter-snapshot ring."""

    def __init__(self, k: int, cfg: TrainConfig, states):
        self.k = k
        self.K = cfg.K
        self.cfg = cfg
        self.two_delta = 2 * (cfg.K - k)
        self.layer_range = cfg.partition.layers_of(k)
        self.specs = [cfg.layers[i] for i in self.layer_range]
        self.params = [states[i].params for i in self.layer_range]
        self.velocity = None
        self.version = 0
        self.snapshots = {0: self.params}
        self.stash = {}
        self.acc = Accumulator([p.size for p in self.params], cfg.ga_steps)
        self.update_records = []
        self.loss_records = []  # module K only: (tick, loss) per update
        self.events = [] if cfg.trace_ticks else None
        self.diverged = False
        self.divergence_reason = None
        self._pending = None  # (batch, loss, dpred) from this slot's forward

    # -- helpers the runners use to decide what to feed ------------------

    def expects_forward(self, u: int) -> bool:
        return 0 <= u < self.cfg.total_batches

    def expects_gradient(self, u: int) -> bool:
        return (self.k < self.K and u < self.cfg.total_batches
                and u - self.two_delta >= 0)

    def emits_gradient_at(self, t_b: int) -> bool:
        return (self.k > 1
                and t_b < self.cfg.total_batches - self.two_delta - 2)

    # ---------------------------------------------------------------------

    def _forward(self, u: int, x: np.ndarray, target):
        if self.version != u // self.cfg.ga_steps:
            raise ProtocolError(
                f"version law broken: module {self.k} at version "
                f"{self.version} forwarding batch {u}")
        intermediates = []
        h = x
        for spec, p_flat in zip(self.specs, self.params):
            h, inter = layer_forward(spec, LayerState(p_flat), h)
            intermediates.append(inter)
        if self.k == self.K:
            loss, dpred = loss_and_grad(self.cfg.loss, h, target)
            self._pending = (u, loss, dpred)
            if not np.isfinite(loss) or abs(loss) > self.cfg.divergence_limit:
                self.diverged = True
                self.divergence_reason = f"loss={loss!r} at batch {u}"
        # stash only if a backward will consume it
        if u < self.cfg.total_batches - self.two_delta:
            self.stash[u] = ForwardContext(u, x, intermediates, h, self.version)
            if len(self.stash) > self.two_delta + 1:
                raise ProtocolError(
                    f"stash occupancy {len(self.stash)} exceeds "
                    f"{self.two_delta + 1} in module {self.k}")
        if self.events is not None:
            self.events.append(TickEvent(u + self.k - 1, self.k, "forward", u))
        return h

    def _backward(self, t_b: int, gout: np.ndarray):
        if t_b not in self.stash:
            raise ProtocolError(
                f"module {self.k} has no stashed context for batch {t_b}")
        if min(self.stash) != t_b:
            raise ProtocolError(
                f"module {self.k} consumed batch {t_b} out of FIFO order")
        ctx = self.stash.pop(t_b)
        sparams = self.snapshots[ctx.param_version]
        grads = [None] * len(self.specs)
        g = gout
        for i in range(len(self.specs) - 1, -1, -1):
            grads[i], g = layer_backward(self.specs[i], LayerState(sparams[i]),
                                         ctx.intermediates[i], g)
        self.acc.add(grads, t_b, ctx.param_version)
        if self.events is not None:
            tick = t_b + self.two_delta + self.k - 1
            self.events.append(TickEvent(tick, self.k, "backward", t_b))
        return g

    def _update(self, u: int):
        s = self.version
        lr = lr_at(self.cfg.schedule, s)
        slots = list(self.acc.slots)
        self.params, self.velocity, avg = ga_update(
            self.params, self.acc, lr, self.cfg.sgd, self.velocity)
        self.acc.reset()
        sumsq = grads_sumsq(avg)
        avg_flat = np.concatenate([a.ravel() for a in avg]) \
            if self.cfg.record_grads else None
        self.update_records.append(WorkerUpdate(s, sumsq, slots, avg_flat))
        if self.k == self.K:
            batch, loss, _ = self._pending
            if batch != u:
                raise ProtocolError("loss/update pairing broken")
            self.loss_records.append((u + self.k - 1, loss))
        self.version += 1
        self.snapshots[self.version] = self.params
        if not self.cfg.record_params:
            needed = max(0, (u + 1 - self.two_delta) // self.cfg.ga_steps)
            for v in [v for v in self.snapshots if v < needed]:
                del self.snapshots[v]
        if self.events is not None:
            self.events.append(
                TickEvent(u + self.k - 1, self.k, "update", self.version))
        if not np.isfinite(sumsq) or np.sqrt(sumsq) > self.cfg.divergence_limit:
            self.diverged = True
            self.divergence_reason = (
                f"module {self.k} gradient norm {np.sqrt(sumsq)!r} "
                f"at update {s + 1}")

    def process_slot(self, u: int, fwd_x, grad_msg, target):
        """Run one slot: forward batch u, backward batch u - 2*(K-k),
        update if u closes an accumulation group.  Returns the outgoing
        (ActivationMsg | None, GradientMsg | None)."""
        M, MS = self.cfg.ga_steps, self.cfg.total_batches
        act_out = grad_out = None
        if self.expects_forward(u):
            if fwd_x is None:
                raise ProtocolError(
                    f"module {self.k} missing forward input for batch {u}")
            y = self._forward(u, fwd_x, target)
            if self.k < self.K:
                act_out = ActivationMsg(u, y)
        t_b = u - self.two_delta
        if u < MS:
            if t_b >= 0:
                if self.k == self.K:
                    pbatch, _, dpred = self._pending
                    if pbatch != t_b:
                        raise ProtocolError("top-module forward/backward skew")
                    gout = dpred
                else:
                    if grad_msg is None:
                        raise ProtocolError(
                            f"module {self.k} missing gradient for batch {t_b}")
                    if grad_msg.batch_index != t_b:
                        raise ProtocolError(
                            f"module {self.k} expected gradient for batch "
                            f"{t_b}, got {grad_msg.batch_index}")
                    gout = grad_msg.payload
                g_in = self._backward(t_b, gout)
                if self.emits_gradient_at(t_b):
                    grad_out = GradientMsg(t_b, g_in)
            else:
                self.acc.add_skipped(t_b)
            if u % M == M - 1:
                self._update(u)
        return act_out, grad_out

    def check_drained(self):
        if self.stash:
            raise ProtocolError(
                f"module {self.k} ended with {len(self.stash)} stashed contexts")
        if self.acc.count != 0:
            raise ProtocolError(
                f"module {self.k} ended with an open accumulator")
        if self.version != self.cfg.updates:
            raise ProtocolError(
                f"module {self.k} performed {self.version} updates, "
                f"expected {self.cfg.updates}")


def build_workers(cfg: TrainConfig):
    states = init_states(cfg.layers, cfg.seed, cfg.init_scale)
    return [ModuleWorker(k, cfg, states) for k in range(1, cfg.K + 1)]


def _check_dataset(cfg: TrainConfig, dataset: Dataset):
    if dataset.dim != cfg.layers[0].in_dim:
        raise ConfigError(
            f"dataset dim {dataset.dim} != first layer in_dim "
            f"{cfg.layers[0].in_dim}")


def _assemble(cfg: TrainConfig, workers, mode: str, wall: float) -> RunTrace:
    done = min(len(w.update_records) for w in workers)
    top = workers[-1]
    updates = []
    diverged = any(w.diverged for w in workers)
    reason = next((w.divergence_reason for w in workers if w.diverged), None)
    for s in range(done):
        recs = [w.update_records[s] for w in workers]
        tick, loss = top.loss_records[s]
        norm = global_grad_norm([r.sumsq for r in recs])
        updates.append(UpdateRecord(
            s, tick, loss, norm, {w.k: r.slots for w, r in zip(workers, recs)}))
        if norm > cfg.divergence_limit or not np.isfinite(norm):
            diverged = True
            reason = reason or f"global gradient norm {norm!r} at update {s + 1}"
            updates = updates[: s + 1]
            break
    trace = RunTrace(mode, cfg.K, cfg.ga_steps, updates,
                     diverged=diverged, divergence_reason=reason,
                     wall_time=wall)
    if cfg.record_params and not diverged:
        trace.params = [
            np.concatenate([p.ravel() for w in workers
                            for p in w.snapshots[v]] or [np.zeros(0)])
            for v in range(done + 1)]
    if cfg.record_grads and not diverged:
        trace.grads = [
            np.concatenate([w.update_records[s].avg_flat for w in workers])
            for s in range(done)]
    if cfg.trace_ticks:
        order = {"forward": 0, "backward": 1, "update": 2}
        evs = [e for w in workers for e in w.events]
        trace.events = sorted(evs, key=lambda e: (e.tick, e.module,
                                                  order[e.kind]))
    return trace


def run_clocked(cfg: TrainConfig, dataset: Dataset) -> RunTrace:
    """Single-process reference execution of the pipeline clock."""
    _check_dataset(cfg, dataset)
    workers = build_workers(cfg)
    K, MS = cfg.K, cfg.total_batches
    act_mail = {k: None for k in range(2, K + 1)}   # k receives from k-1
    grad_mail = {k: None for k in range(1, K)}      # k receives from k+1
    stop = False
    with StopWatch() as sw, np.errstate(over="ignore", invalid="ignore"):
        for tick in range(MS + 2 * (K - 1)):
            next_act = dict.fromkeys(act_mail, None)
            next_grad = dict.fromkeys(grad_mail, None)
            for w in workers:
                u = tick - (w.k - 1)
                if u < 0 or u >= MS:
                    continue
                fwd_x = target = None
                if w.expects_forward(u):
                    if w.k == 1:
                        fwd_x, _ = sample_batch(dataset, cfg.batch_size,
                                                cfg.sampler_seed, u)
                    else:
                        msg = act_mail[w.k]
                        act_mail[w.k] = None
                        if msg is None or msg.batch_index != u:
                            raise ProtocolError(
                                f"module {w.k} missing activation {u}")
                        fwd_x = msg.payload
                    if w.k == K:
                        _, target = sample_batch(dataset, cfg.batch_size,
                                                 cfg.sampler_seed, u)
                grad_msg = None
                if w.expects_gradient(u):
                    grad_msg = grad_mail[w.k]
                    grad_mail[w.k] = None
                act_out, grad_out = w.process_slot(u, fwd_x, grad_msg, target)
                if act_out is not None:
                    next_act[w.k + 1] = act_out
                if grad_out is not None:
                    next_grad[w.k - 1] = grad_out
                if w.diverged:
                    stop = True
            if stop:
                break
            for k, v in act_mail.items():
                if v is not None:
                    raise ProtocolError(f"unconsumed activation at module {k}")
            for k, v in grad_mail.items():
                if v is not None:
                    raise ProtocolError(f"unconsumed gradient at module {k}")
            act_mail, grad_mail = next_act, next_grad
    if not stop:
        for w in workers:
            w.check_drained()
    return _assemble(cfg, workers, "adl-clocked", sw.elapsed)


class _Edge:
    """Bounded FIFO between adjacent modules with stop-aware blocking."""

    def __init__(self, capacity: int, stop: threading.Event,
                 timeout: float):
        self.q = queue.Queue(maxsize=capacity)
        self.stop = stop
        self.timeout = timeout

    def put(self, item):
        waited = 0.0
        while not self.stop.is_set():
            try:
                self.q.put(item, timeout=0.05)
                return
            except queue.Full:
                waited += 0.05
                if waited >= self.timeout:
                    raise ProtocolError("deadlock: queue full too long")

    def get(self):
        waited = 0.0
        while not self.stop.is_set():
            try:
                return self.q.get(timeout=0.05)
            except queue.Empty:
                waited += 0.05
                if waited >= self.timeout:
                    raise ProtocolError("deadlock: queue empty too long")
        return None


def run_parallel(cfg: TrainConfig, dataset: Dataset,
                 deadlock_timeout: float = 60.0) -> RunTrace:
    """One thread per module, bounded FIFO edges, no global clock.

    Produces the same trace as run_clocked bit for bit: message order on
    every edge is fixed by batch index, and each worker executes the
    identical operation sequence.
    """
    _check_dataset(cfg, dataset)
    workers = build_workers(cfg)
    K, MS = cfg.K, cfg.total_batches
    stop = threading.Event()
    capacity = max(2, 2 * K)
    act_edges = {k: _Edge(capacity, stop, deadlock_timeout)
                 for k in range(2, K + 1)}
    grad_edges = {k: _Edge(capacity, stop, deadlock_timeout)
                  for k in range(1, K)}
    errors = {}

    def drive(w: ModuleWorker):
        try:
            np.seterr(over="ignore", invalid="ignore")  # thread-local
            for u in range(MS):
                if stop.is_set():
                    return
                fwd_x = target = None
                if w.expects_forward(u):
                    if w.k == 1:
                        fwd_x, _ = sample_batch(dataset, cfg.batch_size,
                                                cfg.sampler_seed, u)
                    else:
                        msg = act_edges[w.k].get()
                        if msg is None:
                            return
                        if msg.batch_index != u:
                            raise ProtocolError(
                                f"module {w.k} expected activation {u}, "
                                f"got {msg.batch_index}")
                        fwd_x = msg.payload
                    if w.k == K:
                        _, target = sample_batch(dataset, cfg.batch_size,
                                                 cfg.sampler_seed, u)
                grad_msg = None
                if w.expects_gradient(u):
                    grad_msg = grad_edges[w.k].get()
                    if grad_msg is None:
                        return
                act_out, grad_out = w.process_slot(u, fwd_x, grad_msg, target)
                if act_out is not None:
                    act_edges[w.k + 1].put(act_out)
                if grad_out is not None:
                    grad_edges[w.k - 1].put(grad_out)
                if w.diverged:
                    stop.set()
                    return
        except BaseException as exc:  # noqa: BLE001 - ferried to the caller
            errors[w.k] = exc
            stop.set()

    threads = [threading.Thread(target=drive, args=(w,), daemon=True)
               for w in workers]
    with StopWatch() as sw:
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    if errors:
        raise errors[min(errors)]
    if not stop.is_set():
        for w in workers:
            w.check_drained()
    return _assemble(cfg, workers, "adl-parallel", sw.elapsed)
