"""Pipeline schedule, provenance, and the clocked runner."""
import numpy as np
import pytest

from adl import net
from adl.errors import ConfigError
from adl.optimizer import ConstantLr, SgdConfig
from adl.partition import partition_even
from adl.scheduler import TrainConfig, run_clocked, schedule_position
from adl.staleness import effective_version, module_staleness
from adl.trace import compare_traces
from adl import data


def earliest_ticks(K, max_batch):
    """Least-fixed-point schedule from the message dependencies alone.

    forward(b, k) needs forward(b, k-1) one tick earlier (activation
    hand-off) and the module free (one forward per tick); backward(b, k)
    needs backward(b, k+1) one tick earlier (gradient hand-off), its own
    forward done, and the module free.  The top module backpropagates in
    the same tick as its forward.
    """
    fwd = {}
    bwd = {}
    for b in range(max_batch + 1):
        for k in range(1, K + 1):
            lo = 0
            if k > 1:
                lo = max(lo, fwd[b, k - 1] + 1)
            if b > 0:
                lo = max(lo, fwd[b - 1, k] + 1)
            fwd[b, k] = lo
    for b in range(max_batch + 1):
        for k in range(K, 0, -1):
            lo = fwd[b, k]
            if k < K:
                lo = max(lo, bwd[b, k + 1] + 1)
            if b > 0:
                lo = max(lo, bwd[b - 1, k] + 1)
            bwd[b, k] = lo
    return fwd, bwd


def test_schedule_position_examples():
    assert schedule_position(0, 3, 3) == (2, 2)
    assert schedule_position(0, 1, 3) == (0, 4)
    for b in range(5):
        f, bk = schedule_position(b, 1, 1)
        assert f == bk == b


@pytest.mark.parametrize("K", [1, 2, 3, 4, 6])
def test_schedule_position_matches_dependency_fixpoint(K):
    fwd, bwd = earliest_ticks(K, 20)
    for b in range(21):
        for k in range(1, K + 1):
            assert schedule_position(b, k, K) == (fwd[b, k], bwd[b, k])


def test_schedule_position_validation():
    with pytest.raises(ConfigError):
        schedule_position(-1, 1, 1)
    with pytest.raises(ConfigError):
        schedule_position(0, 3, 2)


# ------------------------------------------------------------- provenance

@pytest.mark.parametrize("K", [1, 2, 3, 5])
@pytest.mark.parametrize("M", [1, 3, 4])
def test_provenance_matches_staleness_formulas(K, M, ident_case):
    cfg, ds = ident_case(K, M, S=8)
    trace = run_clocked(cfg, ds)
    assert trace.S == 8 and not trace.diverged
    for rec in trace.updates:
        for k in range(1, K + 1):
            slots = rec.slots[k]
            assert [sl.j for sl in slots] == list(range(M))
            for j, sl in enumerate(slots):
                t_b = M * rec.s + j - 2 * (K - k)
                assert sl.batch_index == t_b
                if t_b < 0:
                    assert sl.skipped
                else:
                    assert sl.version == effective_version(rec.s, j, K, k, M)
                    assert rec.s - sl.version == module_staleness(
                        rec.s, j, K, k, M)


def test_group_delay_pattern_k3_m4(ident_case):
    # module 2 of a 3-module pipeline with M=4 sees delays (1,1,0,0)
    cfg, ds = ident_case(3, 4, S=10)
    trace = run_clocked(cfg, ds)
    for rec in trace.updates[1:]:
        ds_seen = [rec.s - sl.version for sl in rec.slots[2]]
        assert ds_seen == [1, 1, 0, 0]


def test_no_accumulation_constant_delay(ident_case):
    # M=1: after pipeline fill every gradient is exactly 2*(K-k) stale
    K = 3
    cfg, ds = ident_case(K, 1, S=12)
    trace = run_clocked(cfg, ds)
    for rec in trace.updates:
        for k in range(1, K + 1):
            sl = rec.slots[k][0]
            if rec.s >= 2 * (K - k):
                assert rec.s - sl.version == 2 * (K - k)
            else:
                assert sl.skipped


def test_update_ticks_and_counts(ident_case):
    K, M, S = 3, 4, 5
    cfg, ds = ident_case(K, M, S)
    trace = run_clocked(cfg, ds)
    assert trace.S == S
    assert [rec.tick for rec in trace.updates] == [
        M * (s + 1) + K - 2 for s in range(S)]
    assert all(set(rec.slots) == {1, 2, 3} for rec in trace.updates)


def test_tick_events_example(ident_case):
    # 3-module pipeline, M=4: at tick 5 module 2 forwards batch 4 and
    # backpropagates batch 2, with no update; its first update lands at
    # tick 4 (slot 3 closes the first group)
    cfg, ds = ident_case(3, 4, S=3, trace_ticks=True)
    trace = run_clocked(cfg, ds)
    at_5 = [(e.kind, e.index) for e in trace.events
            if e.tick == 5 and e.module == 2]
    assert at_5 == [("forward", 4), ("backward", 2)]
    first_update = next((e.tick, e.index) for e in trace.events
                        if e.module == 2 and e.kind == "update")
    assert first_update == (4, 1)


def test_bootstrap_updates_are_zero_steps(spiral_case):
    # K=2, M=1: module 1's first two groups hold only skipped slots, so
    # its parameters stay at initialization through version 2
    cfg, ds = spiral_case(2, 1, S=6, record_params=True)
    trace = run_clocked(cfg, ds)
    n1 = sum(cfg.layers[i].param_count
             for i in cfg.partition.layers_of(1))
    p = trace.params
    np.testing.assert_array_equal(p[1][:n1], p[0][:n1])
    np.testing.assert_array_equal(p[2][:n1], p[0][:n1])
    assert not np.array_equal(p[3][:n1], p[0][:n1])
    # the loss-owning module is never skipped
    assert not np.array_equal(p[1][n1:], p[0][n1:])


def test_clocked_run_is_deterministic(spiral_case):
    cfg, ds = spiral_case(3, 2, S=10, record_params=True, record_grads=True)
    a = run_clocked(cfg, ds)
    b = run_clocked(cfg, ds)
    rep = compare_traces(a, b, tol=0.0)
    assert rep.passed and rep.max_param_diff == 0.0
    for ga, gb in zip(a.grads, b.grads):
        np.testing.assert_array_equal(ga, gb)


def test_momentum_and_decay_run_through_pipeline(spiral_case):
    cfg, ds = spiral_case(3, 2, S=8, sgd=SgdConfig(momentum=0.9,
                                                   weight_decay=1e-3))
    trace = run_clocked(cfg, ds)
    assert trace.S == 8 and not trace.diverged


def test_divergence_stops_run_with_partial_trace(spiral_case):
    cfg, ds = spiral_case(2, 1, S=60, lr=2000.0)
    trace = run_clocked(cfg, ds)
    assert trace.diverged
    assert trace.divergence_reason
    assert 0 < trace.S < 60


def test_loss_matches_full_batch_reference(spiral_case):
    # the recorded loss of update s is the top module's forward loss of
    # the group-closing batch, evaluated on version-s parameters: recompute
    # it from the snapshot history
    cfg, ds = spiral_case(3, 2, S=6, record_params=True)
    trace = run_clocked(cfg, ds)
    sizes = [spec.param_count for spec in cfg.layers]
    offsets = np.cumsum([0] + sizes)
    for rec in trace.updates:
        t_close = cfg.ga_steps * (rec.s + 1) - 1
        x, y = data.sample_batch(ds, cfg.batch_size, cfg.sampler_seed,
                                 t_close)
        flat = trace.params[rec.s]
        states = [net.LayerState(flat[offsets[i]:offsets[i + 1]])
                  for i in range(len(cfg.layers))]
        loss, _ = net.net_forward(cfg.layers, states, x, cfg.loss, y)
        assert loss == rec.loss  # bit-identical


def test_config_validation():
    specs = [net.affine(2, 3), net.affine(4, 1)]
    with pytest.raises(ConfigError):
        TrainConfig(specs, partition_even(2, 1), net.MSE, 1, 4, 1,
                    ConstantLr(0.1))
    good = [net.affine(2, 3), net.affine(3, 1)]
    with pytest.raises(ConfigError):
        TrainConfig(good, partition_even(3, 1), net.MSE, 1, 4, 1,
                    ConstantLr(0.1))
    with pytest.raises(ConfigError):
        TrainConfig(good, partition_even(2, 1), "hinge", 1, 4, 1,
                    ConstantLr(0.1))
    with pytest.raises(ConfigError):
        TrainConfig(good, partition_even(2, 1), net.MSE, 0, 4, 1,
                    ConstantLr(0.1))
    cfg = TrainConfig(good, partition_even(2, 1), net.MSE, 1, 4, 1,
                      ConstantLr(0.1))
    with pytest.raises(ConfigError):
        run_clocked(cfg, data.gen_linreg(8, 5, 0.0, 0))
