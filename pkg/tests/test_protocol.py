"""Key tables, node energy state machine, and session-level behavior."""

import numpy as np
import pytest

from wptsec.channel import (
    AntennaSpec,
    LeakageModel,
    LinkGeometry,
    LinkScenario,
    NoiseSpec,
    RectifierModel,
)
from wptsec.errors import TableCapacityError, TableExhausted
from wptsec.monitor import ACCEPTED, REJECTED_NO_SIGNAL, REJECTED_REPLAY, REJECTED_UNKNOWN_KEY
from wptsec.protocol import (
    Attacker,
    MonitorConfig,
    NodeState,
    PvkTable,
    fresh_session_scenario,
    generate_table,
    next_key,
    node_step,
    run_session,
)

# flat 20% efficiency makes hand energy math easy: -10 dBm in -> 20 uW DC
FLAT_RECT = RectifierModel(efficiency_curve=((-60.0, 0.2), (60.0, 0.2)))


def anechoic_scenario(seed=0, **overrides) -> LinkScenario:
    params = dict(
        name="anechoic",
        topology="radiated",
        p_tx_dbm=15.0,
        frequency_hz=868e6,
        rect=RectifierModel(),
        leakage=LeakageModel.coupling(-57.0, 15.0),
        noise=NoiseSpec(-90.0, seed),
        src_tx=AntennaSpec(2.5),
        node_antenna=AntennaSpec(9.2),
        mon_rx=AntennaSpec(9.2),
        dl=LinkGeometry(3.4, 868e6),
        ul=LinkGeometry(3.4, 868e6),
    )
    params.update(overrides)
    return LinkScenario(**params)


def session_parts(n_keys=8, seed=0):
    table = generate_table(n_keys, 2, rng_seed=seed)
    node = NodeState(table=table)
    monitor = MonitorConfig(table=table.copy())
    return node, monitor


class TestPvkTable:
    def test_generate_deterministic(self):
        a = generate_table(50, 2, rng_seed=9)
        b = generate_table(50, 2, rng_seed=9)
        assert a.entries == b.entries
        c = generate_table(50, 2, rng_seed=10)
        assert a.entries != c.entries

    def test_thousand_distinct_two_byte_codes(self):
        table = generate_table(1000, 2, rng_seed=4)
        assert len(set(table.entries)) == 1000

    def test_capacity_error(self):
        with pytest.raises(TableCapacityError):
            generate_table(70_000, 2, rng_seed=0)

    def test_argument_bounds(self):
        with pytest.raises(ValueError):
            generate_table(0, 2, rng_seed=0)
        with pytest.raises(ValueError):
            generate_table(1, 0, rng_seed=0)
        with pytest.raises(ValueError):
            generate_table(1, 65, rng_seed=0)

    def test_cursor_policy(self):
        table = PvkTable(entries=[b"\x01", b"\x02", b"\x03"])
        assert next_key(table) == (0, b"\x01")
        assert next_key(table) == (0, b"\x01")  # peek does not consume
        table.mark_used(0)
        assert next_key(table) == (1, b"\x02")
        table.mark_used(2)  # out-of-order use keeps the cursor at 1
        assert next_key(table) == (1, b"\x02")
        table.mark_used(1)
        with pytest.raises(TableExhausted):
            next_key(table)

    def test_entries_unique_and_sized(self):
        with pytest.raises(ValueError):
            PvkTable(entries=[b"\x01", b"\x01"])
        with pytest.raises(ValueError):
            PvkTable(entries=[b""])

    def test_copy_is_independent(self):
        table = PvkTable(entries=[b"\x01", b"\x02"])
        clone = table.copy()
        table.mark_used(0)
        assert not clone.is_used(0)
        assert clone.cursor == 0


class TestNodeStep:
    def test_zero_efficiency_never_wakes(self):
        rect = RectifierModel(efficiency_curve=((-60.0, 0.0), (60.0, 0.0)))
        node = NodeState(table=PvkTable(entries=[b"\x01\x02"]))
        for _ in range(100):
            step = node_step(node, 0.01, -10.0, rect)
            assert step.frame is None
        assert node.stored_energy_j == 0.0

    def test_wakes_after_half_second(self):
        # 20 uW harvest vs 10 uJ threshold: E = P*t crosses at t = 0.5 s
        node = NodeState(table=PvkTable(entries=[b"\x01\x02"]))
        dt = 0.01
        t = 0.0
        step = None
        while step is None or step.frame is None:
            step = node_step(node, dt, -10.0, FLAT_RECT)
            t += dt
        assert t == pytest.approx(0.5, abs=dt + 1e-12)

    def test_frame_cost_debit(self):
        node = NodeState(
            table=PvkTable(entries=[b"\x01\x02"]),
            stored_energy_j=9.99e-6,
            tx_cost_j_per_bit=1e-9,
        )
        step = node_step(node, 1.0, -10.0, FLAT_RECT, bit_rate_hz=20e3)
        assert step.frame is not None
        assert step.frame.n_bits == 40
        assert step.tx_cost_j == node.tx_cost_j_per_bit * 40
        assert step.backscatter_time_s == pytest.approx(40 / 20e3, rel=1e-12)

    def test_capacity_clamp_and_ledger(self):
        node = NodeState(
            table=PvkTable(entries=[b"\x01\x02"]),
            stored_energy_j=99.9e-6,
            storage_capacity_j=100e-6,
            wake_threshold_j=150e-6,  # unreachable: clamped below threshold
        )
        step = node_step(node, 100.0, -10.0, FLAT_RECT)
        assert node.stored_energy_j == 100e-6
        assert step.harvested_j == pytest.approx(0.1e-6, rel=1e-9)
        assert step.frame is None

    def test_table_exhausted_at_wake(self):
        table = PvkTable(entries=[b"\x01\x02"], used=[True])
        node = NodeState(table=table, stored_energy_j=50e-6)
        with pytest.raises(TableExhausted):
            node_step(node, 0.01, -10.0, FLAT_RECT)

    def test_random_key_policy_draws_unused(self):
        table = generate_table(16, 2, rng_seed=3)
        node = NodeState(table=table, stored_energy_j=50e-6)
        rng = np.random.default_rng(5)
        step = node_step(node, 0.01, -10.0, FLAT_RECT, key_policy="random", key_rng=rng)
        assert step.frame is not None
        assert table.is_used(step.key_index)


class TestRunSession:
    def test_legitimate_session_accepted(self):
        node, monitor = session_parts()
        log = run_session(anechoic_scenario(seed=42), node, Attacker(), monitor)
        assert log.final.verdict == ACCEPTED
        assert log.final.decode.payload == log.emitted_code
        assert log.emitted_key_index == 0
        assert monitor.table.is_used(0) and node.table.is_used(0)

    def test_replay_attacker_rejected_second_time(self):
        node, monitor = session_parts()
        log = run_session(anechoic_scenario(seed=43), node, Attacker(kind="replay"), monitor)
        assert [d.verdict for d in log.decisions] == [ACCEPTED, REJECTED_REPLAY]

    def test_disabled_modulation_no_signal(self):
        scenario = anechoic_scenario(
            seed=44, rect=RectifierModel(gamma_low_db=-20.0, gamma_high_db=-20.0)
        )
        node, monitor = session_parts()
        log = run_session(scenario, node, Attacker(), monitor)
        assert log.final.verdict == REJECTED_NO_SIGNAL

    def test_unknown_key_rejected(self):
        node, _ = session_parts(seed=1)
        foreign = MonitorConfig(table=generate_table(8, 2, rng_seed=2024))
        log = run_session(anechoic_scenario(seed=45), node, Attacker(), foreign)
        assert log.final.verdict == REJECTED_UNKNOWN_KEY

    def test_energy_conservation_exact(self):
        node, monitor = session_parts()
        scenario = anechoic_scenario(seed=46)
        for i in range(5):
            log = run_session(fresh_session_scenario(scenario, 100 + i), node, Attacker(), monitor)
            start = log.energy_trace[0][1]
            end = log.energy_trace[-1][1]
            assert abs(end - (start + log.total_harvested_j - log.total_tx_cost_j)) <= 1e-12

    def test_backscatter_occupancy_fraction(self):
        node, monitor = session_parts()
        log = run_session(anechoic_scenario(seed=47), node, Attacker(), monitor)
        assert log.backscatter_time_s / log.duration_s < 1e-3

    def test_timeline_strictly_increasing(self):
        node, monitor = session_parts()
        log = run_session(anechoic_scenario(seed=48), node, Attacker(kind="replay"), monitor)
        times = [e.time_s for e in log.events]
        assert all(b > a for a, b in zip(times, times[1:]))

    def test_wake_timeout_when_unpowered(self):
        scenario = anechoic_scenario(
            seed=49, rect=RectifierModel(efficiency_curve=((-60.0, 0.0), (60.0, 0.0)))
        )
        node, monitor = session_parts()
        log = run_session(scenario, node, Attacker(), monitor, max_time_s=0.5)
        assert log.final.verdict == REJECTED_NO_SIGNAL
        assert any(e.event == "wake_timeout" for e in log.events)

    def test_immediate_timeout_keeps_timeline_strict(self):
        node, monitor = session_parts()
        log = run_session(
            anechoic_scenario(seed=53), node, Attacker(), monitor, max_time_s=1e-6
        )
        assert log.final.verdict == REJECTED_NO_SIGNAL
        times = [e.time_s for e in log.events]
        assert all(b > a for a, b in zip(times, times[1:]))

    def test_session_determinism(self):
        a_node, a_mon = session_parts()
        b_node, b_mon = session_parts()
        log_a = run_session(anechoic_scenario(seed=50), a_node, Attacker(), a_mon)
        log_b = run_session(anechoic_scenario(seed=50), b_node, Attacker(), b_mon)
        assert log_a.format_records() == log_b.format_records()
        assert np.array_equal(log_a.trace.samples, log_b.trace.samples)

    def test_random_key_policy_session(self):
        node, monitor = session_parts(n_keys=32)
        log = run_session(
            anechoic_scenario(seed=51), node, Attacker(), monitor, key_policy="random"
        )
        assert log.final.verdict == ACCEPTED

    def test_record_field_names(self):
        node, monitor = session_parts()
        log = run_session(anechoic_scenario(seed=52), node, Attacker(), monitor)
        verify_lines = [r for r in log.format_records() if "event=verify" in r]
        assert verify_lines and all(
            "time_s=" in r and "verdict=" in r and "measured_dr_db=" in r for r in verify_lines
        )
        start = log.format_records()[0]
        assert start.startswith("time_s=0.0 event=session_start stored_energy_j=")


class TestStateValidation:
    def test_node_state_bounds(self):
        table = PvkTable(entries=[b"\x01"])
        with pytest.raises(ValueError):
            NodeState(table=table, stored_energy_j=-1.0)
        with pytest.raises(ValueError):
            NodeState(table=table, stored_energy_j=2.0, storage_capacity_j=1.0)
        with pytest.raises(ValueError):
            NodeState(table=table, mode="backscattering", stored_energy_j=0.0)

    def test_attacker_contract(self):
        with pytest.raises(ValueError):
            Attacker(kind="mitm")
        replayer = Attacker(kind="replay")
        with pytest.raises(ValueError):
            replayer.replayed_trace()

    def test_monitor_config_oversampling(self):
        with pytest.raises(ValueError):
            MonitorConfig(table=PvkTable(entries=[b"\x01"]), oversampling=4)
