"""Scenario configuration: flat key=value text with section prefixes.

Two presets populate every parameter (``anechoic`` radiated setup and
``wired`` circulator bench); ``custom`` requires every applicable key to be
explicit. Unknown keys are rejected loudly, since a typo in an RF parameter
would otherwise produce plausible-but-wrong physics.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

from .channel import (
    DEFAULT_EFFICIENCY_CURVE,
    AntennaSpec,
    LeakageModel,
    LinkGeometry,
    LinkScenario,
    NoiseSpec,
    RectifierModel,
)
from .errors import ParseError, ValidationError
from .protocol import (
    DEFAULT_DT_S,
    DEFAULT_STORAGE_CAPACITY_J,
    DEFAULT_TX_COST_J_PER_BIT,
    DEFAULT_WAKE_THRESHOLD_J,
    MonitorConfig,
    NodeState,
    PvkTable,
    generate_table,
)


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully resolved experiment description."""

    setup: str
    seed: int
    topology: str | None
    p_tx_dbm: float | None
    frequency_hz: float | None
    distance_dl_m: float | None
    distance_ul_m: float | None
    gain_src_dbi: float | None
    gain_node_dbi: float | None
    gain_mon_dbi: float | None
    gamma_low_db: float | None
    gamma_high_db: float | None
    efficiency_curve: tuple[tuple[float, float], ...] | None
    load_ohms: float | None
    leakage_kind: str | None
    circulator_isolation_db: float | None
    coupling_floor_dbm: float | None
    coupling_ref_tx_dbm: float | None
    noise_power_dbm: float | None
    bit_rate_hz: float | None
    oversampling: int | None
    probe_bits: int | None
    protocol_enabled: bool | None
    n_keys: int | None
    key_len_bytes: int | None
    key_policy: str | None
    storage_capacity_j: float | None
    wake_threshold_j: float | None
    tx_cost_j_per_bit: float | None
    dt_s: float | None
    max_time_s: float | None
    attacker: str | None
    sweep_param: str | None
    sweep_values: tuple[float, ...] | None

    def with_override(self, key: str, value: float) -> "ScenarioConfig":
        """Copy with one scalar config key replaced (used by sweeps)."""
        attr, kind = _SCALAR_KEYS[key]
        coerced = int(value) if kind == "int" else float(value)
        return dataclasses.replace(self, **{attr: coerced})


# key -> (attribute, kind); kind drives conversion and sweepability.
# Kinds: float, int, bool, choice:<a|b|..>, curve, floats, str
_SCHEMA: dict[str, tuple[str, str]] = {
    "setup": ("setup", "choice:wired|anechoic|custom"),
    "seed": ("seed", "int"),
    "channel.topology": ("topology", "choice:radiated|wired"),
    "channel.p_tx_dbm": ("p_tx_dbm", "float"),
    "channel.frequency_hz": ("frequency_hz", "float"),
    "channel.distance_dl_m": ("distance_dl_m", "float"),
    "channel.distance_ul_m": ("distance_ul_m", "float"),
    "channel.gain_src_dbi": ("gain_src_dbi", "float"),
    "channel.gain_node_dbi": ("gain_node_dbi", "float"),
    "channel.gain_mon_dbi": ("gain_mon_dbi", "float"),
    "channel.gamma_low_db": ("gamma_low_db", "float"),
    "channel.gamma_high_db": ("gamma_high_db", "float"),
    "channel.efficiency_curve": ("efficiency_curve", "curve"),
    "channel.load_ohms": ("load_ohms", "float"),
    "channel.leakage_kind": ("leakage_kind", "choice:circulator|coupling"),
    "channel.circulator_isolation_db": ("circulator_isolation_db", "float"),
    "channel.coupling_floor_dbm": ("coupling_floor_dbm", "float"),
    "channel.coupling_ref_tx_dbm": ("coupling_ref_tx_dbm", "float"),
    "channel.noise_power_dbm": ("noise_power_dbm", "float"),
    "waveform.bit_rate_hz": ("bit_rate_hz", "float"),
    "waveform.oversampling": ("oversampling", "int"),
    "waveform.probe_bits": ("probe_bits", "int"),
    "protocol.enabled": ("protocol_enabled", "bool"),
    "protocol.n_keys": ("n_keys", "int"),
    "protocol.key_len_bytes": ("key_len_bytes", "int"),
    "protocol.key_policy": ("key_policy", "choice:sequential|random"),
    "protocol.storage_capacity_j": ("storage_capacity_j", "float"),
    "protocol.wake_threshold_j": ("wake_threshold_j", "float"),
    "protocol.tx_cost_j_per_bit": ("tx_cost_j_per_bit", "float"),
    "protocol.dt_s": ("dt_s", "float"),
    "protocol.max_time_s": ("max_time_s", "float"),
    "protocol.attacker": ("attacker", "choice:none|replay"),
    "sweep.param": ("sweep_param", "str"),
    "sweep.values": ("sweep_values", "floats"),
}

_SCALAR_KEYS = {k: (a, t) for k, (a, t) in _SCHEMA.items() if t in ("float", "int")}
_ATTR_FOR_KEY = {k: a for k, (a, _) in _SCHEMA.items()}

# Keys every custom config must set, before topology/leakage conditionals.
_BASE_REQUIRED = [
    "seed",
    "channel.topology",
    "channel.p_tx_dbm",
    "channel.frequency_hz",
    "channel.gamma_low_db",
    "channel.gamma_high_db",
    "channel.efficiency_curve",
    "channel.load_ohms",
    "channel.leakage_kind",
    "channel.noise_power_dbm",
    "waveform.bit_rate_hz",
    "waveform.oversampling",
    "waveform.probe_bits",
    "protocol.enabled",
    "protocol.n_keys",
    "protocol.key_len_bytes",
    "protocol.key_policy",
    "protocol.storage_capacity_j",
    "protocol.wake_threshold_j",
    "protocol.tx_cost_j_per_bit",
    "protocol.dt_s",
    "protocol.max_time_s",
    "protocol.attacker",
]
_RADIATED_KEYS = [
    "channel.distance_dl_m",
    "channel.distance_ul_m",
    "channel.gain_src_dbi",
    "channel.gain_node_dbi",
    "channel.gain_mon_dbi",
]

_COMMON_DEFAULTS = dict(
    seed=0,
    gamma_low_db=-20.0,
    gamma_high_db=-3.0,
    efficiency_curve=DEFAULT_EFFICIENCY_CURVE,
    load_ohms=10e3,
    noise_power_dbm=-90.0,
    oversampling=16,
    probe_bits=64,
    n_keys=16,
    key_len_bytes=2,
    key_policy="sequential",
    storage_capacity_j=DEFAULT_STORAGE_CAPACITY_J,
    wake_threshold_j=DEFAULT_WAKE_THRESHOLD_J,
    tx_cost_j_per_bit=DEFAULT_TX_COST_J_PER_BIT,
    dt_s=DEFAULT_DT_S,
    max_time_s=30.0,
    attacker="none",
    sweep_param=None,
    sweep_values=None,
)

PRESETS: dict[str, dict] = {
    # Three-antenna radiated setup: +15 dBm at 868 MHz over 3.4 m, residual
    # antenna coupling calibrated to -57 dBm at the +15 dBm reference.
    "anechoic": dict(
        _COMMON_DEFAULTS,
        topology="radiated",
        p_tx_dbm=15.0,
        frequency_hz=868e6,
        distance_dl_m=3.4,
        distance_ul_m=3.4,
        gain_src_dbi=2.5,
        gain_node_dbi=9.2,
        gain_mon_dbi=9.2,
        leakage_kind="coupling",
        circulator_isolation_db=None,
        coupling_floor_dbm=-57.0,
        coupling_ref_tx_dbm=15.0,
        bit_rate_hz=20e3,
        protocol_enabled=True,
    ),
    # Circulator bench: -15 dBm CW at 876 MHz straight into the rectifier,
    # 20 dB minimum isolation, 100 kHz modulation, level measurement only.
    "wired": dict(
        _COMMON_DEFAULTS,
        topology="wired",
        p_tx_dbm=-15.0,
        frequency_hz=876e6,
        distance_dl_m=None,
        distance_ul_m=None,
        gain_src_dbi=None,
        gain_node_dbi=None,
        gain_mon_dbi=None,
        leakage_kind="circulator",
        circulator_isolation_db=20.0,
        coupling_floor_dbm=None,
        coupling_ref_tx_dbm=None,
        bit_rate_hz=100e3,
        protocol_enabled=False,
    ),
}

PRESET_SUMMARIES = {
    "anechoic": "radiated 3-antenna setup: +15 dBm TX, 868 MHz, 3.4 m hops, "
    "coupling floor -57 dBm @ +15 dBm, 20 kHz keyed sessions",
    "wired": "circulator bench: -15 dBm CW, 876 MHz, 20 dB isolation, "
    "100 kHz modulation, dynamic-range measurement only",
}


def _convert(key: str, kind: str, raw: str):
    if kind == "float":
        value = float(raw)
        if math.isnan(value):
            raise ValueError("nan is not a valid value")
        return value
    if kind == "int":
        return int(raw)
    if kind == "bool":
        lowered = raw.lower()
        if lowered not in ("true", "false"):
            raise ValueError(f"expected true/false, got {raw!r}")
        return lowered == "true"
    if kind.startswith("choice:"):
        choices = kind.split(":", 1)[1].split("|")
        if raw not in choices:
            raise ValueError(f"expected one of {choices}, got {raw!r}")
        return raw
    if kind == "curve":
        pairs = []
        for chunk in raw.split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            p, _, e = chunk.partition(":")
            pairs.append((float(p), float(e)))
        if not pairs:
            raise ValueError("efficiency curve needs at least one p_dbm:eta pair")
        return tuple(pairs)
    if kind == "floats":
        values = tuple(float(v) for v in raw.split(",") if v.strip())
        if not values:
            raise ValueError("expected a comma-separated list of numbers")
        return values
    return raw  # plain str


def _parse_pairs(text: str) -> dict[str, tuple[str, int]]:
    """Raw key -> (value, line number), with strict syntax/key checks."""
    pairs: dict[str, tuple[str, int]] = {}
    problems: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            problems.append(f"line {lineno}: expected 'key = value', got {stripped!r}")
            continue
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in pairs:
            problems.append(f"line {lineno}: duplicate key {key!r}")
            continue
        pairs[key] = (value, lineno)
    if problems:
        raise ParseError("; ".join(problems))
    return pairs


def _validate(values: dict) -> list[str]:
    """Collect every schema violation for the resolved value dict."""
    bad: list[str] = []

    def missing(key: str) -> bool:
        return values.get(_ATTR_FOR_KEY[key]) is None

    def forbid(key: str, why: str) -> None:
        if not missing(key):
            bad.append(f"{key}: not applicable {why}")

    for key in _BASE_REQUIRED:
        if missing(key):
            bad.append(f"{key}: missing")

    topology = values.get("topology")
    if topology == "radiated":
        for key in _RADIATED_KEYS:
            if missing(key):
                bad.append(f"{key}: missing (required for radiated topology)")
    elif topology == "wired":
        for key in _RADIATED_KEYS:
            forbid(key, "to wired topology")

    kind = values.get("leakage_kind")
    if kind == "circulator":
        if missing("channel.circulator_isolation_db"):
            bad.append("channel.circulator_isolation_db: missing (required for circulator)")
        forbid("channel.coupling_floor_dbm", "to circulator leakage")
        forbid("channel.coupling_ref_tx_dbm", "to circulator leakage")
    elif kind == "coupling":
        for key in ("channel.coupling_floor_dbm", "channel.coupling_ref_tx_dbm"):
            if missing(key):
                bad.append(f"{key}: missing (required for coupling)")
        forbid("channel.circulator_isolation_db", "to coupling leakage")

    def check(cond: bool, msg: str) -> None:
        if not cond:
            bad.append(msg)

    if values.get("bit_rate_hz") is not None:
        check(0 < values["bit_rate_hz"] <= 100e3, "waveform.bit_rate_hz: must be in (0, 100000]")
    if values.get("oversampling") is not None:
        check(values["oversampling"] >= 8, "waveform.oversampling: must be >= 8")
    if values.get("probe_bits") is not None:
        check(values["probe_bits"] >= 2, "waveform.probe_bits: must be >= 2")
    if values.get("n_keys") is not None:
        check(values["n_keys"] >= 1, "protocol.n_keys: must be >= 1")
    if values.get("key_len_bytes") is not None:
        check(1 <= values["key_len_bytes"] <= 64, "protocol.key_len_bytes: must be in [1, 64]")
    for key in ("protocol.dt_s", "protocol.max_time_s", "channel.frequency_hz"):
        v = values.get(_ATTR_FOR_KEY[key])
        if v is not None:
            check(v > 0, f"{key}: must be > 0")

    sweep_param = values.get("sweep_param")
    sweep_values = values.get("sweep_values")
    if sweep_param is not None:
        if sweep_param not in _SCALAR_KEYS:
            bad.append(f"sweep.param: {sweep_param!r} is not a sweepable scalar key")
        if sweep_values is None:
            bad.append("sweep.values: missing (required when sweep.param is set)")
    elif sweep_values is not None:
        bad.append("sweep.param: missing (required when sweep.values is set)")
    return bad


def load_config(source: str | Path) -> ScenarioConfig:
    """Parse config text (or a file path) into a validated ScenarioConfig."""
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    elif "\n" in source or "=" in source:
        text = source
    else:
        path = Path(source)
        if not path.exists():
            raise ParseError(f"config source {source!r} is not a file and not key=value text")
        text = path.read_text(encoding="utf-8")

    pairs = _parse_pairs(text)
    if "setup" not in pairs:
        raise ValidationError(["setup: missing"])
    setup_raw, setup_line = pairs.pop("setup")
    try:
        setup = _convert("setup", _SCHEMA["setup"][1], setup_raw)
    except ValueError as exc:
        raise ParseError(f"line {setup_line}: setup: {exc}") from None

    values: dict = {a: None for _, (a, _) in _SCHEMA.items()}
    values.update(PRESETS.get(setup, {}))
    values["setup"] = setup

    conversion_problems = []
    for key, (raw, lineno) in pairs.items():
        attr, kind = _SCHEMA[key]
        try:
            values[attr] = _convert(key, kind, raw)
        except ValueError as exc:
            conversion_problems.append(f"line {lineno}: {key}: {exc}")
    if conversion_problems:
        raise ParseError("; ".join(conversion_problems))

    violations = _validate(values)
    if violations:
        raise ValidationError(violations)
    return ScenarioConfig(**values)


def load_preset(name: str) -> ScenarioConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return load_config(f"setup={name}")


# --- builders ----------------------------------------------------------------


def build_scenario(cfg: ScenarioConfig, noise_seed: int | None = None) -> LinkScenario:
    """LinkScenario for this config; noise_seed overrides cfg.seed."""
    rect = RectifierModel(
        gamma_low_db=cfg.gamma_low_db,
        gamma_high_db=cfg.gamma_high_db,
        efficiency_curve=cfg.efficiency_curve,
        load_ohms=cfg.load_ohms,
    )
    if cfg.leakage_kind == "circulator":
        leakage = LeakageModel.circulator(cfg.circulator_isolation_db)
    else:
        leakage = LeakageModel.coupling(cfg.coupling_floor_dbm, cfg.coupling_ref_tx_dbm)
    noise = NoiseSpec(
        noise_power_dbm=cfg.noise_power_dbm,
        rng_seed=cfg.seed if noise_seed is None else noise_seed,
    )
    if cfg.topology == "wired":
        return LinkScenario(
            name=cfg.setup,
            topology="wired",
            p_tx_dbm=cfg.p_tx_dbm,
            frequency_hz=cfg.frequency_hz,
            rect=rect,
            leakage=leakage,
            noise=noise,
        )
    return LinkScenario(
        name=cfg.setup,
        topology="radiated",
        p_tx_dbm=cfg.p_tx_dbm,
        frequency_hz=cfg.frequency_hz,
        rect=rect,
        leakage=leakage,
        noise=noise,
        src_tx=AntennaSpec(cfg.gain_src_dbi),
        node_antenna=AntennaSpec(cfg.gain_node_dbi),
        mon_rx=AntennaSpec(cfg.gain_mon_dbi),
        dl=LinkGeometry(cfg.distance_dl_m, cfg.frequency_hz),
        ul=LinkGeometry(cfg.distance_ul_m, cfg.frequency_hz),
    )


def build_tables(cfg: ScenarioConfig) -> tuple[PvkTable, PvkTable]:
    """Identical provisioned tables for the node and the monitor side."""
    table = generate_table(cfg.n_keys, cfg.key_len_bytes, cfg.seed)
    return table, table.copy()


def build_node(cfg: ScenarioConfig, table: PvkTable) -> NodeState:
    return NodeState(
        table=table,
        storage_capacity_j=cfg.storage_capacity_j,
        wake_threshold_j=cfg.wake_threshold_j,
        tx_cost_j_per_bit=cfg.tx_cost_j_per_bit,
    )


def build_monitor(cfg: ScenarioConfig, table: PvkTable) -> MonitorConfig:
    return MonitorConfig(
        table=table,
        bit_rate_hz=cfg.bit_rate_hz,
        oversampling=cfg.oversampling,
    )
