"""RF power bookkeeping for the wireless-power security link.

Everything here is a pure function of its inputs. Powers cross module
boundaries in dBm; summation happens in linear watts. Two link topologies
are supported: a circulator-based wired bench and a radiated (free-space)
three-antenna setup.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCurve, EmptyInput, NearFieldError

SPEED_OF_LIGHT_M_S = 299_792_458.0

# Calibration defaults for the two reflection states and the RF-to-DC
# conversion curve. These are overridable scenario parameters, not claims.
DEFAULT_GAMMA_LOW_DB = -20.0
DEFAULT_GAMMA_HIGH_DB = -3.0
DEFAULT_EFFICIENCY_CURVE = (
    (-20.0, 0.05),
    (-10.0, 0.20),
    (0.0, 0.40),
    (10.0, 0.50),
    (20.0, 0.55),
)
DEFAULT_LOAD_OHMS = 10e3


def dbm_to_watts(p_dbm: float) -> float:
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def watts_to_dbm(p_watts: float) -> float:
    if p_watts < 0:
        raise ValueError(f"negative power: {p_watts} W")
    if p_watts == 0.0:
        return float("-inf")
    return 10.0 * math.log10(p_watts) + 30.0


@dataclass(frozen=True)
class AntennaSpec:
    """Single-number antenna model: boresight gain in dBi."""

    gain_dbi: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.gain_dbi):
            raise ValueError(f"gain_dbi must be finite, got {self.gain_dbi}")
        if not -10.0 <= self.gain_dbi <= 30.0:
            warnings.warn(
                f"antenna gain {self.gain_dbi} dBi outside typical [-10, +30] range",
                stacklevel=2,
            )


@dataclass(frozen=True)
class LinkGeometry:
    """One hop of a radiated link: separation and carrier frequency."""

    distance_m: float
    frequency_hz: float

    def __post_init__(self) -> None:
        if self.distance_m <= 0:
            raise ValueError(f"distance_m must be > 0, got {self.distance_m}")
        if self.frequency_hz <= 0:
            raise ValueError(f"frequency_hz must be > 0, got {self.frequency_hz}")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT_M_S / self.frequency_hz

    @property
    def is_far_field(self) -> bool:
        """True when the hop is at least one wavelength long."""
        return self.distance_m >= self.wavelength_m


@dataclass(frozen=True)
class RectifierModel:
    """Behavioral model of the switchable-matching rectifier.

    The input reflection toggles between a matched state (CMD low,
    ``gamma_low_db``) and a deliberately mismatched state (CMD high,
    ``gamma_high_db``); the mismatched state reflects more, which is the
    modulation mechanism. ``efficiency_curve`` maps input power in dBm to
    RF-to-DC conversion efficiency.
    """

    gamma_low_db: float = DEFAULT_GAMMA_LOW_DB
    gamma_high_db: float = DEFAULT_GAMMA_HIGH_DB
    efficiency_curve: tuple[tuple[float, float], ...] = DEFAULT_EFFICIENCY_CURVE
    load_ohms: float = DEFAULT_LOAD_OHMS

    def __post_init__(self) -> None:
        if self.gamma_low_db > 0 or self.gamma_high_db > 0:
            raise ValueError("reflection coefficients must be <= 0 dB (passive)")
        # Equality is allowed as the degenerate disabled-modulation case.
        if self.gamma_high_db < self.gamma_low_db:
            raise ValueError(
                f"gamma_high_db ({self.gamma_high_db}) must be >= "
                f"gamma_low_db ({self.gamma_low_db})"
            )
        object.__setattr__(
            self,
            "efficiency_curve",
            tuple((float(p), float(e)) for p, e in self.efficiency_curve),
        )
        pts = self.efficiency_curve
        for (p0, _), (p1, _) in zip(pts, pts[1:]):
            if p1 <= p0:
                raise ValueError("efficiency_curve must be strictly increasing in p_in_dbm")
        for _, eta in pts:
            if not 0.0 <= eta <= 1.0:
                raise ValueError(f"efficiency {eta} outside [0, 1]")
        if self.load_ohms <= 0:
            raise ValueError(f"load_ohms must be > 0, got {self.load_ohms}")

    def gamma_db(self, cmd_high: bool) -> float:
        return self.gamma_high_db if cmd_high else self.gamma_low_db


@dataclass(frozen=True)
class LeakageModel:
    """Power reaching the monitor without the backscatter contribution.

    ``circulator`` kind models a wired bench: leakage = TX power minus the
    circulator isolation. ``coupling`` kind models residual antenna coupling
    in a radiated setup, anchored at one calibration point and scaled
    dB-for-dB with TX power.
    """

    kind: str
    circulator_isolation_db: float | None = None
    coupling_floor_dbm_at_ref: float | None = None
    ref_tx_power_dbm: float | None = None

    def __post_init__(self) -> None:
        if self.kind == "circulator":
            if self.circulator_isolation_db is None:
                raise ValueError("circulator kind requires circulator_isolation_db")
            if self.circulator_isolation_db < 0:
                raise ValueError("circulator_isolation_db must be >= 0")
            if self.coupling_floor_dbm_at_ref is not None or self.ref_tx_power_dbm is not None:
                raise ValueError("circulator kind must not set coupling parameters")
        elif self.kind == "coupling":
            if self.coupling_floor_dbm_at_ref is None or self.ref_tx_power_dbm is None:
                raise ValueError(
                    "coupling kind requires coupling_floor_dbm_at_ref and ref_tx_power_dbm"
                )
            if self.circulator_isolation_db is not None:
                raise ValueError("coupling kind must not set circulator_isolation_db")
        else:
            raise ValueError(f"unknown leakage kind: {self.kind!r}")

    @classmethod
    def circulator(cls, isolation_db: float) -> "LeakageModel":
        return cls(kind="circulator", circulator_isolation_db=isolation_db)

    @classmethod
    def coupling(cls, floor_dbm: float, ref_tx_power_dbm: float) -> "LeakageModel":
        return cls(
            kind="coupling",
            coupling_floor_dbm_at_ref=floor_dbm,
            ref_tx_power_dbm=ref_tx_power_dbm,
        )


@dataclass(frozen=True)
class NoiseSpec:
    """Additive monitor-side noise: mean floor power plus a zero-mean
    Gaussian fluctuation of the same scale on instantaneous power.

    ``noise_power_dbm = -inf`` disables noise entirely. Identical seed and
    parameters reproduce identical sample sequences.
    """

    noise_power_dbm: float = -90.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if math.isnan(self.noise_power_dbm) or self.noise_power_dbm == float("inf"):
            raise ValueError("noise_power_dbm must be finite or -inf")

    @classmethod
    def silent(cls) -> "NoiseSpec":
        return cls(noise_power_dbm=float("-inf"))

    @property
    def mean_power_w(self) -> float:
        if self.noise_power_dbm == float("-inf"):
            return 0.0
        return dbm_to_watts(self.noise_power_dbm)

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(self.rng_seed)


def friis_received_power(
    p_tx_dbm: float, tx: AntennaSpec, rx: AntennaSpec, geom: LinkGeometry
) -> float:
    """One-hop free-space received power in dBm.

    p_rx = p_tx + g_tx + g_rx - 20*log10(4*pi*d/lambda)
    """
    if not geom.is_far_field:
        raise NearFieldError(
            f"distance {geom.distance_m} m is inside one wavelength "
            f"({geom.wavelength_m:.4f} m at {geom.frequency_hz / 1e6:.1f} MHz)"
        )
    fspl_db = 20.0 * math.log10(4.0 * math.pi * geom.distance_m / geom.wavelength_m)
    return p_tx_dbm + tx.gain_dbi + rx.gain_dbi - fspl_db


def backscatter_received_power(
    p_tx_dbm: float,
    src_tx: AntennaSpec,
    node: AntennaSpec,
    mon_rx: AntennaSpec,
    dl: LinkGeometry,
    ul: LinkGeometry,
    rect: RectifierModel,
    cmd_high: bool,
) -> float:
    """Two-hop backscatter budget: source -> node, reflect, node -> monitor.

    The node re-radiates the incident power scaled by the reflection
    coefficient of the commanded state.
    """
    incident = friis_received_power(p_tx_dbm, src_tx, node, dl)
    reflected = incident + rect.gamma_db(cmd_high)
    return friis_received_power(reflected, node, mon_rx, ul)


def leakage_power(p_tx_dbm: float, model: LeakageModel) -> float:
    """Monitor-side leakage level for a given TX power."""
    if model.kind == "circulator":
        return p_tx_dbm - model.circulator_isolation_db
    return model.coupling_floor_dbm_at_ref + (p_tx_dbm - model.ref_tx_power_dbm)


def combine_noncoherent(powers_dbm) -> float:
    """Power-sum a set of uncorrelated contributions, in dBm."""
    powers = list(powers_dbm)
    if not powers:
        raise EmptyInput("combine_noncoherent needs at least one power")
    total_w = sum(dbm_to_watts(p) for p in powers)
    return watts_to_dbm(total_w)


def dynamic_range_db(p_high_state_dbm: float, p_low_state_dbm: float) -> float:
    """Difference between total monitor-received powers in the two CMD states."""
    return p_high_state_dbm - p_low_state_dbm


def harvested_dc(p_in_dbm: float, rect: RectifierModel) -> tuple[float, float]:
    """DC output (power in watts, voltage across the load) for an RF input.

    Efficiency is piecewise-linear in (dBm, eta) space, clamped at the curve
    endpoints.
    """
    if not rect.efficiency_curve:
        raise EmptyCurve("rectifier has no efficiency curve points")
    xs = [p for p, _ in rect.efficiency_curve]
    ys = [e for _, e in rect.efficiency_curve]
    eta = float(np.interp(p_in_dbm, xs, ys))
    p_dc = eta * dbm_to_watts(p_in_dbm)
    v_out = math.sqrt(p_dc * rect.load_ohms)
    return p_dc, v_out


@dataclass(frozen=True)
class LinkScenario:
    """Complete monitor-side link description for one experiment setup.

    ``topology`` selects the power budget: "wired" feeds the TX power
    straight into the rectifier through a circulator, "radiated" applies the
    two-hop free-space budget. Antennas and geometries are required only for
    the radiated case.
    """

    name: str
    topology: str
    p_tx_dbm: float
    frequency_hz: float
    rect: RectifierModel = field(default_factory=RectifierModel)
    leakage: LeakageModel = field(default_factory=lambda: LeakageModel.circulator(20.0))
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    src_tx: AntennaSpec | None = None
    node_antenna: AntennaSpec | None = None
    mon_rx: AntennaSpec | None = None
    dl: LinkGeometry | None = None
    ul: LinkGeometry | None = None

    def __post_init__(self) -> None:
        if self.topology not in ("wired", "radiated"):
            raise ValueError(f"unknown topology: {self.topology!r}")
        if self.frequency_hz <= 0:
            raise ValueError("frequency_hz must be > 0")
        if self.topology == "radiated":
            missing = [
                n
                for n in ("src_tx", "node_antenna", "mon_rx", "dl", "ul")
                if getattr(self, n) is None
            ]
            if missing:
                raise ValueError(f"radiated scenario missing: {', '.join(missing)}")
            for hop in (self.dl, self.ul):
                if hop.frequency_hz != self.frequency_hz:
                    raise ValueError("hop frequency differs from scenario frequency")

    def node_input_dbm(self) -> float:
        """RF power arriving at the rectifier input."""
        if self.topology == "wired":
            return self.p_tx_dbm
        return friis_received_power(self.p_tx_dbm, self.src_tx, self.node_antenna, self.dl)

    def backscatter_dbm(self, cmd_high: bool) -> float:
        """Backscattered component at the monitor for one CMD state."""
        if self.topology == "wired":
            return self.p_tx_dbm + self.rect.gamma_db(cmd_high)
        return backscatter_received_power(
            self.p_tx_dbm,
            self.src_tx,
            self.node_antenna,
            self.mon_rx,
            self.dl,
            self.ul,
            self.rect,
            cmd_high,
        )

    def leakage_dbm(self) -> float:
        return leakage_power(self.p_tx_dbm, self.leakage)

    def state_level_dbm(self, cmd_high: bool) -> float:
        """Deterministic monitor level for one CMD state (no noise term)."""
        return combine_noncoherent([self.backscatter_dbm(cmd_high), self.leakage_dbm()])

    def monitor_level_dbm(self, cmd_high: bool) -> float:
        """Expected monitor level including the mean noise power."""
        parts = [self.backscatter_dbm(cmd_high), self.leakage_dbm()]
        if self.noise.mean_power_w > 0:
            parts.append(self.noise.noise_power_dbm)
        return combine_noncoherent(parts)

    def predicted_dynamic_range_db(self) -> float:
        return dynamic_range_db(self.monitor_level_dbm(True), self.monitor_level_dbm(False))
