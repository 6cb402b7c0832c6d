"""Run configuration: a YAML tree whose keys carry their units.

Unknown keys anywhere in the tree are rejected so that a typo such as
``power_uw`` fails loudly instead of silently falling back to a default.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .detect import DetectorSpec
from .model import COLLECTION_LOSS_DB, ArmSetup, LinkSetup
from .source import (DEFAULT_MODE_TABLE, FSR_THZ, PUMP_WAVELENGTH_NM, CombSource,
                     build_mode_pairs)


class ConfigError(ValueError):
    """Raised with a dotted key path for any schema violation."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path


@dataclass
class ModeEntry:
    index: int
    q_signal_m: float
    q_idler_m: float
    extinction_db: float = 120.0
    intrinsic_visibility: float = 0.91
    pgr_hz_per_mw2: float | None = None

    def as_row(self) -> dict:
        row = dataclasses.asdict(self)
        if row["pgr_hz_per_mw2"] is None:
            del row["pgr_hz_per_mw2"]
        return row


@dataclass
class SourceConfig:
    pump_wavelength_nm: float = PUMP_WAVELENGTH_NM
    fsr_thz: float = FSR_THZ
    power_mw: float = 0.108
    reference_mode: int = 2
    q_exponent: float = 1.0
    modes: list[ModeEntry] = field(
        default_factory=lambda: [ModeEntry(**row) for row in DEFAULT_MODE_TABLE])


@dataclass
class LinkConfig:
    mode_id: int = 2
    facet_loss_db: float = 3.5
    collection_loss_db: float | None = None  # None: fitted from the rate anchors
    dwdm_insertion_db: float = 3.0
    basis_split: float = 0.5
    tau_ps: int = 2000
    match_window_ps: int = 200
    pump_leak: bool = True
    fiber_loss_db_per_km: float = 0.2


@dataclass
class DetectorConfig:
    efficiency: float = 0.85
    jitter_sigma_ps: float = 35.0
    dark_rate_hz: float = 500.0
    dead_time_ps: int = 50_000


@dataclass
class StabilityConfig:
    total_s: float = 10_000.0
    sample_interval_s: float = 20.0
    integration_s: float = 0.005
    drift_time_constant_s: float = 20_000.0
    realign_at_s: list[float] = field(default_factory=lambda: [5000.0])


@dataclass
class DeployedConfig:
    loop_km: float = 2.05
    loops: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5, 6])
    connector_loss_db_per_loop: float = 0.3
    mode_id: int = 2


@dataclass
class EncryptConfig:
    payload_bytes: int = 1024
    link_km: float = 12.3
    power_mw: float = 0.108


@dataclass
class NetworkLink:
    alice: str
    bob: str
    alice_km: float = 0.0
    bob_km: float = 0.0
    alice_extra_db: float = 0.0
    bob_extra_db: float = 0.0


@dataclass
class NetworkConfig:
    policy: str = "best-rate-first"
    links: list[NetworkLink] = field(
        default_factory=lambda: [NetworkLink(f"A{k}", f"B{k}") for k in range(1, 21)])
    validate_duration_s: float = 0.0  # >0 adds a Monte Carlo column per link


@dataclass
class SweepConfig:
    power_mw: list[float] = field(
        default_factory=lambda: [0.03, 0.06, 0.09, 0.108, 0.15, 0.2, 0.25, 0.3])
    attenuation_db: list[float] = field(
        default_factory=lambda: [2.5, 4.5, 6.5, 8.5, 10.5, 12.5, 14.5, 16.5, 18.5])
    duration_s: float = 1.0
    g2_duration_s: float = 4.0
    g2_window_ps: int = 100
    phase_steps: int = 8
    visibility_duration_s: float = 0.25
    max_events: int = 10_000_000  # photon events per scenario, shared by its points


@dataclass
class RunConfig:
    seed: int = 0
    source: SourceConfig = field(default_factory=SourceConfig)
    link: LinkConfig = field(default_factory=LinkConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    stability: StabilityConfig = field(default_factory=StabilityConfig)
    deployed: DeployedConfig = field(default_factory=DeployedConfig)
    encrypt: EncryptConfig = field(default_factory=EncryptConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def sha256(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def build_source(self, power_mw: float | None = None) -> CombSource:
        s = self.source
        pairs = build_mode_pairs([m.as_row() for m in s.modes], s.pump_wavelength_nm,
                                 s.fsr_thz, s.reference_mode, q_exponent=s.q_exponent)
        power = s.power_mw if power_mw is None else power_mw
        return CombSource(s.pump_wavelength_nm, power, pairs, self.seed)

    def detector_spec(self) -> DetectorSpec:
        d = self.detector
        return DetectorSpec(d.efficiency, d.jitter_sigma_ps, d.dark_rate_hz, int(d.dead_time_ps))

    def link_setup(self, power_mw: float | None = None, mode_id: int | None = None,
                   alice: ArmSetup | None = None, bob: ArmSetup | None = None) -> LinkSetup:
        lk = self.link
        collection = COLLECTION_LOSS_DB if lk.collection_loss_db is None else lk.collection_loss_db
        per_km = lk.fiber_loss_db_per_km
        return LinkSetup(
            source=self.build_source(power_mw),
            mode_id=lk.mode_id if mode_id is None else mode_id,
            facet_db=lk.facet_loss_db,
            collection_db=collection,
            dwdm_insertion_db=lk.dwdm_insertion_db,
            basis_split=lk.basis_split,
            alice=alice or ArmSetup(loss_db_per_km=per_km),
            bob=bob or ArmSetup(loss_db_per_km=per_km),
            detector=self.detector_spec(),
            tau_ps=int(lk.tau_ps),
            match_window_ps=int(lk.match_window_ps),
            with_leak=lk.pump_leak,
        )


def _build(cls, data, path: str):
    if dataclasses.is_dataclass(cls):
        if not isinstance(data, dict):
            raise ConfigError(path, f"expected a mapping, got {type(data).__name__}")
        hints = typing.get_type_hints(cls)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"{path}.{unknown[0]}".lstrip("."), "unknown key")
        kwargs = {k: _build(hints[k], v, f"{path}.{k}".lstrip(".")) for k, v in data.items()}
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(path, str(exc)) from None
    origin = typing.get_origin(cls)
    args = typing.get_args(cls)
    if origin is list:
        if not isinstance(data, list):
            raise ConfigError(path, "expected a list")
        return [_build(args[0], v, f"{path}[{i}]") for i, v in enumerate(data)]
    if origin in (typing.Union, types.UnionType):
        if data is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _build(inner[0], data, path)
    if cls is bool:
        if not isinstance(data, bool):
            raise ConfigError(path, "expected true or false")
        return data
    if cls is int:
        if isinstance(data, bool) or not isinstance(data, int):
            raise ConfigError(path, "expected an integer")
        return data
    if cls is float:
        if isinstance(data, bool) or not isinstance(data, (int, float)):
            raise ConfigError(path, "expected a number")
        return float(data)
    if cls is str:
        if not isinstance(data, str):
            raise ConfigError(path, "expected a string")
        return data
    raise ConfigError(path, f"unsupported schema type {cls!r}")


def parse_config(data: dict | None) -> RunConfig:
    cfg = _build(RunConfig, data or {}, "")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed", "must be an unsigned 64-bit integer")
    return cfg


def load_config(path=None) -> RunConfig:
    """Read a config file; ``None`` loads the shipped default."""
    if path is None:
        text = resources.files("combqkd").joinpath("data/default.yaml").read_text()
    else:
        text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"not valid YAML: {exc}") from None
    return parse_config(data)


__all__ = ["RunConfig", "ConfigError", "load_config", "parse_config"]
