"""Scenario configuration and its INI file format.

Defaults describe the reference dumbbell: five 100 Mb/s, 10 ms access
links per side and a 10 Mb/s, 40 ms bottleneck, 2000-byte packets, a
4000-byte bottleneck buffer and a 100 s run.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from typing import Any

from aqmlab.aqm import DISCIPLINES, RedParams, RemParams, SfqParams
from aqmlab.engine import DEFAULT_SEED


class ConfigError(ValueError):
    pass


@dataclass
class LinkSpec:
    src: str
    dst: str
    rate_bps: float
    prop_delay_s: float
    discipline: str
    buffer_bytes: int


@dataclass
class ScenarioConfig:
    duration_s: float = 100.0
    seed: int = DEFAULT_SEED
    packet_size_bytes: int = 2000
    buffer_bytes: int = 4000
    access_buffer_bytes: int = 100_000
    ack_size_bytes: int = 40
    bottleneck_rate_mbps: float = 10.0
    bottleneck_delay_ms: float = 40.0
    aqm: str = "red"
    access_rate_mbps: float = 100.0
    access_delay_ms: float = 10.0
    flows: int = 5
    stagger_ms: float = 10.0
    start_jitter_ms: float = 10.0
    initial_cwnd: float = 1.0
    initial_ssthresh: float = 64.0
    initial_rto_s: float = 1.0
    receiver_window: int = 20
    max_rto_s: float = 64.0
    red: RedParams = field(default_factory=RedParams)
    rem: RemParams = field(default_factory=RemParams)
    sfq: SfqParams = field(default_factory=SfqParams)

    @property
    def bottleneck_rate_bps(self) -> float:
        return self.bottleneck_rate_mbps * 1e6

    def validate(self) -> "ScenarioConfig":
        positive = (
            "duration_s", "packet_size_bytes", "buffer_bytes", "access_buffer_bytes",
            "ack_size_bytes", "bottleneck_rate_mbps", "access_rate_mbps",
            "initial_cwnd", "initial_ssthresh", "initial_rto_s", "max_rto_s", "receiver_window",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("bottleneck_delay_ms", "access_delay_ms", "stagger_ms", "start_jitter_ms"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.flows < 1:
            raise ConfigError("flows count must be at least 1")
        if self.initial_cwnd < 1:
            raise ConfigError("initial_cwnd must be at least 1")
        if self.aqm not in DISCIPLINES:
            raise ConfigError(f"unknown aqm {self.aqm!r}; valid: {', '.join(DISCIPLINES)}")
        for params in (self.red, self.rem, self.sfq):
            try:
                params.validate()
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        return self

    def with_overrides(self, **changes: Any) -> "ScenarioConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def discipline_params(self) -> dict:
        # Idle decay and rate normalisation use the configured packet size.
        return {
            "red": replace(self.red, mean_pkt_bytes=self.packet_size_bytes),
            "rem": replace(self.rem, mean_pkt_bytes=self.packet_size_bytes),
            "sfq": self.sfq,
        }

    def link_specs(self) -> list[LinkSpec]:
        """Duplex links as (src, dst) pairs, access links first."""
        access = (self.access_rate_mbps * 1e6, self.access_delay_ms / 1e3)
        specs = []
        for i in range(1, self.flows + 1):
            specs.append(LinkSpec(f"S{i}", "R1", *access, "droptail", self.access_buffer_bytes))
        specs.append(LinkSpec(
            "R1", "R2", self.bottleneck_rate_bps, self.bottleneck_delay_ms / 1e3,
            self.aqm, self.buffer_bytes,
        ))
        for i in range(1, self.flows + 1):
            specs.append(LinkSpec("R2", f"D{i}", *access, "droptail", self.access_buffer_bytes))
        return specs


# section -> key -> (attribute path, type)
_SCHEMA: dict[str, dict[str, tuple[str, type]]] = {
    "scenario": {
        "duration_s": ("duration_s", float),
        "seed": ("seed", int),
        "packet_size_bytes": ("packet_size_bytes", int),
        "buffer_bytes": ("buffer_bytes", int),
        "access_buffer_bytes": ("access_buffer_bytes", int),
        "ack_size_bytes": ("ack_size_bytes", int),
    },
    "bottleneck": {
        "rate_mbps": ("bottleneck_rate_mbps", float),
        "delay_ms": ("bottleneck_delay_ms", float),
        "aqm": ("aqm", str),
    },
    "access": {
        "rate_mbps": ("access_rate_mbps", float),
        "delay_ms": ("access_delay_ms", float),
    },
    "flows": {
        "count": ("flows", int),
        "stagger_ms": ("stagger_ms", float),
        "start_jitter_ms": ("start_jitter_ms", float),
        "initial_cwnd": ("initial_cwnd", float),
        "initial_ssthresh": ("initial_ssthresh", float),
        "initial_rto_s": ("initial_rto_s", float),
        "receiver_window": ("receiver_window", int),
        "max_rto_s": ("max_rto_s", float),
    },
    "aqm.red": {f.name: (f"red.{f.name}", f.type) for f in fields(RedParams) if f.name != "mean_pkt_bytes"},
    "aqm.rem": {f.name: (f"rem.{f.name}", f.type) for f in fields(RemParams) if f.name != "mean_pkt_bytes"},
    "aqm.sfq": {f.name: (f"sfq.{f.name}", f.type) for f in fields(SfqParams)},
}

_CASTS = {"int": int, "float": float, "str": str, int: int, float: float, str: str}


def _get(config: ScenarioConfig, path: str) -> Any:
    obj: Any = config
    for part in path.split("."):
        obj = getattr(obj, part)
    return obj


def _set(config: ScenarioConfig, path: str, value: Any) -> None:
    *head, last = path.split(".")
    obj: Any = config
    for part in head:
        obj = getattr(obj, part)
    setattr(obj, last, value)


def _convert(raw: str, kind: Any, where: str) -> Any:
    cast = _CASTS[kind]
    try:
        if cast is int:
            return int(raw)
        return cast(raw)
    except ValueError:
        raise ConfigError(f"{where}: cannot read {raw!r} as {cast.__name__}") from None


def parse_config(text: str, source: str = "<config>") -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    config = ScenarioConfig()
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        schema = _SCHEMA[section]
        for key, raw in parser.items(section):
            if key not in schema:
                valid = ", ".join(schema)
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}] (valid: {valid})")
            path, kind = schema[key]
            _set(config, path, _convert(raw.strip(), kind, f"{source}: [{section}] {key}"))
    return config.validate()


def load_config(path: str | None) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    with open(path) as fh:
        return parse_config(fh.read(), source=path)


def dump_config(config: ScenarioConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section, schema in _SCHEMA.items():
        parser[section] = {key: repr(_get(config, path)) if kind in (float, "float") else str(_get(config, path))
                           for key, (path, kind) in schema.items()}
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()
