"""Scenario documents: INI-style sections of ``key = value`` lines.

::

    [scenario]
    name = syn_flood
    seed = 7
    duration_s = 120
    protection = on

    [server]
    table_capacity = 256

    [attack main]
    kind = syn_flood
    start_s = 20
    duration_s = 100
    rate_pps = 100

Sections: ``scenario`` (required), ``server``, ``link``, ``benign``,
``thresholds`` and any number of ``attack <label>`` sections. Every key is
optional except ``name``, ``seed`` and ``duration_s``; unknown keys and
sections are errors.
"""

from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field
from typing import Optional

from .sentinel import SentinelConfig
from .topology import LinkParams
from .traffic import ATTACK_KINDS, AttackConfig, BenignConfig
from .victim import ServerConfig


class ScenarioError(ValueError):
    """Malformed scenario document. ``field`` is ``section.key`` when known."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(field)
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    seed: int
    duration_s: float
    warmup_s: float = 15.0
    protection_enabled: bool = False
    sentinel_observe_only: bool = False
    rule_timeout_s: Optional[float] = None
    server: ServerConfig = field(default_factory=ServerConfig)
    link: LinkParams = field(default_factory=LinkParams)
    benign: BenignConfig = field(default_factory=BenignConfig)
    attacks: tuple[AttackConfig, ...] = ()
    attack_labels: tuple[str, ...] = ()
    thresholds: SentinelConfig = field(default_factory=SentinelConfig)

    def __post_init__(self):
        if not self.name:
            raise ScenarioError("name must not be empty", "scenario.name")
        if self.duration_s <= 0:
            raise ScenarioError("must be positive", "scenario.duration_s")
        if self.warmup_s < 0:
            raise ScenarioError("must be non-negative", "scenario.warmup_s")
        if not -(2**63) <= self.seed < 2**64:
            raise ScenarioError("must fit in 64 bits", "scenario.seed")
        if len(self.attack_labels) != len(self.attacks):
            object.__setattr__(self, "attack_labels",
                               tuple(f"a{i}" for i in range(len(self.attacks))))
        for label, atk in zip(self.attack_labels, self.attacks):
            if self.warmup_s >= atk.start_s:
                raise ScenarioError("warmup_s must end before the attack starts",
                                    f"attack {label}.start_s")
            if atk.end_s > self.duration_s + 1e-9:
                raise ScenarioError("attack runs past the end of the scenario",
                                    f"attack {label}.duration_s")

    @property
    def attack_start_s(self) -> Optional[float]:
        return min((a.start_s for a in self.attacks), default=None)

    def sentinel_config(self) -> SentinelConfig:
        """Thresholds with capacity estimates filled from the server config."""
        t = self.thresholds
        updates = {}
        if t.table_capacity_estimate is None:
            updates["table_capacity_estimate"] = self.server.table_capacity
        if t.sustainable_heavy_rate is None:
            updates["sustainable_heavy_rate"] = self.server.sustainable_heavy_rate
        return dataclasses.replace(t, **updates) if updates else t

    def with_overrides(self, protection: bool | None = None, seed: int | None = None) -> "ScenarioConfig":
        updates = {}
        if protection is not None:
            updates["protection_enabled"] = protection
        if seed is not None:
            updates["seed"] = seed
        return dataclasses.replace(self, **updates)


_SCENARIO_KEYS = {
    "name": "name", "seed": "seed", "duration_s": "duration_s", "warmup_s": "warmup_s",
    "protection": "protection_enabled", "protection_enabled": "protection_enabled",
    "sentinel_observe_only": "sentinel_observe_only", "rule_timeout_s": "rule_timeout_s",
}
_SECTIONS = {
    "server": ServerConfig,
    "link": LinkParams,
    "benign": BenignConfig,
    "thresholds": SentinelConfig,
}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(text: str, annotation: str, where: str, line: int | None):
    ann = annotation.replace("typing.", "")
    optional = ann.startswith("Optional[")
    if optional:
        ann = ann[len("Optional["):-1]
        if text.lower() in ("", "none"):
            return None
    try:
        if ann == "bool":
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if ann == "int":
            return int(text, 0)
        if ann == "float":
            return float(text)
        if ann == "str":
            return text
    except ValueError as exc:
        raise ScenarioError(str(exc), where, line) from None
    raise ScenarioError(f"unsupported field type {annotation}", where, line)


def _line_index(text: str) -> dict[tuple[str, Optional[str]], int]:
    """Map (section, key) and (section, None) to 1-based line numbers."""
    index: dict[tuple[str, Optional[str]], int] = {}
    section = None
    for n, raw in enumerate(text.splitlines(), 1):
        stripped = raw.strip()
        if not stripped or stripped[0] in "#;":
            continue
        m = re.match(r"\[(.+)\]$", stripped)
        if m:
            section = m.group(1).strip()
            index.setdefault((section, None), n)
            continue
        if section is not None:
            key = re.split(r"[=:]", stripped, 1)[0].strip().lower()
            index.setdefault((section, key), n)
    return index


def _build(cls, items: dict[str, str], section: str, lines, renames=None):
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in items.items():
        name = (renames or {}).get(key, key)
        line = lines.get((section, key))
        if name not in types:
            raise ScenarioError("unknown key", f"{section}.{key}", line)
        kwargs[name] = _convert(value, types[name], f"{section}.{key}", line)
    try:
        return cls(**kwargs)
    except ScenarioError:
        raise
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        field_name = None
        for key in items:
            if (renames or {}).get(key, key) in msg:
                field_name = key
                break
        where = f"{section}.{field_name}" if field_name else section
        raise ScenarioError(msg, where, lines.get((section, field_name)) if field_name else
                            lines.get((section, None))) from None


def parse_scenario(text: str) -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       inline_comment_prefixes=("#", ";"),
                                       default_section="__none__")
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ScenarioError(f"malformed document: {exc.message.splitlines()[0]}", None, line) from None
    lines = _line_index(text)

    if not parser.has_section("scenario"):
        raise ScenarioError("missing [scenario] section", "scenario")
    kwargs = {}
    attacks, labels = [], []
    for section in parser.sections():
        items = dict(parser.items(section))
        if section == "scenario":
            types = {f.name: f.type for f in dataclasses.fields(ScenarioConfig)}
            for key, value in items.items():
                line = lines.get((section, key))
                if key not in _SCENARIO_KEYS:
                    raise ScenarioError("unknown key", f"scenario.{key}", line)
                name = _SCENARIO_KEYS[key]
                kwargs[name] = _convert(value, types[name], f"scenario.{key}", line)
        elif section in _SECTIONS:
            kwargs[section] = _build(_SECTIONS[section], items, section, lines)
        elif section == "attack" or section.startswith("attack "):
            label = section[len("attack"):].strip() or f"a{len(attacks)}"
            kind = items.get("kind")
            if kind is None:
                raise ScenarioError("missing attack kind", f"{section}.kind", lines.get((section, None)))
            if kind not in ATTACK_KINDS:
                raise ScenarioError(f"unknown attack kind {kind!r} (expected one of "
                                    f"{', '.join(ATTACK_KINDS)})", f"{section}.kind",
                                    lines.get((section, "kind")))
            attacks.append(_build(AttackConfig, items, section, lines))
            labels.append(label)
        else:
            raise ScenarioError("unknown section", section, lines.get((section, None)))
    for required in ("name", "seed", "duration_s"):
        if required not in kwargs:
            raise ScenarioError("required key missing", f"scenario.{required}",
                                lines.get(("scenario", None)))
    kwargs["attacks"] = tuple(attacks)
    kwargs["attack_labels"] = tuple(labels)
    return ScenarioConfig(**kwargs)


def load_scenario(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_scenario(cfg: ScenarioConfig) -> str:
    """Write ``cfg`` back out with every field explicit."""
    out = ["[scenario]"]
    out.append(f"name = {cfg.name}")
    out.append(f"seed = {cfg.seed}")
    out.append(f"duration_s = {_fmt(cfg.duration_s)}")
    out.append(f"warmup_s = {_fmt(cfg.warmup_s)}")
    out.append(f"protection = {_fmt(cfg.protection_enabled)}")
    out.append(f"sentinel_observe_only = {_fmt(cfg.sentinel_observe_only)}")
    out.append(f"rule_timeout_s = {_fmt(cfg.rule_timeout_s)}")
    for section in ("server", "link", "benign", "thresholds"):
        obj = getattr(cfg, section)
        out.append("")
        out.append(f"[{section}]")
        for f in dataclasses.fields(obj):
            out.append(f"{f.name} = {_fmt(getattr(obj, f.name))}")
    for label, atk in zip(cfg.attack_labels, cfg.attacks):
        out.append("")
        out.append(f"[attack {label}]")
        for f in dataclasses.fields(atk):
            out.append(f"{f.name} = {_fmt(getattr(atk, f.name))}")
    return "\n".join(out) + "\n"
