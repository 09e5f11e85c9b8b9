"""Run configuration: an INI file with one section per module, overridden by flags.

Example::

    [cli]
    out = run1
    meta_seed = 2020
    format = json

    [election-model]
    locations = Dickson, Kippax
    electorate = Yerrabi
    days = 19
    restarts_per_day = 1
    votes_per_day = 60
    miss_rate = 0.02
    seed_window = 0x3000000:0x4000000

    [election-model.Kippax]
    restarts_per_day = 1,1,1,2,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1

    [seed-recovery]
    seed_range = 0x3000000:0x4000000
    worker_count = 4
"""

from __future__ import annotations

import configparser
import logging
import secrets
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .election import PollingPlaceScenario
from .recovery import RecoveryConfig

log = logging.getLogger(__name__)

SCENARIO_KEYS = {"electorate", "days", "restarts_per_day", "votes_per_day", "miss_rate",
                 "seed_window", "start_times", "batch_seq"}
RECOVERY_KEYS = {"miss_threshold", "seed_stride", "prefilter_depth", "prefilter_top_k",
                 "seed_range", "worker_count", "min_segment"}


class ConfigError(ValueError):
    pass


def parse_int(text: str) -> int:
    """Integer in decimal, ``0x`` hex, or ``2^k`` power notation."""
    text = str(text).strip().replace("_", "")
    if "^" in text:
        base, exp = text.split("^", 1)
        return int(base, 0) ** int(exp, 0)
    if "**" in text:
        base, exp = text.split("**", 1)
        return int(base, 0) ** int(exp, 0)
    return int(text, 0)


def parse_range(text: str) -> tuple[int, int]:
    """``lo:hi`` (half-open)."""
    try:
        lo, hi = str(text).split(":")
        return parse_int(lo), parse_int(hi)
    except ValueError:
        raise ConfigError(f"expected a range lo:hi, got {text!r}") from None


def parse_int_list(text: str | int, length: int | None = None) -> list[int]:
    """Comma list of ints; a single value is repeated to ``length``."""
    items = [parse_int(x) for x in str(text).split(",") if x.strip()]
    if length is not None and len(items) == 1:
        items = items * length
    return items


@dataclass
class RunConfig:
    scenarios: list[PollingPlaceScenario] = field(default_factory=lambda: [PollingPlaceScenario()])
    recovery: RecoveryConfig = field(default_factory=RecoveryConfig)
    out_dir: Path = Path(".")
    meta_seed: int | None = None
    report_format: str = "json"
    sections: dict[str, dict[str, str]] = field(default_factory=dict)

    def resolve_meta_seed(self) -> int:
        if self.meta_seed is None:
            self.meta_seed = secrets.randbits(32)
            log.warning("no meta seed given; drew %d from system entropy", self.meta_seed)
        return self.meta_seed


def read_sections(path: str | Path | None) -> dict[str, dict[str, str]]:
    if path is None:
        return {}
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"bad config {path}: {exc}") from exc
    return {name: dict(parser[name]) for name in parser.sections()}


def _scenario_fields(values: Mapping[str, Any]) -> dict[str, Any]:
    unknown = set(values) - SCENARIO_KEYS - {"locations", "location"}
    if unknown:
        raise ConfigError(f"unknown election-model keys: {sorted(unknown)}")
    days = parse_int(values.get("days", 1))
    out: dict[str, Any] = {"days": days}
    if "electorate" in values:
        out["electorate"] = str(values["electorate"])
    out["restarts_per_day"] = parse_int_list(values.get("restarts_per_day", 1), days)
    out["votes_per_day"] = parse_int_list(values.get("votes_per_day", 100), days)
    if "miss_rate" in values:
        out["miss_rate"] = float(values["miss_rate"])
    if values.get("seed_window"):
        out["seed_window"] = parse_range(values["seed_window"])
    if values.get("start_times"):
        out["start_times"] = parse_int_list(values["start_times"])
    if "batch_seq" in values:
        out["batch_seq"] = parse_int(values["batch_seq"])
    return out


def build_scenarios(sections: Mapping[str, Mapping[str, str]],
                    overrides: Mapping[str, Any] | None = None) -> list[PollingPlaceScenario]:
    """One scenario per location; ``[election-model.<name>]`` sections override per location."""
    base = dict(sections.get("election-model", {}))
    base.update({k: v for k, v in (overrides or {}).items() if v is not None})
    names = base.pop("locations", None) or base.pop("location", None) or "Belconnen"
    base.pop("location", None)
    if isinstance(names, str):
        names = [n.strip() for n in names.split(",") if n.strip()]
    scenarios = []
    for seq, name in enumerate(names, start=1):
        values = dict(base)
        values.update(sections.get(f"election-model.{name}", {}))
        values.setdefault("batch_seq", seq)
        fields = _scenario_fields(values)
        scenarios.append(PollingPlaceScenario(name=name, **fields))
    return scenarios


def build_recovery(sections: Mapping[str, Mapping[str, str]],
                   overrides: Mapping[str, Any] | None = None) -> RecoveryConfig:
    values = dict(sections.get("seed-recovery", {}))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = set(values) - RECOVERY_KEYS
    if unknown:
        raise ConfigError(f"unknown seed-recovery keys: {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for key, val in values.items():
        kwargs[key] = parse_range(val) if key == "seed_range" else parse_int(val)
    try:
        return replace(RecoveryConfig(), **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
