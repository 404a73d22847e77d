"""Episode configuration and its flat ``section.key = value`` text form."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .action import ActionConfig
from .clustering import ClusterConfig
from .fileio import read_keyvalue, write_keyvalue
from .flow import Intrinsics
from .frames import SamplerConfig
from .segmenter import SegmenterConfig


@dataclass(frozen=True)
class EvalConfig:
    correct_threshold: float = 0.75
    boundary_dilation: int = 2


@dataclass(frozen=True)
class EpisodeConfig:
    scene: str | None = None
    seed: int = 0
    max_interactions: int = 5
    sub_steps: int = 10
    n_objects: int = 4
    flow_noise: float = 0.0
    out_dir: str | None = None
    camera: Intrinsics = field(default_factory=Intrinsics.default)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    seg: SegmenterConfig = field(default_factory=SegmenterConfig)
    action: ActionConfig = field(default_factory=ActionConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        if self.max_interactions < 1:
            raise ValueError("max_interactions must be >= 1")
        if self.sub_steps < 2:
            raise ValueError("sub_steps must be >= 2")
        if self.flow_noise < 0:
            raise ValueError("flow_noise must be >= 0")

    def seeded(self, seed: int) -> "EpisodeConfig":
        """Same config with every random stream derived from ``seed``."""
        return dataclasses.replace(
            self, seed=seed,
            sampler=dataclasses.replace(self.sampler, rng_seed=seed),
            action=dataclasses.replace(self.action, seed=seed))


SECTIONS = ("camera", "sampler", "cluster", "seg", "action", "eval")


def _coerce(text: str, like, name: str):
    if isinstance(like, bool):
        low = text.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"{name}: expected a boolean, got {text!r}")
        return low in ("true", "1", "yes")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    if text.lower() in ("none", ""):
        return None
    return text


def to_flat(cfg: EpisodeConfig) -> dict[str, object]:
    out = {}
    for f in dataclasses.fields(cfg):
        val = getattr(cfg, f.name)
        if f.name in SECTIONS:
            for g in dataclasses.fields(val):
                out[f"{f.name}.{g.name}"] = getattr(val, g.name)
        else:
            out[f.name] = val
    return out


def apply_overrides(cfg: EpisodeConfig, values: dict[str, str]) -> EpisodeConfig:
    """Return cfg with string overrides applied; unknown keys are an error."""
    flat = to_flat(cfg)
    top, nested = {}, {s: {} for s in SECTIONS}
    for key, text in values.items():
        if key not in flat:
            raise KeyError(f"unknown config key {key!r}")
        like = flat[key]
        if like is None and key in ("scene", "out_dir"):
            val = None if text.lower() == "none" else text
        else:
            val = _coerce(str(text), like, key)
        if "." in key:
            sec, name = key.split(".", 1)
            nested[sec][name] = val
        else:
            top[key] = val
    for sec, upd in nested.items():
        if upd:
            top[sec] = dataclasses.replace(getattr(cfg, sec), **upd)
    return dataclasses.replace(cfg, **top)


def load_config(path, base: EpisodeConfig | None = None) -> EpisodeConfig:
    return apply_overrides(base or EpisodeConfig(), read_keyvalue(path))


def save_config(path, cfg: EpisodeConfig) -> None:
    write_keyvalue(path, {k: ("none" if v is None else v) for k, v in to_flat(cfg).items()})


def parse_assignments(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ValueError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def default_config_text() -> str:
    return "".join(f"{k} = {'none' if v is None else v}\n" for k, v in to_flat(EpisodeConfig()).items())
