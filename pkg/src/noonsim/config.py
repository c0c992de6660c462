"""Experiment configuration: JSON documents with strict keys and range checks.

Angles are degrees here and converted to radians when presets are built.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from noonsim.detection import DetectorModel, SplitterCascade
from noonsim.elements import Noon3Params, Noon4Params, preset_noon3, preset_noon4
from noonsim.sources import KINDS, OverlapModel, PairDistribution

PRESET_NAMES = ("noon3", "noon4", "hom", "hwp2-cal")
MANIFEST_KEY = "noonsim_manifest"


class ConfigError(ValueError):
    pass


def _require(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


@dataclass
class SourceConfig:
    kind: str = "thermal"
    gamma: float = 0.01
    n: int = 2
    n_max_pairs: int = 4
    alpha: float | None = None
    xi: float = 1.0
    tau_c: float = 1.0
    delay: float = 0.0

    def __post_init__(self):
        _require(self.kind in KINDS, f"source.kind must be one of {KINDS}")
        _require(0.0 <= self.gamma < 1.0, "source.gamma must lie in [0, 1)")
        _require(self.n >= 0 and self.n_max_pairs >= 0, "pair numbers must be >= 0")
        _require(self.alpha is None or self.alpha >= 0, "source.alpha must be >= 0")
        _require(0.0 <= self.xi <= 1.0, "source.xi must lie in [0, 1]")
        _require(self.tau_c > 0, "source.tau_c must be positive")


@dataclass
class ElementsConfig:
    t_H: float | None = None
    t_V: float | None = None
    phi_deg: float = 0.0
    hwp1_deg: float = 22.5
    middle_hwp_deg: float = 45.0
    qwp2_deg: float = 45.0
    hwp2_deg: float | None = None
    qwp3_deg: float = 45.0

    def __post_init__(self):
        for name in ("t_H", "t_V"):
            v = getattr(self, name)
            _require(v is None or 0.0 <= v <= 1.0, f"elements.{name} must lie in [0, 1]")


@dataclass
class DetectorsConfig:
    efficiency: list[float] = field(default_factory=lambda: [1.0, 1.0, 1.0, 1.0])
    dark_prob: float = 0.0
    cascade_ratios: list[float] = field(default_factory=lambda: [0.43, 0.43])

    def __post_init__(self):
        _require(all(0.0 <= e <= 1.0 for e in self.efficiency), "efficiencies must lie in [0, 1]")
        _require(0.0 <= self.dark_prob < 1.0, "detectors.dark_prob must lie in [0, 1)")
        _require(all(0.0 <= r <= 1.0 for r in self.cascade_ratios), "cascade ratios must lie in [0, 1]")
        _require(
            len(self.efficiency) == len(self.cascade_ratios) + 2,
            "need one efficiency for the herald detector plus one per cascade output",
        )


@dataclass
class ScanConfig:
    """Scan axis: HWP3 angle (noon3/noon4), HWP2 angle (hwp2-cal) or delay (hom)."""

    values: list[float] | None = None
    start: float = 0.0
    stop: float = 90.0
    step: float = 5.0
    pulses_per_point: int = 1_000_000
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        _require(self.step > 0, "scan.step must be positive")
        _require(self.stop >= self.start, "scan.stop must be >= scan.start")
        _require(self.pulses_per_point >= 1, "scan.pulses_per_point must be >= 1")
        _require(self.workers >= 1, "scan.workers must be >= 1")
        _require(self.seed >= 0, "scan.seed must be >= 0")

    def axis(self) -> np.ndarray:
        if self.values is not None:
            return np.asarray(self.values, dtype=float)
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return self.start + self.step * np.arange(n)


@dataclass
class OutputConfig:
    dir: str = "out"
    analytic_only: bool = False


@dataclass
class ExperimentConfig:
    preset: str = "noon3"
    source: SourceConfig = field(default_factory=SourceConfig)
    elements: ElementsConfig = field(default_factory=ElementsConfig)
    detectors: DetectorsConfig = field(default_factory=DetectorsConfig)
    scan: ScanConfig = field(default_factory=ScanConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        _require(self.preset in PRESET_NAMES, f"preset must be one of {PRESET_NAMES}")

    def to_dict(self) -> dict:
        return asdict(self)


_BLOCKS = {
    "source": SourceConfig,
    "elements": ElementsConfig,
    "detectors": DetectorsConfig,
    "scan": ScanConfig,
    "output": OutputConfig,
}


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(doc: dict) -> ExperimentConfig:
    if isinstance(doc, dict) and MANIFEST_KEY in doc:
        doc = doc["config"]
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - {"preset", *_BLOCKS}
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    kwargs = {name: _build(cls, doc.get(name, {}), name) for name, cls in _BLOCKS.items()}
    return ExperimentConfig(preset=doc.get("preset", "noon3"), **kwargs)


def load_config(path: str | Path | None = None) -> ExperimentConfig:
    """Read a config (or a run manifest) from ``path``; defaults when ``path`` is None."""
    if path is None:
        return ExperimentConfig()
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return config_from_dict(doc)


def shipped_config(name: str) -> ExperimentConfig:
    """One of the configs bundled with the package ("paper", "ideal", "noon4")."""
    text = resources.files("noonsim").joinpath("configs", f"{name}.json").read_text()
    return config_from_dict(json.loads(text))


def shipped_config_names() -> list[str]:
    d = resources.files("noonsim").joinpath("configs")
    return sorted(p.name[:-5] for p in d.iterdir() if p.name.endswith(".json"))


def _detectors(cfg: ExperimentConfig):
    d = cfg.detectors
    herald = DetectorModel(d.efficiency[0], d.dark_prob)
    cascade_dets = tuple(DetectorModel(e, d.dark_prob) for e in d.efficiency[1:])
    return herald, SplitterCascade(tuple(d.cascade_ratios)), cascade_dets


def pair_distribution(cfg: ExperimentConfig) -> PairDistribution:
    s = cfg.source
    return PairDistribution(s.kind, s.gamma, s.n, s.n_max_pairs)


def overlap_model(cfg: ExperimentConfig) -> OverlapModel:
    return OverlapModel(cfg.source.xi, cfg.source.tau_c)


def build_preset(cfg: ExperimentConfig, hwp3_deg: float = 0.0):
    """Circuit preset for noon3/noon4 (hwp2-cal uses the noon3 circuit)."""
    herald, cascade, dets = _detectors(cfg)
    e, s = cfg.elements, cfg.source
    overlap = overlap_model(cfg) if (s.xi < 1.0 or s.delay != 0.0) else None
    common = dict(
        birefringence_phi=math.radians(e.phi_deg),
        hwp1=math.radians(e.hwp1_deg),
        qwp2=math.radians(e.qwp2_deg),
        qwp3=math.radians(e.qwp3_deg),
        hwp3=math.radians(hwp3_deg),
        source=pair_distribution(cfg),
        overlap=overlap,
        delay=s.delay,
        cascade=cascade,
        herald_detector=herald,
        detectors=dets,
    )
    if cfg.preset in ("noon3", "hwp2-cal", "hom"):
        params = Noon3Params(
            t_H=1.0 if e.t_H is None else e.t_H,
            t_V=1.0 / 3.0 if e.t_V is None else e.t_V,
            hwp2=None if e.hwp2_deg is None else math.radians(e.hwp2_deg),
            **common,
        )
        return preset_noon3(params)
    params = Noon4Params(
        t_H=1.0 if e.t_H is None else e.t_H,
        t_V=2.0 / 3.0 if e.t_V is None else e.t_V,
        middle_hwp=math.radians(e.middle_hwp_deg),
        hwp2=0.0 if e.hwp2_deg is None else math.radians(e.hwp2_deg),
        **common,
    )
    return preset_noon4(params)
