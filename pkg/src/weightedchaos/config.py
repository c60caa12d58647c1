"""Experiment configuration: JSON file, schema validation, dotted overrides."""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .densities import ModalDensity, ProductDensity
from .kernels import (ChiSpec, InfluenceKernel, InteractionKernel, Kernels, SSpec, zero_influence,
                      zero_interaction)


class ConfigError(ValueError):
    pass


def load_schema(name: str) -> dict:
    return json.loads(resources.files("weightedchaos.schemas").joinpath(name).read_text())


@dataclass
class KernelsConfig:
    dim: int
    interaction: dict
    influence: dict

    def build(self) -> Kernels:
        d = self.dim
        ia = self.interaction
        if ia["family"] == "zero":
            a = zero_interaction(d)
        else:
            a = InteractionKernel(d, ia["family"], tuple(ia.get("params", ())), ia.get("table"),
                                  ia.get("sup_bound"))
        inf = self.influence
        if inf["form"] == "zero":
            S = zero_influence(d)
        else:
            kw = {}
            if "s" in inf:
                kw["s"] = SSpec(**inf["s"])
            for key in ("chi1", "chi2"):
                if key in inf:
                    c = dict(inf[key])
                    if "support" in c:
                        c["support"] = tuple(c["support"])
                    kw[key] = ChiSpec(**c)
            bounds = tuple(inf["bounds"]) if "bounds" in inf else None
            S = InfluenceKernel(d, inf["form"], bounds=bounds, **kw)
        return Kernels(a, S)


@dataclass
class InitialConfig:
    family: str = "product"
    x_amplitude: float = 0.0
    x_phase: float = 0.0
    m_profile: str = "exp"
    m_lo: float = 1.0
    m_hi: float = 5.0
    modes: list = field(default_factory=list)      # "modal" family: [[k...], amplitude, phase]
    envelope: dict = field(default_factory=lambda: {"require": True, "C_max": None})

    def density(self, dim: int, m_max: float):
        if self.family == "modal":
            return ModalDensity(dim, tuple((tuple(k), c, ph) for k, c, ph in self.modes),
                                self.m_profile, m_max, self.m_lo, self.m_hi)
        return ProductDensity(dim, self.x_amplitude, self.x_phase, self.m_profile,
                              m_max, self.m_lo, self.m_hi)


@dataclass
class GridConfig:
    G_x: int
    G_m: int
    m_max: float


@dataclass
class TimeConfig:
    T: float
    cfl: float = 0.45
    n_frames: int = 10
    dt: float = 0.05
    store_every: int = 1


@dataclass
class ParticleConfig:
    N: int = 256
    scheme: str = "heun"
    tile: int = 256


@dataclass
class KolmogorovConfig:
    G: int = 24
    m_max: float = 12.0
    n_frames: int = 20
    tol_ent: float = 1e-2


@dataclass
class ChaosConfig:
    N_list: list = field(default_factory=lambda: [64, 256, 1024, 4096])
    replicas: int = 4
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    Lam: float = 1.0
    checkpoints: list = field(default_factory=list)
    delta_N: int = 0
    delta_N_list: list = field(default_factory=lambda: [8, 16, 32, 64])
    delta_samples: int = 10000
    b_max: int = 12
    tol_cancel: float = 1e-5
    brute_G: int = 12
    brute_m_max: float | None = None


@dataclass
class BoundsConfig:
    b: float = 1
    p: float = 1
    M_in: float | None = None
    b_values: list = field(default_factory=lambda: [1, 2, 3])
    p_values: list = field(default_factory=lambda: [1, 2])
    shift: float = 0.05


@dataclass
class OutputConfig:
    dir: str = "runs"


SECTIONS = {"initial": InitialConfig, "times": TimeConfig, "particles": ParticleConfig,
            "kolmogorov": KolmogorovConfig, "chaos": ChaosConfig, "bounds": BoundsConfig,
            "output": OutputConfig}


@dataclass
class ExperimentConfig:
    kernels: KernelsConfig
    initial: InitialConfig
    grids: GridConfig
    times: TimeConfig
    particles: ParticleConfig = field(default_factory=ParticleConfig)
    kolmogorov: KolmogorovConfig = field(default_factory=KolmogorovConfig)
    chaos: ChaosConfig = field(default_factory=ChaosConfig)
    bounds: BoundsConfig = field(default_factory=BoundsConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0
    name: str = ""

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        validate_config(raw)
        kw = {"kernels": KernelsConfig(**raw["kernels"]), "grids": GridConfig(**raw["grids"])}
        for key, klass in SECTIONS.items():
            if key in raw:
                kw[key] = klass(**raw[key])
        if "initial" in raw:
            env = {"require": True, "C_max": None}
            env.update(raw["initial"].get("envelope", {}))
            kw["initial"].envelope = env
        cfg = cls(**kw, seed=raw.get("seed", 0), name=raw.get("name", ""))
        cfg.check()
        return cfg

    def check(self):
        """Cross-field checks the schema cannot express."""
        if self.initial.m_profile == "bump" and not self.initial.m_lo < self.initial.m_hi <= self.grids.m_max:
            raise ConfigError("initial: need m_lo < m_hi <= grids.m_max")
        try:
            self.build_kernels()
        except ValueError as exc:
            raise ConfigError(f"kernels: {exc}") from exc
        try:
            self.density()
        except ValueError as exc:
            raise ConfigError(f"initial: {exc}") from exc

    def build_kernels(self) -> Kernels:
        return self.kernels.build()

    def density(self):
        return self.initial.density(self.kernels.dim, self.grids.m_max)

    def to_dict(self) -> dict:
        return asdict(self)

    def identity(self) -> dict:
        """The part of the config that determines results (output location excluded)."""
        d = self.to_dict()
        d.pop("output")
        return d


def validate_config(raw: dict):
    try:
        jsonschema.validate(raw, load_schema("config.schema.json"))
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides: list) -> dict:
    """Apply `a.b.c=value` assignments; values are parsed as JSON when possible."""
    out = copy.deepcopy(raw)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, val = item.split("=", 1)
        parts = key.strip().split(".")
        node = out
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {key!r}: {p!r} is not a section")
            node = nxt
        node[parts[-1]] = _parse_value(val)
    return out


def load_config(path, overrides=None) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return ExperimentConfig.from_dict(apply_overrides(raw, overrides))
