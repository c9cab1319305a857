"""Run configuration shared by the CLI commands.

Configs are JSON documents with the sections below. A run manifest embeds
the full config under ``"config"`` and can be passed back as ``--config``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from rotamix import rotation as rc
from rotamix.prior import PriorConfig, build_lag_sets
from rotamix.sampler import McmcConfig


@dataclass
class PriorSection:
    a0: float = 1.0
    p_vec: list | None = None
    a_t: int = 10
    q: int = 0
    p: int = 0
    s: int = 12


@dataclass
class HyperSection:
    d: float | list = 1.0
    e: float | list = 1.0
    g: float | list = 1.0


@dataclass
class McmcSection:
    iterations: int = 3000
    burn_in: int = 1500
    seed: int = 0
    theta_min: float = rc.THETA_BOUNDS[0]
    theta_max: float = rc.THETA_BOUNDS[1]
    batch_size: int = 50
    thin: int = 1
    chains: int = 1
    workers: int = 1
    fixed_component: int | None = None


@dataclass
class IoSection:
    input: str | None = None
    output: str = "out"
    rank_transform: bool = False
    rank_scope: str = "global"
    n_t: int = 100
    n_fit: int | None = None
    lps_from: int | None = None
    grid_n: int = 0
    fit_dir: str | None = None


@dataclass
class RunConfig:
    m: int = 2
    T: int | None = None
    prior: PriorSection = field(default_factory=PriorSection)
    hyper: HyperSection = field(default_factory=HyperSection)
    mcmc: McmcSection = field(default_factory=McmcSection)
    io: IoSection = field(default_factory=IoSection)

    _sections = {"prior": PriorSection, "hyper": HyperSection, "mcmc": McmcSection, "io": IoSection}

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if "config" in doc and isinstance(doc["config"], dict):
            doc = doc["config"]
        cfg = cls()
        for key, value in doc.items():
            if key in cls._sections:
                section = getattr(cfg, key)
                names = {f.name for f in fields(section)}
                for k, v in value.items():
                    if k not in names:
                        raise ValueError(f"unknown config key {key}.{k}")
                    setattr(section, k, v)
            elif key in ("m", "T"):
                setattr(cfg, key, value)
            else:
                raise ValueError(f"unknown config key {key!r}")
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {"m": self.m, "T": self.T, **{k: asdict(getattr(self, k)) for k in self._sections}}

    def prior_config(self, T: int) -> PriorConfig:
        return PriorConfig.constant(
            self.m, T, int(self.prior.a_t), a0=float(self.prior.a0),
            p_vec=None if self.prior.p_vec is None else np.asarray(self.prior.p_vec),
            d=self.hyper.d, e=self.hyper.e, g=self.hyper.g,
        )

    def lag_structure(self, T: int):
        return build_lag_sets(T, int(self.prior.q), int(self.prior.p), int(self.prior.s))

    def mcmc_config(self) -> McmcConfig:
        mc = self.mcmc
        return McmcConfig(
            iterations=int(mc.iterations), burn_in=int(mc.burn_in), batch_size=int(mc.batch_size),
            theta_bounds=(float(mc.theta_min), float(mc.theta_max)), seed=int(mc.seed),
            thin=int(mc.thin), chains=int(mc.chains), workers=int(mc.workers),
            fixed_component=None if mc.fixed_component is None else int(mc.fixed_component),
        )
