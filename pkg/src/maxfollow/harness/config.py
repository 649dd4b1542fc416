"""Scenario configuration documents (TOML).

A config is flat key/value pairs plus optional one-level tables ``[oracle]``,
``[mdp]`` (inline MDP) and ``[lqr]``::

    name = "chain3-exact"
    example = "chain3"
    horizon = 10
    seeds = [0, 1, 2]

    [oracle]
    flavor = "exact"
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np
import tomli
import tomli_w

from ..examples import EXAMPLES, build_example
from ..mdp import ConstituentSet, DeterministicPolicy, TabularMdp
from ..oracle import FLAVORS, OracleSpec


class ConfigError(ValueError):
    pass


@dataclass
class OracleConfig:
    flavor: str = "exact"
    alpha: float | None = None
    features: str = "onehot"
    n: int | None = None
    eps: float | None = None
    flips: list = field(default_factory=list)

    def spec(self) -> OracleSpec:
        return OracleSpec(flavor=self.flavor, alpha=self.alpha, features=self.features, n=self.n,
                          eps=self.eps, flips=tuple(tuple(f) for f in self.flips))


@dataclass
class LqrConfig:
    b_eps: float = 0.1
    stable: float = 0.5
    unstable: float = 1.05
    gamma: float = 0.9
    sigma2: float = 0.01
    rollouts: int = 2000
    directions: int = 10
    fit_grid: int = 9


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    example: str | None = None
    horizon: int = 10
    eps_r: float = 0.25
    grid: int = 11
    start: int | None = None
    start_dist: list | None = None
    gridworld_seed: int = 0
    gridworld_k: int = 3
    slip: float = 0.0
    constituents: list | None = None
    epsilon: float = 0.5
    c_alpha: float = 1.0
    c_beta: float = 1.0
    beta: float | None = None
    seeds: list = field(default_factory=lambda: [0])
    epsilons: list = field(default_factory=lambda: [0.25, 0.5, 1.0])
    random_instances: int = 0
    enumeration_limit: int = 1_000_000
    workers: int = 1
    out_dir: str = "out"
    oracle: OracleConfig = field(default_factory=OracleConfig)
    mdp: dict | None = None
    lqr: LqrConfig = field(default_factory=LqrConfig)

    def validate(self) -> None:
        if not self.seeds:
            raise ConfigError("seeds must be a non-empty list")
        if self.mdp is None and self.example is None:
            raise ConfigError("config needs either 'example' or an [mdp] block")
        if self.example is not None and self.example not in EXAMPLES:
            raise ConfigError(f"unknown example {self.example!r}")
        if self.oracle.flavor not in FLAVORS:
            raise ConfigError(f"unknown oracle flavor {self.oracle.flavor!r}")
        if self.horizon < 1:
            raise ConfigError("horizon must be positive")
        if not 0 < self.epsilon <= 1 or any(not 0 < e <= 1 for e in self.epsilons):
            raise ConfigError("epsilon values must lie in (0, 1]")
        if self.mdp is not None:
            for key in ("transition", "reward", "start_dist", "policies"):
                if key not in self.mdp:
                    raise ConfigError(f"[mdp] block lacks {key!r}")

    def build(self) -> tuple[TabularMdp, ConstituentSet]:
        """Resolve the MDP and constituent set this config describes."""
        if self.mdp is not None:
            m = self.mdp
            mdp = TabularMdp(np.asarray(m["transition"], float), np.asarray(m["reward"], float),
                             np.asarray(m["start_dist"], float), self.horizon, name=self.name)
            pis = ConstituentSet(tuple(DeterministicPolicy(p, name=f"pi_{i}")
                                       for i, p in enumerate(m["policies"])))
        else:
            mdp, pis = build_example(self.example, eps_r=self.eps_r, H=self.horizon, grid=self.grid,
                                     start=self.start, seed=self.gridworld_seed, K=self.gridworld_k,
                                     slip=self.slip)
        if self.start_dist is not None:
            mdp = mdp.with_start(self.start_dist)
        elif self.start is not None and self.mdp is not None:
            mdp = mdp.with_start(self.start)
        if self.constituents is not None:
            pis = pis.select(self.constituents)
        return mdp, pis

    def to_dict(self) -> dict:
        return _drop_none(asdict(self))

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())


def _drop_none(d):
    if isinstance(d, dict):
        return {k: _drop_none(v) for k, v in d.items() if v is not None}
    return d


def from_dict(raw: dict) -> ScenarioConfig:
    known = {f.name for f in fields(ScenarioConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    kw = dict(raw)
    for key, cls in (("oracle", OracleConfig), ("lqr", LqrConfig)):
        if key in kw:
            sub = kw[key]
            bad = sorted(set(sub) - {f.name for f in fields(cls)})
            if bad:
                raise ConfigError(f"unknown [{key}] keys: {bad}")
            kw[key] = cls(**sub)
    cfg = ScenarioConfig(**kw)
    cfg.validate()
    return cfg


def loads(text: str) -> ScenarioConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return from_dict(raw)


def load(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
