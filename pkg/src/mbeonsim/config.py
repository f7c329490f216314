"""Experiment configuration: YAML file grammar, validation and hashing.

The config file is a single YAML document; every key has a default so a
minimal file (or none at all) runs the built-in NSFNET scenario. CLI
flags override individual fields. A short hash of the resolved config is
embedded in every output file so results stay traceable to their inputs.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import yaml

from .agent import TrainConfig
from .env import EnvConfig
from .qot import ModulationTable, PhysicalParams, QoTDatabase
from .spectrum import Band, BandPlan
from .topology import NetworkTopology, builtin_nsfnet, load_topology
from .traffic import DEFAULT_BITRATES_GBPS

KNOWN_POLICIES = ("fbff", "daff", "baff", "random", "drl")


class ConfigError(Exception):
    """Invalid or inconsistent experiment configuration."""


@dataclass
class TrafficSection:
    loads: list[float] = field(default_factory=lambda: [600.0, 700.0, 800.0])
    bitrates_gbps: list[float] = field(default_factory=lambda: list(DEFAULT_BITRATES_GBPS))
    requests_per_episode: int = 1000
    mean_holding_s: float = 1.0


@dataclass
class ExperimentConfig:
    topology: str = "nsfnet"
    max_span_km: float = 80.0
    k_routes: int = 5
    band_plan: BandPlan = field(default_factory=BandPlan.default_lcs)
    physical: PhysicalParams = field(default_factory=PhysicalParams)
    target_ber: float = 1.5e-2
    traffic: TrafficSection = field(default_factory=TrafficSection)
    policy: str = "fbff"
    band_order: tuple = ("C", "L", "S")
    train: TrainConfig = field(default_factory=TrainConfig)
    train_episodes: int = 1500
    max_channels_per_request: int = 8
    seeds: list[int] = field(default_factory=lambda: [1])
    out_dir: str = "results"
    workers: int = 1
    checkpoint: str | None = None

    def validate(self) -> None:
        if self.topology != "nsfnet" and not os.path.exists(self.topology):
            raise ConfigError(f"topology file not found: {self.topology}")
        if self.k_routes < 1:
            raise ConfigError("k_routes must be >= 1")
        if not self.traffic.loads or any(l <= 0 for l in self.traffic.loads):
            raise ConfigError("traffic loads must be positive and nonempty")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if self.policy not in KNOWN_POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}; choose from {KNOWN_POLICIES}")
        if not (0.0 < self.target_ber < 0.5):
            raise ConfigError("target_ber must lie in (0, 0.5)")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            self.train.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # --- canonical form and hash -----------------------------------------

    def canonical(self) -> dict:
        return {
            "topology": self.topology,
            "max_span_km": self.max_span_km,
            "k_routes": self.k_routes,
            "band_plan": {
                "bands": [[b.name, b.n_channels] for b in self.band_plan.bands],
                "channel_width_ghz": self.band_plan.channel_width_ghz,
                "band_gap_ghz": self.band_plan.band_gap_ghz,
                "anchor_band": self.band_plan.anchor_band,
                "anchor_thz": self.band_plan.anchor_thz,
            },
            "physical": {
                "noise_figure_db": dict(sorted(self.physical.noise_figure_db.items())),
                "attenuation_db_per_km": dict(sorted(self.physical.attenuation_db_per_km.items())),
                "nli_coeff_per_w2": dict(sorted(self.physical.nli_coeff_per_w2.items())),
                "launch_power_dbm": self.physical.launch_power_dbm,
                "symbol_rate_gbaud": self.physical.symbol_rate_gbaud,
                "trx_snr_db": self.physical.trx_snr_db,
                "filtering_penalty_db": self.physical.filtering_penalty_db,
                "aging_margin_db": self.physical.aging_margin_db,
            },
            "target_ber": self.target_ber,
            "traffic": {
                "loads": list(self.traffic.loads),
                "bitrates_gbps": list(self.traffic.bitrates_gbps),
                "requests_per_episode": self.traffic.requests_per_episode,
                "mean_holding_s": self.traffic.mean_holding_s,
            },
            "policy": self.policy,
            "band_order": list(self.band_order),
            "train": {
                "gamma": self.train.gamma,
                "learning_rate": self.train.learning_rate,
                "buffer_size": self.train.buffer_size,
                "minibatch_size": self.train.minibatch_size,
                "value_coeff": self.train.value_coeff,
                "entropy_coeff": self.train.entropy_coeff,
                "grad_clip": self.train.grad_clip,
                "hidden_layers": list(self.train.hidden_layers),
                "init_seed": self.train.init_seed,
            },
            "train_episodes": self.train_episodes,
            "max_channels_per_request": self.max_channels_per_request,
            "seeds": list(self.seeds),
        }

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    # --- object builders ---------------------------------------------------

    def build_topology(self) -> NetworkTopology:
        if self.topology == "nsfnet":
            return builtin_nsfnet(max_span_km=self.max_span_km)
        return load_topology(self.topology, max_span_km=self.max_span_km)

    def build_table(self) -> ModulationTable:
        return ModulationTable.from_ber_target(self.target_ber)

    def build_qot_database(self, topo: NetworkTopology | None = None) -> QoTDatabase:
        topo = topo or self.build_topology()
        return QoTDatabase.build(
            topo, self.band_plan, self.physical, self.k_routes, self.build_table()
        )

    def env_config(self, load: float) -> EnvConfig:
        return EnvConfig(
            load_erlang=load,
            mean_holding_s=self.traffic.mean_holding_s,
            requests_per_episode=self.traffic.requests_per_episode,
            bitrates_gbps=tuple(self.traffic.bitrates_gbps),
            max_channels_per_request=self.max_channels_per_request,
        )


def _parse_band_plan(raw: dict) -> BandPlan:
    kwargs = {}
    bands = [Band(str(name), int(count)) for name, count in raw.get("bands", [])]
    if not bands:
        bands = BandPlan.default_lcs().bands
    for key in ("channel_width_ghz", "band_gap_ghz", "anchor_thz"):
        if key in raw:
            kwargs[key] = float(raw[key])
    if "anchor_band" in raw:
        kwargs["anchor_band"] = str(raw["anchor_band"])
    return BandPlan(bands, **kwargs)


def _parse_physical(raw: dict) -> PhysicalParams:
    params = PhysicalParams()
    for key in ("noise_figure_db", "attenuation_db_per_km", "nli_coeff_per_w2"):
        if key in raw:
            setattr(params, key, {str(k): float(v) for k, v in raw[key].items()})
    for key in (
        "launch_power_dbm",
        "symbol_rate_gbaud",
        "trx_snr_db",
        "filtering_penalty_db",
        "aging_margin_db",
    ):
        if key in raw:
            setattr(params, key, float(raw[key]))
    return params


def _parse_train(raw: dict) -> TrainConfig:
    cfg = TrainConfig()
    for key in (
        "gamma",
        "learning_rate",
        "value_coeff",
        "entropy_coeff",
        "grad_clip",
    ):
        if key in raw:
            setattr(cfg, key, float(raw[key]))
    for key in ("buffer_size", "minibatch_size", "init_seed"):
        if key in raw:
            setattr(cfg, key, int(raw[key]))
    if "hidden_layers" in raw:
        cfg.hidden_layers = tuple(int(h) for h in raw["hidden_layers"])
    return cfg


def load_config(path: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Read the YAML config (all keys optional) and apply flag overrides."""
    raw: dict = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            try:
                raw = yaml.safe_load(fh) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")

    cfg = ExperimentConfig()
    if "topology" in raw:
        cfg.topology = str(raw["topology"])
    if "max_span_km" in raw:
        cfg.max_span_km = float(raw["max_span_km"])
    if "k_routes" in raw:
        cfg.k_routes = int(raw["k_routes"])
    if "band_plan" in raw:
        cfg.band_plan = _parse_band_plan(raw["band_plan"])
    if "physical" in raw:
        cfg.physical = _parse_physical(raw["physical"])
        if "target_ber" in raw["physical"]:
            cfg.target_ber = float(raw["physical"]["target_ber"])
    if "target_ber" in raw:
        cfg.target_ber = float(raw["target_ber"])
    traffic_raw = raw.get("traffic", {})
    cfg.traffic = TrafficSection(
        loads=[float(l) for l in traffic_raw.get("loads", TrafficSection().loads)],
        bitrates_gbps=[float(b) for b in traffic_raw.get("bitrates_gbps", DEFAULT_BITRATES_GBPS)],
        requests_per_episode=int(traffic_raw.get("requests_per_episode", 1000)),
        mean_holding_s=float(traffic_raw.get("mean_holding_s", 1.0)),
    )
    if "policy" in raw:
        cfg.policy = str(raw["policy"])
    if "band_order" in raw:
        cfg.band_order = tuple(str(b) for b in raw["band_order"])
    if "train" in raw:
        cfg.train = _parse_train(raw["train"])
        if "episodes" in raw["train"]:
            cfg.train_episodes = int(raw["train"]["episodes"])
    if "train_episodes" in raw:
        cfg.train_episodes = int(raw["train_episodes"])
    if "max_channels_per_request" in raw:
        cfg.max_channels_per_request = int(raw["max_channels_per_request"])
    if "seeds" in raw:
        cfg.seeds = [int(s) for s in raw["seeds"]]
    if "out_dir" in raw:
        cfg.out_dir = str(raw["out_dir"])
    if "workers" in raw:
        cfg.workers = int(raw["workers"])
    if "checkpoint" in raw and raw["checkpoint"] is not None:
        cfg.checkpoint = str(raw["checkpoint"])

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "policy":
            cfg.policy = value
        elif key == "seeds":
            cfg.seeds = list(value)
        elif key == "episodes":
            cfg.train_episodes = int(value)
        elif key == "loads":
            cfg.traffic.loads = [float(v) for v in value]
        elif key == "out":
            cfg.out_dir = value
        elif key == "checkpoint":
            cfg.checkpoint = value
        elif key == "workers":
            cfg.workers = int(value)
        else:
            raise ConfigError(f"unknown override {key!r}")

    cfg.validate()
    return cfg
