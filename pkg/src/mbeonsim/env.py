"""Dynamic provisioning environment: state encoding, masking, step and reward.

Each step handles one arriving request. The observation concatenates, per
candidate route, the route's link-indicator vector and five per-band
features of the first-fit candidate channels; actions pick one of the
route/band combinations or reject. Reward is +1 for a provisioned request
and -1 otherwise. Departures are applied lazily when the next request
arrives, which is equivalent for blocking statistics.
"""

from __future__ import annotations

import csv
import heapq
from dataclasses import dataclass, field

import numpy as np

from .qot import QoTDatabase
from .spectrum import BandPlan, SpectrumState
from .topology import NetworkTopology, Route
from .traffic import DEFAULT_BITRATES_GBPS, Request, generate_requests


@dataclass
class EnvConfig:
    load_erlang: float
    mean_holding_s: float = 1.0
    requests_per_episode: int = 1000
    bitrates_gbps: tuple = DEFAULT_BITRATES_GBPS
    max_channels_per_request: int = 8

    def validate(self) -> None:
        if self.load_erlang <= 0:
            raise ValueError("offered load must be positive")
        if self.requests_per_episode < 1:
            raise ValueError("episode needs at least one request")
        if self.max_channels_per_request < 1:
            raise ValueError("channel cap must be positive")
        if not self.bitrates_gbps:
            raise ValueError("empty bit rate set")


@dataclass(frozen=True)
class CandidateSet:
    channels: tuple[int, ...]
    rates_gbps: tuple[float, ...]

    @property
    def total_rate(self) -> float:
        return float(sum(self.rates_gbps))


@dataclass(frozen=True)
class StepOutcome:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


@dataclass
class DecisionContext:
    """Everything a policy may look at when choosing an action."""

    request: Request
    routes: list[Route]
    mask: np.ndarray
    candidates: dict[tuple[int, int], CandidateSet]
    observation: np.ndarray
    band_names: list[str]
    k_routes: int
    reject_action: int

    def action_of(self, route_idx: int, band_idx: int) -> int:
        return route_idx * len(self.band_names) + band_idx


@dataclass
class EpisodeLog:
    rows: list = field(default_factory=list)
    provisioned: int = 0
    blocked: int = 0

    @property
    def total(self) -> int:
        return self.provisioned + self.blocked

    def to_csv(self, path, header_comment: str | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh)
            writer.writerow(
                ["t", "src", "dst", "bitrate", "action", "route_idx", "band", "channels", "reward"]
            )
            writer.writerows(self.rows)


def blocking_probability(log: EpisodeLog) -> float:
    if log.total == 0:
        raise ValueError("empty episode log")
    return log.blocked / log.total


class RmbsaEnv:
    """Single-threaded event-loop environment over a shared QoT database."""

    def __init__(
        self,
        topo: NetworkTopology,
        plan: BandPlan,
        qdb: QoTDatabase,
        config: EnvConfig,
    ) -> None:
        config.validate()
        self.topo = topo
        self.plan = plan
        self.qdb = qdb
        self.config = config
        self.k_routes = qdb.k
        self.n_bands = plan.n_bands
        self.n_links = topo.n_links
        self.state = SpectrumState(topo, plan)

        self._band_slices = [plan.band_slice(name) for name in plan.band_names]
        self._band_sizes = np.array([sl.stop - sl.start for sl in self._band_slices])
        self._max_rate = float(qdb.table.bitrates[-1])
        self._max_degree = topo.max_degree

        # Static per-route data, shared across episodes. Band-sliced rate
        # views are precomputed because feature extraction runs per step.
        self._route_cache: dict[tuple[int, int, int], dict] = {}
        for s, d in qdb.pairs():
            for route in qdb.routes(s, d):
                vec = np.zeros(self.n_links)
                vec[list(route.links)] = 1.0
                rates = qdb.channel_bitrates(route)
                self._route_cache[(s, d, route.k_index)] = {
                    "link_vec": vec,
                    "links": np.array(route.links, dtype=int),
                    "adj": np.array(topo.adjacent_links(route), dtype=int),
                    "rates": rates,
                    "band_rates": [rates[sl] for sl in self._band_slices],
                    "band_pos": [rates[sl] > 0 for sl in self._band_slices],
                }

        self._requests: list[Request] = []
        self._t = 0
        self._done = True
        self._departures: list[tuple[float, int]] = []
        self._log = EpisodeLog()
        self._context: DecisionContext | None = None

    # --- sizing ------------------------------------------------------------

    @property
    def observation_size(self) -> int:
        return self.k_routes * (self.n_links + 5 * self.n_bands)

    @property
    def n_actions(self) -> int:
        return self.k_routes * self.n_bands + 1

    @property
    def reject_action(self) -> int:
        return self.n_actions - 1

    # --- episode protocol ----------------------------------------------------

    def reset(self, seed: int) -> np.ndarray:
        self.state.clear()
        self._requests = generate_requests(
            seed,
            self.topo,
            self.config.load_erlang,
            self.config.mean_holding_s,
            self.config.requests_per_episode,
            self.config.bitrates_gbps,
        )
        self._t = 0
        self._done = False
        self._departures = []
        self._log = EpisodeLog()
        self._prepare(self._requests[0])
        return self._context.observation

    def step(self, action: int) -> StepOutcome:
        if self._done:
            raise RuntimeError("step() after episode end")
        if not (0 <= action < self.n_actions):
            raise ValueError(f"action {action} out of range")
        ctx = self._context
        req = ctx.request
        info: dict = {"blocked": True, "route_idx": None, "band": None,
                      "channels": (), "lp_id": None}
        reward = -1.0

        if action != self.reject_action and ctx.mask[action]:
            r_idx, b_idx = divmod(action, self.n_bands)
            cand = ctx.candidates[(r_idx, b_idx)]
            route = ctx.routes[r_idx]
            lp_id = self.state.allocate(
                route, cand.channels, cand.rates_gbps, req.arrival + req.holding
            )
            heapq.heappush(self._departures, (req.arrival + req.holding, lp_id))
            reward = 1.0
            info = {
                "blocked": False,
                "route_idx": r_idx,
                "band": self.plan.band_names[b_idx],
                "channels": cand.channels,
                "lp_id": lp_id,
            }

        if info["blocked"]:
            self._log.blocked += 1
        else:
            self._log.provisioned += 1
        self._log.rows.append(
            [
                self._t,
                req.source,
                req.dest,
                f"{req.bitrate_gbps:g}",
                action,
                "" if info["route_idx"] is None else info["route_idx"],
                info["band"] or "",
                ";".join(str(c) for c in info["channels"]),
                int(reward),
            ]
        )

        self._t += 1
        if self._t >= len(self._requests):
            self._done = True
            self._context = None
            obs = np.zeros(self.observation_size)
        else:
            nxt = self._requests[self._t]
            self._release_until(nxt.arrival)
            self._prepare(nxt)
            obs = self._context.observation
        return StepOutcome(obs, reward, self._done, info)

    @property
    def done(self) -> bool:
        return self._done

    @property
    def episode_log(self) -> EpisodeLog:
        return self._log

    def action_mask(self) -> np.ndarray:
        return self._context.mask

    def decision_context(self) -> DecisionContext:
        return self._context

    # --- internals -----------------------------------------------------------

    def _release_until(self, now: float) -> None:
        while self._departures and self._departures[0][0] <= now:
            _, lp_id = heapq.heappop(self._departures)
            self.state.release(lp_id)

    def _prepare(self, req: Request) -> None:
        routes = self.qdb.routes(req.source, req.dest)[: self.k_routes]
        block = self.n_links + 5 * self.n_bands
        obs = np.zeros(self.observation_size)
        mask = np.zeros(self.n_actions, dtype=bool)
        mask[-1] = True
        candidates: dict[tuple[int, int], CandidateSet] = {}

        cap_i = self.config.max_channels_per_request
        demand = req.bitrate_gbps
        occ = self.state.occupancy
        for r_idx, route in enumerate(routes):
            cache = self._route_cache[(req.source, req.dest, route.k_index)]
            base = r_idx * block
            obs[base : base + self.n_links] = cache["link_vec"]
            free = ~occ[cache["links"]].any(axis=0)
            adj = cache["adj"]
            n_adj = len(adj)
            adj_occ = occ[adj] if n_adj else None
            feat_base = base + self.n_links
            for b_idx, sl in enumerate(self._band_slices):
                eligible = (free[sl] & cache["band_pos"][b_idx]).nonzero()[0]
                if eligible.size == 0:
                    continue
                elig_rates = cache["band_rates"][b_idx][eligible]
                cum = elig_rates.cumsum()
                n_band = self._band_sizes[b_idx]
                f_lo = feat_base + 5 * b_idx
                # (v) total bit rate over every free QoT-valid channel in band
                obs[f_lo + 4] = cum[-1] / (n_band * self._max_rate)
                pos = int(cum.searchsorted(demand))
                if pos < cum.size:
                    chosen = eligible[: pos + 1]
                    n_chosen = pos + 1
                    mask[r_idx * self.n_bands + b_idx] = True
                    candidates[(r_idx, b_idx)] = CandidateSet(
                        tuple(int(c) + sl.start for c in chosen),
                        tuple(float(r) for r in elig_rates[: n_chosen]),
                    )
                    obs[f_lo] = min(1.0, n_chosen / cap_i)
                    obs[f_lo + 1] = cum[pos] / (n_band * self._max_rate)
                    obs[f_lo + 2] = chosen.sum() / (n_chosen * n_band)
                    if n_adj:
                        occupied = int(adj_occ[:, chosen + sl.start].sum())
                        raw = n_adj * n_chosen - occupied
                        obs[f_lo + 3] = min(1.0, raw / (self._max_degree * n_chosen))

        self._context = DecisionContext(
            request=req,
            routes=list(routes),
            mask=mask,
            candidates=candidates,
            observation=obs,
            band_names=self.plan.band_names,
            k_routes=self.k_routes,
            reject_action=self.reject_action,
        )


def run_episode(env: RmbsaEnv, policy, seed: int, rng=None) -> EpisodeLog:
    """Roll one full episode under a policy(context, rng) callable."""
    if rng is None:
        rng = np.random.default_rng(seed)
    env.reset(seed)
    while not env.done:
        action = policy(env.decision_context(), rng)
        env.step(action)
    return env.episode_log
