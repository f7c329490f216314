"""Poisson request generation for the dynamic provisioning scenario."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .topology import NetworkTopology

DEFAULT_BITRATES_GBPS = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0)


@dataclass(frozen=True)
class Request:
    req_id: int
    source: int
    dest: int
    bitrate_gbps: float
    arrival: float
    holding: float

    def __post_init__(self) -> None:
        if self.source == self.dest:
            raise ValueError("source equals destination")
        if self.bitrate_gbps <= 0:
            raise ValueError("bit rate must be positive")
        if self.holding <= 0:
            raise ValueError("holding time must be positive")


def generate_requests(
    seed: int,
    topo: NetworkTopology,
    load_erlang: float,
    mean_holding_s: float = 1.0,
    n_requests: int = 1000,
    bitrate_set=DEFAULT_BITRATES_GBPS,
) -> list[Request]:
    """Poisson arrivals at rate load/mean_holding, exponential holding times.

    Source/destination pairs are uniform over ordered node pairs and bit
    rates uniform over the given set; the stream is a pure function of the
    seed.
    """
    if load_erlang <= 0:
        raise ValueError("offered load must be positive")
    if n_requests < 1:
        raise ValueError("need at least one request")
    if mean_holding_s <= 0:
        raise ValueError("mean holding time must be positive")
    bitrates = list(bitrate_set)
    if not bitrates:
        raise ValueError("empty bit rate set")

    rng = np.random.default_rng(seed)
    lam = load_erlang / mean_holding_s
    arrivals = np.cumsum(rng.exponential(1.0 / lam, size=n_requests))
    holdings = rng.exponential(mean_holding_s, size=n_requests)
    pairs = [(s, d) for s in topo.nodes for d in topo.nodes if s != d]
    pair_idx = rng.integers(len(pairs), size=n_requests)
    rate_idx = rng.integers(len(bitrates), size=n_requests)

    return [
        Request(
            req_id=i,
            source=pairs[pair_idx[i]][0],
            dest=pairs[pair_idx[i]][1],
            bitrate_gbps=float(bitrates[rate_idx[i]]),
            arrival=float(arrivals[i]),
            holding=float(holdings[i]),
        )
        for i in range(n_requests)
    ]


def requests_to_csv(requests: list[Request], path, header_comment: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["id", "src", "dst", "bitrate", "arrival", "holding"])
        for r in requests:
            writer.writerow([r.req_id, r.source, r.dest, f"{r.bitrate_gbps:g}",
                             f"{r.arrival!r}", f"{r.holding!r}"])


def requests_from_csv(path) -> list[Request]:
    with open(path, "r", encoding="utf-8") as fh:
        data = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(data)
    return [
        Request(
            req_id=int(row["id"]),
            source=int(row["src"]),
            dest=int(row["dst"]),
            bitrate_gbps=float(row["bitrate"]),
            arrival=float(row["arrival"]),
            holding=float(row["holding"]),
        )
        for row in reader
    ]
