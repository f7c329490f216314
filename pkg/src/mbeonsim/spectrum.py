"""Multi-band channel grid, per-link occupancy and first-fit channel search.

The grid is an ordered sequence of bands on a common 75 GHz channel raster,
separated by guard gaps. Channels are addressed by a single global index;
band-local indices exist only for feature reporting.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .topology import NetworkTopology, Route


class SpectrumError(ValueError):
    """Raised on invalid allocation or band plan arguments."""


@dataclass(frozen=True)
class Band:
    name: str
    n_channels: int


class BandPlan:
    """Ordered bands (lowest frequency first) on a fixed channel raster.

    ``anchor_band``/``anchor_thz`` pin the absolute frequency of the anchor
    band's lowest channel center; everything else follows from the channel
    width and the inter-band gap (edge-to-edge).
    """

    def __init__(
        self,
        bands: list[Band],
        channel_width_ghz: float = 75.0,
        band_gap_ghz: float = 400.0,
        anchor_band: str = "C",
        anchor_thz: float = 191.7,
    ) -> None:
        if not bands:
            raise SpectrumError("band plan needs at least one band")
        names = [b.name for b in bands]
        if len(set(names)) != len(names):
            raise SpectrumError("duplicate band names")
        if any(b.n_channels < 1 for b in bands):
            raise SpectrumError("bands need at least one channel")
        if anchor_band not in names:
            raise SpectrumError(f"anchor band {anchor_band!r} not in plan")
        if channel_width_ghz <= 0 or band_gap_ghz < 0:
            raise SpectrumError("bad channel width or band gap")

        self.bands = list(bands)
        self.channel_width_ghz = channel_width_ghz
        self.band_gap_ghz = band_gap_ghz
        self.anchor_band = anchor_band
        self.anchor_thz = anchor_thz

        self._slices: dict[str, slice] = {}
        start = 0
        for band in bands:
            self._slices[band.name] = slice(start, start + band.n_channels)
            start += band.n_channels
        self.total_channels = start

        width_hz = channel_width_ghz * 1e9
        gap_hz = band_gap_ghz * 1e9
        centers = np.empty(self.total_channels, dtype=float)
        offset = 0.0
        for band in bands:
            sl = self._slices[band.name]
            centers[sl] = offset + width_hz * np.arange(band.n_channels)
            offset = centers[sl][-1] + width_hz + gap_hz
        shift = anchor_thz * 1e12 - centers[self._slices[anchor_band].start]
        self.center_freq_hz = centers + shift

        self._band_of = np.empty(self.total_channels, dtype=object)
        for band in bands:
            self._band_of[self._slices[band.name]] = band.name

    @classmethod
    def default_lcs(cls) -> "BandPlan":
        """L+C+S plan: 268 channels of 75 GHz split 80/80/108, 400 GHz gaps."""
        return cls([Band("L", 80), Band("C", 80), Band("S", 108)])

    @property
    def band_names(self) -> list[str]:
        return [b.name for b in self.bands]

    @property
    def n_bands(self) -> int:
        return len(self.bands)

    def band_slice(self, name: str) -> slice:
        try:
            return self._slices[name]
        except KeyError:
            raise SpectrumError(f"unknown band {name!r}") from None

    def band_of(self, channel: int) -> str:
        if not (0 <= channel < self.total_channels):
            raise SpectrumError(f"channel {channel} out of range")
        return self._band_of[channel]

    def local_index(self, channel: int) -> int:
        return channel - self._slices[self.band_of(channel)].start

    def occupied_width_hz(self) -> float:
        """Edge-to-edge width of the whole grid including inter-band gaps."""
        w = self.channel_width_ghz * 1e9
        return (self.center_freq_hz[-1] + w / 2) - (self.center_freq_hz[0] - w / 2)


@dataclass(frozen=True)
class Lightpath:
    lp_id: int
    route: Route
    channels: tuple[int, ...]
    rates_gbps: tuple[float, ...]
    expiry: float


class SpectrumState:
    """Per-link channel occupancy plus the set of active lightpaths.

    Mutated only through allocate/release; a channel bit is set on a link
    iff exactly one active lightpath covers that (link, channel) pair.
    """

    def __init__(self, topo: NetworkTopology, plan: BandPlan) -> None:
        self.topo = topo
        self.plan = plan
        self.occupancy = np.zeros((topo.n_links, plan.total_channels), dtype=bool)
        self.lightpaths: dict[int, Lightpath] = {}
        self._next_id = 0

    def clear(self) -> None:
        self.occupancy[:] = False
        self.lightpaths.clear()

    def free_on_route(self, route: Route) -> np.ndarray:
        """Boolean vector over all channels: free on every link of the route."""
        return ~self.occupancy[list(route.links)].any(axis=0)

    def allocate(
        self,
        route: Route,
        channels,
        rates_gbps,
        expiry: float,
    ) -> int:
        channels = tuple(int(c) for c in channels)
        if not channels:
            raise SpectrumError("empty channel set")
        cols = list(channels)
        for link in route.links:
            if self.occupancy[link, cols].any():
                raise SpectrumError("double allocation: channel busy on a route link")
        for link in route.links:
            self.occupancy[link, cols] = True
        lp_id = self._next_id
        self._next_id += 1
        self.lightpaths[lp_id] = Lightpath(lp_id, route, channels, tuple(rates_gbps), expiry)
        return lp_id

    def release(self, lp_id: int) -> None:
        try:
            lp = self.lightpaths.pop(lp_id)
        except KeyError:
            raise SpectrumError(f"unknown lightpath id {lp_id}") from None
        self.occupancy[np.ix_(list(lp.route.links), list(lp.channels))] = False

    def occupied_count(self) -> int:
        return int(self.occupancy.sum())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["link", "channel", "occupied"])
            for link in range(self.occupancy.shape[0]):
                for ch in range(self.occupancy.shape[1]):
                    writer.writerow([link, ch, int(self.occupancy[link, ch])])


def band_scan(
    state: SpectrumState, route: Route, band: str, channel_rates: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Eligible channels of a band on a route, in ascending index order.

    A channel is eligible iff it is free on every route link (spectrum
    continuity) and its QoT-limited bit rate on this route is positive.
    Returns (global channel indices, cumulative bit rates).
    """
    sl = state.plan.band_slice(band)
    free = state.free_on_route(route)[sl]
    rates = np.asarray(channel_rates, dtype=float)[sl]
    eligible = np.nonzero(free & (rates > 0))[0]
    return eligible + sl.start, np.cumsum(rates[eligible])


def first_fit_candidates(
    state: SpectrumState,
    route: Route,
    band: str,
    demand_gbps: float,
    qdb,
) -> np.ndarray | None:
    """Lowest-index eligible channels whose summed bit rates cover the demand.

    ``qdb`` is anything exposing ``channel_bitrates(route)``. Returns the
    global channel indices, or None when the band cannot carry the demand.
    """
    if demand_gbps <= 0:
        raise SpectrumError("demand must be positive")
    channels, cum = band_scan(state, route, band, qdb.channel_bitrates(route))
    pos = int(np.searchsorted(cum, demand_gbps))
    if pos >= len(cum):
        return None
    return channels[: pos + 1]


def adjacent_free_spectrum(state: SpectrumState, route: Route, channels) -> int:
    """Free (adjacent link, channel) pairs over the given channels.

    Adjacent links are those incident to a route node without being part
    of the route itself.
    """
    channels = list(channels)
    if not channels:
        raise SpectrumError("empty channel set")
    adj = state.topo.adjacent_links(route)
    if not adj:
        return 0
    return int((~state.occupancy[np.ix_(list(adj), channels)]).sum())
