"""GSNR estimation, modulation thresholds and the per-connection QoT database.

The lightpath GSNR aggregates amplifier ASE noise, nonlinear interference
and the transceiver noise floor as inverse SNRs, then applies filtering and
aging penalties in dB. NLI uses a pluggable per-span incoherent model with
a configurable per-band coefficient; swap ``nli_fn`` to change it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import h as PLANCK_H

from .spectrum import BandPlan
from .topology import NetworkTopology, Route, k_shortest_paths


class QotError(ValueError):
    """Raised for inconsistent physical parameters or database misuse."""


def _db_to_lin(db: float) -> float:
    return 10.0 ** (db / 10.0)


def _dbm_to_w(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass
class PhysicalParams:
    """Per-band amplifier/fiber figures and system-level SNR terms.

    Only the amplifier noise figures (C 4.5 dB, L 5 dB, S 6 dB) are
    vendor-style reference values; the rest are reproducible defaults and
    freely configurable. ``nli_coeff_per_w2`` is the per-span incoherent
    NLI coefficient, calibrated so a 1000 km C-band path lands just above
    the PM-QPSK threshold at 0 dBm launch power.
    """

    noise_figure_db: dict[str, float] = field(
        default_factory=lambda: {"L": 5.0, "C": 4.5, "S": 6.0}
    )
    attenuation_db_per_km: dict[str, float] = field(
        default_factory=lambda: {"L": 0.22, "C": 0.20, "S": 0.21}
    )
    nli_coeff_per_w2: dict[str, float] = field(
        default_factory=lambda: {"L": 7.2e3, "C": 8.0e3, "S": 9.6e3}
    )
    launch_power_dbm: float = 0.0
    symbol_rate_gbaud: float = 64.0
    trx_snr_db: float = 20.0
    filtering_penalty_db: float = 1.0
    aging_margin_db: float = 1.0
    planck_js: float = PLANCK_H

    def validate(self, plan: BandPlan) -> None:
        for name in plan.band_names:
            for table, label in (
                (self.noise_figure_db, "noise figure"),
                (self.attenuation_db_per_km, "attenuation"),
                (self.nli_coeff_per_w2, "NLI coefficient"),
            ):
                if name not in table:
                    raise QotError(f"missing {label} for band {name!r}")
        if any(nf < 3.0 for nf in self.noise_figure_db.values()):
            raise QotError("noise figures below the 3 dB quantum limit")
        if any(a <= 0 for a in self.attenuation_db_per_km.values()):
            raise QotError("attenuation must be positive")
        if self.symbol_rate_gbaud <= 0:
            raise QotError("symbol rate must be positive")

    @property
    def launch_power_w(self) -> float:
        return _dbm_to_w(self.launch_power_dbm)

    @property
    def symbol_rate_baud(self) -> float:
        return self.symbol_rate_gbaud * 1e9


def ase_sigma(route: Route, channel: int, params: PhysicalParams, plan: BandPlan) -> float:
    """Linear ASE noise-to-signal ratio accumulated over the route's spans.

    Each span's amplifier exactly compensates the span loss G, adding
    nF * h * f * (G - 1) * Rch of ASE power referenced to the launch power.
    """
    band = plan.band_of(channel)
    nf = _db_to_lin(params.noise_figure_db[band])
    att = params.attenuation_db_per_km[band]
    f_hz = float(plan.center_freq_hz[channel])
    per_span_scale = nf * params.planck_js * f_hz * params.symbol_rate_baud
    total = 0.0
    for span_km in route.span_lengths_km:
        gain = _db_to_lin(att * span_km)
        total += per_span_scale * (gain - 1.0)
    return total / params.launch_power_w


def nli_sigma(route: Route, channel: int, params: PhysicalParams, plan: BandPlan) -> float:
    """Incoherent per-span NLI noise-to-signal ratio: spans * eta * Ptx^2."""
    band = plan.band_of(channel)
    eta = params.nli_coeff_per_w2[band]
    p = params.launch_power_w
    return len(route.span_lengths_km) * eta * p * p


def gsnr(
    route: Route,
    channel: int,
    params: PhysicalParams,
    plan: BandPlan,
    nli_fn=nli_sigma,
) -> float:
    """Lightpath GSNR in dB on the given channel.

    10*log10(1 / (sigma_ASE + sigma_NLI + 1/SNR_TRx)) minus the filtering
    and aging penalties in dB.
    """
    nsr = (
        ase_sigma(route, channel, params, plan)
        + nli_fn(route, channel, params, plan)
        + 1.0 / _db_to_lin(params.trx_snr_db)
    )
    return 10.0 * math.log10(1.0 / nsr) - params.filtering_penalty_db - params.aging_margin_db


# --- modulation formats -----------------------------------------------------

_FORMAT_BITS = {
    "PM-BPSK": 1,
    "PM-QPSK": 2,
    "PM-8QAM": 3,
    "PM-16QAM": 4,
    "PM-32QAM": 5,
    "PM-64QAM": 6,
}


def _qfunc(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def ber_for_snr(bits_per_symbol: int, snr_linear: float) -> float:
    """Gray-coded M-QAM bit error rate at the given per-polarization SNR.

    BPSK uses BER = Q(sqrt(2*SNR)); larger constellations use the standard
    leading-term approximation (4/log2 M)(1 - 1/sqrt(M)) Q(sqrt(3 SNR/(M-1))).
    Polarization multiplexing doubles capacity, not the threshold.
    """
    if snr_linear <= 0:
        return 0.5
    m = 2 ** bits_per_symbol
    if m == 2:
        return _qfunc(math.sqrt(2.0 * snr_linear))
    return (
        (4.0 / bits_per_symbol)
        * (1.0 - 1.0 / math.sqrt(m))
        * _qfunc(math.sqrt(3.0 * snr_linear / (m - 1.0)))
    )


def required_snr_for_ber(format_name: str, target_ber: float, max_iter: int = 100) -> float:
    """SNR in dB at which the format hits the target pre-FEC BER.

    Inverts ``ber_for_snr`` by bisection on log-SNR; BER is strictly
    decreasing in SNR so the bracket always contains the root.
    """
    if format_name not in _FORMAT_BITS:
        raise QotError(f"unknown modulation format {format_name!r}")
    if not (0.0 < target_ber < 0.5):
        raise QotError("target BER must lie in (0, 0.5)")
    bits = _FORMAT_BITS[format_name]
    lo, hi = 1e-6, 1e8
    if ber_for_snr(bits, lo) < target_ber or ber_for_snr(bits, hi) > target_ber:
        raise QotError("target BER outside the invertible range")
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        if ber_for_snr(bits, mid) > target_ber:
            lo = mid
        else:
            hi = mid
        if hi / lo - 1.0 < 1e-12:
            break
    else:
        raise QotError(f"no convergence within {max_iter} iterations")
    return 10.0 * math.log10(math.sqrt(lo * hi))


@dataclass(frozen=True)
class ModulationFormat:
    name: str
    bits_per_symbol: int
    threshold_db: float
    bitrate_gbps: float


class ModulationTable:
    """Ordered formats with strictly increasing GSNR thresholds."""

    def __init__(self, formats: list[ModulationFormat]) -> None:
        if not formats:
            raise QotError("empty modulation table")
        thresholds = [f.threshold_db for f in formats]
        if any(t1 >= t2 for t1, t2 in zip(thresholds, thresholds[1:])):
            raise QotError("thresholds must be strictly increasing")
        self.formats = list(formats)
        self._thresholds = np.array(thresholds)

    @classmethod
    def from_ber_target(cls, target_ber: float = 1.5e-2) -> "ModulationTable":
        """The six 64 GBd formats, thresholds derived from the BER target.

        Net bit rates run 100..600 Gb/s from PM-BPSK up to PM-64QAM.
        """
        formats = [
            ModulationFormat(name, bits, required_snr_for_ber(name, target_ber), 100.0 * bits)
            for name, bits in _FORMAT_BITS.items()
        ]
        return cls(formats)

    def __len__(self) -> int:
        return len(self.formats)

    def best(self, gsnr_db: float) -> ModulationFormat | None:
        """Highest format whose threshold is met, or None."""
        idx = int(np.searchsorted(self._thresholds, gsnr_db, side="right")) - 1
        return self.formats[idx] if idx >= 0 else None

    def best_index(self, gsnr_db: np.ndarray) -> np.ndarray:
        """Vectorized ``best``: per-entry format index, -1 when below all."""
        return np.searchsorted(self._thresholds, gsnr_db, side="right") - 1

    @property
    def bitrates(self) -> np.ndarray:
        return np.array([f.bitrate_gbps for f in self.formats])


# --- connections QoT database ------------------------------------------------


class QoTDatabase:
    """Precomputed (route, channel) -> GSNR / max format / max bit rate map.

    Built once per scenario over every ordered node pair's k shortest
    paths; read-only afterwards and safely shared across environments.
    """

    def __init__(
        self,
        plan: BandPlan,
        table: ModulationTable,
        k: int,
        routes: dict[tuple[int, int], list[Route]],
        gsnr_db: dict[tuple[int, int], np.ndarray],
        format_idx: dict[tuple[int, int], np.ndarray],
        bitrate_gbps: dict[tuple[int, int], np.ndarray],
    ) -> None:
        self.plan = plan
        self.table = table
        self.k = k
        self._routes = routes
        self._gsnr = gsnr_db
        self._format = format_idx
        self._bitrate = bitrate_gbps

    @classmethod
    def build(
        cls,
        topo: NetworkTopology,
        plan: BandPlan,
        params: PhysicalParams,
        k: int,
        table: ModulationTable | None = None,
        nli_fn=nli_sigma,
    ) -> "QoTDatabase":
        params.validate(plan)
        if table is None:
            table = ModulationTable.from_ber_target()
        n_ch = plan.total_channels

        # Per-band channel-frequency factors shared by all routes.
        band_rows = {name: plan.band_slice(name) for name in plan.band_names}

        routes: dict[tuple[int, int], list[Route]] = {}
        gsnr_map: dict[tuple[int, int], np.ndarray] = {}
        fmt_map: dict[tuple[int, int], np.ndarray] = {}
        rate_map: dict[tuple[int, int], np.ndarray] = {}
        trx_nsr = 1.0 / _db_to_lin(params.trx_snr_db)
        penalties = params.filtering_penalty_db + params.aging_margin_db
        p_w = params.launch_power_w

        for s in topo.nodes:
            for d in topo.nodes:
                if s == d:
                    continue
                pair_routes = k_shortest_paths(topo, s, d, k)
                routes[(s, d)] = pair_routes
                g = np.empty((len(pair_routes), n_ch))
                for r_idx, route in enumerate(pair_routes):
                    spans = np.asarray(route.span_lengths_km)
                    nsr = np.empty(n_ch)
                    for name, sl in band_rows.items():
                        att = params.attenuation_db_per_km[name]
                        nf = _db_to_lin(params.noise_figure_db[name])
                        gain_sum = float(np.sum(10.0 ** (att * spans / 10.0) - 1.0))
                        ase = (
                            nf
                            * params.planck_js
                            * plan.center_freq_hz[sl]
                            * params.symbol_rate_baud
                            * gain_sum
                            / p_w
                        )
                        if nli_fn is nli_sigma:
                            nli = len(spans) * params.nli_coeff_per_w2[name] * p_w * p_w
                            nsr[sl] = ase + nli + trx_nsr
                        else:
                            nli_vec = np.array(
                                [nli_fn(route, ch, params, plan) for ch in range(sl.start, sl.stop)]
                            )
                            nsr[sl] = ase + nli_vec + trx_nsr
                    g[r_idx] = 10.0 * np.log10(1.0 / nsr) - penalties
                fmt = table.best_index(g)
                rates = np.where(fmt >= 0, table.bitrates[np.clip(fmt, 0, None)], 0.0)
                gsnr_map[(s, d)] = g
                fmt_map[(s, d)] = fmt
                rate_map[(s, d)] = rates
        return cls(plan, table, k, routes, gsnr_map, fmt_map, rate_map)

    def routes(self, s: int, d: int) -> list[Route]:
        try:
            return self._routes[(s, d)]
        except KeyError:
            raise QotError(f"no routes stored for pair ({s},{d})") from None

    def channel_bitrates(self, route: Route) -> np.ndarray:
        return self._bitrate[(route.source, route.dest)][route.k_index]

    def channel_gsnr(self, route: Route) -> np.ndarray:
        return self._gsnr[(route.source, route.dest)][route.k_index]

    def channel_format_indices(self, route: Route) -> np.ndarray:
        return self._format[(route.source, route.dest)][route.k_index]

    def lookup(self, s: int, d: int, route_idx: int, channel: int):
        """(gsnr_db, format name or None, bitrate_gbps) for one entry."""
        g = self._gsnr[(s, d)][route_idx][channel]
        fmt = int(self._format[(s, d)][route_idx][channel])
        rate = float(self._bitrate[(s, d)][route_idx][channel])
        name = self.table.formats[fmt].name if fmt >= 0 else None
        return g, name, rate

    def n_entries(self) -> int:
        return sum(arr.size for arr in self._gsnr.values())

    def pairs(self) -> list[tuple[int, int]]:
        return sorted(self._routes)

    def to_csv(self, path, header_comment: str | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh)
            writer.writerow(["src", "dst", "route_idx", "channel", "gsnr_db", "format", "bitrate_gbps"])
            for (s, d) in self.pairs():
                g = self._gsnr[(s, d)]
                fmt = self._format[(s, d)]
                rate = self._bitrate[(s, d)]
                for r_idx in range(g.shape[0]):
                    for ch in range(g.shape[1]):
                        f_idx = int(fmt[r_idx, ch])
                        name = self.table.formats[f_idx].name if f_idx >= 0 else ""
                        writer.writerow(
                            [s, d, r_idx, ch, f"{g[r_idx, ch]:.6f}", name, f"{rate[r_idx, ch]:g}"]
                        )

    @classmethod
    def from_csv(cls, path, plan: BandPlan, table: ModulationTable | None = None) -> "QoTDatabase":
        """Rebuild the lookup arrays from an exported CSV.

        Route geometry is not part of the CSV; the result answers bit rate
        and GSNR queries keyed by (src, dst, route index) only.
        """
        if table is None:
            table = ModulationTable.from_ber_target()
        name_to_idx = {f.name: i for i, f in enumerate(table.formats)}
        rows: dict[tuple[int, int], dict[int, dict[int, tuple[float, int, float]]]] = {}
        with open(path, "r", encoding="utf-8") as fh:
            data = [ln for ln in fh if not ln.startswith("#")]
        reader = csv.DictReader(data)
        k_max = 0
        for row in reader:
            s, d = int(row["src"]), int(row["dst"])
            r_idx, ch = int(row["route_idx"]), int(row["channel"])
            fmt = name_to_idx.get(row["format"], -1)
            rows.setdefault((s, d), {}).setdefault(r_idx, {})[ch] = (
                float(row["gsnr_db"]),
                fmt,
                float(row["bitrate_gbps"]),
            )
            k_max = max(k_max, r_idx + 1)
        gsnr_map, fmt_map, rate_map, routes = {}, {}, {}, {}
        n_ch = plan.total_channels
        for pair, by_route in rows.items():
            n_routes = max(by_route) + 1
            g = np.full((n_routes, n_ch), -np.inf)
            f = np.full((n_routes, n_ch), -1, dtype=int)
            r = np.zeros((n_routes, n_ch))
            for r_idx, by_ch in by_route.items():
                for ch, (g_v, f_v, r_v) in by_ch.items():
                    g[r_idx, ch], f[r_idx, ch], r[r_idx, ch] = g_v, f_v, r_v
            gsnr_map[pair], fmt_map[pair], rate_map[pair] = g, f, r
            routes[pair] = []
        return cls(plan, table, k_max, routes, gsnr_map, fmt_map, rate_map)
