"""Baseline provisioning policies over k-shortest-path candidates.

All policies consume the environment's per-request decision context and
emit an action index; they only ever pick unmasked actions and fall back
to reject when nothing is feasible.
"""

from __future__ import annotations

import math

import numpy as np

from .env import DecisionContext
from .qot import QoTDatabase

DEFAULT_BAND_ORDER = ("C", "L", "S")


def _band_scan_order(ctx: DecisionContext, preferred) -> list[int]:
    """Band indices in preference order, unknown plan bands appended last."""
    names = ctx.band_names
    order = [names.index(n) for n in preferred if n in names]
    order += [i for i in range(len(names)) if i not in order]
    return order


def _scan(ctx: DecisionContext, band_order) -> list[tuple[int, int, int]]:
    """(route, band, action) triples in KSP-then-band preference order."""
    order = _band_scan_order(ctx, band_order)
    return [
        (r, b, ctx.action_of(r, b))
        for r in range(ctx.k_routes)
        for b in order
    ]


class FirstBandFirstFit:
    """First feasible (route, band) in KSP order, bands in a fixed order."""

    def __init__(self, band_order=DEFAULT_BAND_ORDER) -> None:
        self.band_order = tuple(band_order)

    def __call__(self, ctx: DecisionContext, rng=None) -> int:
        for _, _, action in _scan(ctx, self.band_order):
            if ctx.mask[action]:
                return action
        return ctx.reject_action


class DistanceAdaptiveFirstFit:
    """Feasible candidate minimizing channels under length-based modulation.

    The per-band reach of each format is mined from the QoT database (the
    longest stored route on which the format survives on some channel of
    the band), so the length rule stays consistent with the GSNR model it
    approximates.
    """

    def __init__(self, qdb: QoTDatabase, band_order=DEFAULT_BAND_ORDER) -> None:
        self.band_order = tuple(band_order)
        self.bitrates = qdb.table.bitrates
        n_fmt = len(qdb.table)
        self.reach_km = {name: np.zeros(n_fmt) for name in qdb.plan.band_names}
        for s, d in qdb.pairs():
            for route in qdb.routes(s, d):
                fmt = qdb.channel_format_indices(route)
                for name in qdb.plan.band_names:
                    best = int(fmt[qdb.plan.band_slice(name)].max())
                    if best >= 0:
                        reach = self.reach_km[name]
                        reach[: best + 1] = np.maximum(reach[: best + 1], route.length_km)

    def _channels_needed(self, ctx: DecisionContext, route_idx: int, band_idx: int) -> float:
        band = ctx.band_names[band_idx]
        length = ctx.routes[route_idx].length_km
        usable = np.nonzero(self.reach_km[band] >= length)[0]
        if len(usable) == 0:
            return math.inf
        return math.ceil(ctx.request.bitrate_gbps / self.bitrates[usable[-1]])

    def __call__(self, ctx: DecisionContext, rng=None) -> int:
        # Any unmasked band holds a QoT-valid channel, so its reach-based
        # estimate is always finite and reject only wins when nothing is.
        best_action, best_needed = ctx.reject_action, math.inf
        for r, b, action in _scan(ctx, self.band_order):
            if not ctx.mask[action]:
                continue
            needed = self._channels_needed(ctx, r, b)
            if needed < best_needed:
                best_action, best_needed = action, needed
        return best_action


class BitRateAdaptiveFirstFit:
    """Feasible candidate minimizing the actual first-fit channel count.

    Ties prefer the larger summed candidate bit rate, then KSP/band order.
    """

    def __init__(self, band_order=DEFAULT_BAND_ORDER) -> None:
        self.band_order = tuple(band_order)

    def __call__(self, ctx: DecisionContext, rng=None) -> int:
        best = None
        best_key = (math.inf, math.inf)
        for r, b, action in _scan(ctx, self.band_order):
            if not ctx.mask[action]:
                continue
            cand = ctx.candidates[(r, b)]
            key = (len(cand.channels), -cand.total_rate)
            if key < best_key:
                best, best_key = action, key
        return best if best is not None else ctx.reject_action


class RandomPolicy:
    """Uniform draw over all valid actions, reject included."""

    def __call__(self, ctx: DecisionContext, rng) -> int:
        valid = np.nonzero(ctx.mask)[0]
        return int(rng.choice(valid))
