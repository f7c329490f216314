import pytest

from mbeonsim.env import EnvConfig, RmbsaEnv
from mbeonsim.qot import PhysicalParams, QoTDatabase
from mbeonsim.spectrum import Band, BandPlan
from mbeonsim.topology import NetworkTopology

RING_CHORD_LINKS = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)]


def make_ring_chord(ring_km=300.0, chord_km=450.0) -> NetworkTopology:
    """6-node ring with a (0,3) chord: 7 links, diverse route lengths."""
    lengths = [ring_km] * 6 + [chord_km]
    return NetworkTopology(6, RING_CHORD_LINKS, lengths)


def make_toy_plan(channels_per_band=20) -> BandPlan:
    return BandPlan([Band("L", channels_per_band), Band("C", channels_per_band)])


def make_pair_scenario(link_km=300.0, channels_per_band=8, k=2, params=None):
    """Two nodes, one link: the smallest scenario with full QoT wiring."""
    topo = NetworkTopology(2, [(0, 1)], [link_km])
    plan = make_toy_plan(channels_per_band)
    qdb = QoTDatabase.build(topo, plan, params or PhysicalParams(), k=k)
    return topo, plan, qdb


def make_band_skewed_scenario():
    """One 300 km link where the L band far outperforms the C band.

    Calibrated so C channels top out at PM-8QAM (300 Gb/s) while L
    channels reach PM-64QAM (600 Gb/s); lets tests separate policies that
    read the QoT database from those that only follow band order.
    """
    params = PhysicalParams(
        trx_snr_db=30.0,
        nli_coeff_per_w2={"L": 300.0, "C": 9300.0, "S": 9600.0},
    )
    return make_pair_scenario(link_km=300.0, params=params)


def make_env(topo, plan, qdb, load=20.0, n_requests=200, bitrates=(100.0, 200.0, 300.0)):
    config = EnvConfig(
        load_erlang=load,
        requests_per_episode=n_requests,
        bitrates_gbps=tuple(bitrates),
    )
    return RmbsaEnv(topo, plan, qdb, config)


@pytest.fixture(scope="session")
def ring_topo():
    return make_ring_chord()


@pytest.fixture(scope="session")
def toy_plan():
    return make_toy_plan()


@pytest.fixture(scope="session")
def toy_qdb(ring_topo, toy_plan):
    return QoTDatabase.build(ring_topo, toy_plan, PhysicalParams(), k=3)
