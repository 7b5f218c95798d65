"""Physical-layer behaviour: fading statistics, mutual information, outage."""

import math

import numpy as np
import pytest

from raclab import AntennaConfig, ChannelSet, draw_channels, first_decodable_round, joint_outage, single_user_outage, subset_mutual_information
from raclab.channel import NEVER, batch_first_decodable_round

SCALAR2 = AntennaConfig(users=2, tx=1, rx=1)


def scalar_channels(powers, snr):
    """Channel set with real scalar gains of the given squared magnitudes."""
    gains = np.array([[[math.sqrt(p)]] for p in powers], dtype=complex)
    return ChannelSet(gains=gains, snr=snr)


# ---------------------------------------------------------------------------
# fading statistics
# ---------------------------------------------------------------------------

def test_draw_shapes_and_determinism():
    cfg = AntennaConfig(users=3, tx=2, rx=4)
    a = draw_channels(cfg, 10.0, np.random.default_rng(5))
    b = draw_channels(cfg, 10.0, np.random.default_rng(5))
    assert a.gains.shape == (3, 4, 2)
    assert np.array_equal(a.gains, b.gains)
    with pytest.raises(ValueError):
        draw_channels(cfg, 0.0, np.random.default_rng(1))


def test_unit_mean_power():
    rng = np.random.default_rng(7)
    cs = draw_channels(AntennaConfig(users=1), 1.0, rng)
    n = 10**6
    gains = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
    mean = float(np.mean(np.abs(gains) ** 2))
    # exponential power: sd of the mean is 1/sqrt(n) = 1e-3
    assert abs(mean - 1.0) < 0.01
    assert abs(cs.gains[0, 0, 0]) > 0  # smoke: a draw happened


def test_successive_epochs_uncorrelated():
    cfg = AntennaConfig(users=1)
    rng = np.random.default_rng(11)
    n = 10**5
    first = np.empty(n)
    second = np.empty(n)
    for i in range(n):
        first[i] = abs(draw_channels(cfg, 1.0, rng, epoch=2 * i).gains[0, 0, 0]) ** 2
        second[i] = abs(draw_channels(cfg, 1.0, rng, epoch=2 * i + 1).gains[0, 0, 0]) ** 2
    corr = np.corrcoef(first, second)[0, 1]
    assert abs(corr) < 3.0 / math.sqrt(n)


# ---------------------------------------------------------------------------
# mutual information
# ---------------------------------------------------------------------------

def test_subset_mi_zero_channels():
    cs = scalar_channels([0.0, 0.0], snr=10.0)
    assert subset_mutual_information(cs, [0, 1]) == pytest.approx(0.0)


def test_subset_mi_scalar_values():
    cs = scalar_channels([1.0, 1.0], snr=3.0)
    assert subset_mutual_information(cs, [0]) == pytest.approx(2.0)
    assert subset_mutual_information(cs, [0, 1]) == pytest.approx(math.log2(7))


def test_subset_mi_rejects_empty():
    cs = scalar_channels([1.0], snr=1.0)
    with pytest.raises(ValueError):
        subset_mutual_information(cs, [])


def test_subset_mi_monotone_in_snr_and_subset():
    rng = np.random.default_rng(3)
    cfg = AntennaConfig(users=3, tx=2, rx=2)
    for _ in range(50):
        cs = draw_channels(cfg, 5.0, rng)
        i_single = subset_mutual_information(cs, [0])
        i_pair = subset_mutual_information(cs, [0, 1])
        i_all = subset_mutual_information(cs, [0, 1, 2])
        assert 0.0 <= i_single <= i_pair <= i_all + 1e-12
        assert subset_mutual_information(cs, [0], snr=50.0) >= i_single


def test_per_antenna_power_normalisation():
    # two transmit antennas split the power: unit-gain columns give
    # log2(1 + 2 * (snr/2)) = log2(1 + snr)
    gains = np.array([[[1.0, 1.0]]], dtype=complex)
    cs = ChannelSet(gains=gains, snr=3.0)
    assert subset_mutual_information(cs, [0]) == pytest.approx(2.0)


# ---------------------------------------------------------------------------
# outage predicates
# ---------------------------------------------------------------------------

def test_joint_outage_boundary_is_decodable():
    cs = scalar_channels([1.0], snr=3.0)
    assert joint_outage(cs, [0], 3.0, rate=2.0, rounds=1) is False


def test_joint_outage_two_user_examples():
    cs = scalar_channels([1.0, 1.0], snr=3.0)
    # sum condition: 2 * 1.6 = 3.2 > log2(7) = 2.807
    assert joint_outage(cs, [0, 1], 3.0, rate=1.6, rounds=1) is True
    # 2.807 >= 2.6 and 2.0 >= 1.3
    assert joint_outage(cs, [0, 1], 3.0, rate=1.3, rounds=1) is False


def test_joint_outage_validation():
    cs = scalar_channels([1.0], snr=3.0)
    with pytest.raises(ValueError):
        joint_outage(cs, [], 3.0, 1.0, 1)
    with pytest.raises(ValueError):
        joint_outage(cs, [0], 3.0, 1.0, 0)


def test_joint_outage_nested_in_rounds():
    rng = np.random.default_rng(9)
    cfg = AntennaConfig(users=3, tx=1, rx=2)
    for _ in range(200):
        cs = draw_channels(cfg, 2.0, rng)
        rate = float(rng.uniform(0.2, 3.0))
        decodable_seen = False
        for rounds in range(1, 7):
            out = joint_outage(cs, [0, 1, 2], 2.0, rate, rounds)
            if not out:
                decodable_seen = True
            if decodable_seen:
                assert out is False  # once decodable, stays decodable


def test_joint_outage_monotone_in_snr():
    rng = np.random.default_rng(13)
    for _ in range(200):
        cs = draw_channels(SCALAR2, 1.0, rng)
        rate = float(rng.uniform(0.2, 3.0))
        flipped = False
        for snr in (0.5, 1.0, 2.0, 8.0, 64.0, 1e4):
            out = joint_outage(cs, [0, 1], snr, rate, 1)
            if not out:
                flipped = True
            if flipped:
                assert out is False


def test_subset_consistency_removing_users():
    rng = np.random.default_rng(17)
    for _ in range(200):
        cs = draw_channels(AntennaConfig(users=3), 4.0, rng)
        rate = float(rng.uniform(0.1, 2.0))
        if not joint_outage(cs, [0, 1, 2], 4.0, rate, 1):
            assert not joint_outage(cs, [0, 1], 4.0, rate, 1)
            assert not joint_outage(cs, [2], 4.0, rate, 1)


def test_single_user_outage_examples():
    h = np.array([[1.0]], dtype=complex)
    assert single_user_outage(h, 3.0, 2.0) is False
    assert single_user_outage(h, 3.0, 2.1) is True
    # matched combining over 3 slots triples the effective SNR
    assert single_user_outage(h, 1.0, 1.9, combining_slots=3, matched_combining=True) is False
    assert single_user_outage(h, 1.0, 1.9, combining_slots=3) is True
    with pytest.raises(ValueError):
        single_user_outage(h, 1.0, 1.0, combining_slots=0)


def test_single_user_outage_matches_exponential_law():
    rng = np.random.default_rng(23)
    n = 10**6
    for rate, snr in [(1.0, 10.0), (2.0, 3.0)]:
        gains = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
        freq = float(np.mean(np.log2(1 + snr * np.abs(gains) ** 2) < rate))
        exact = 1 - math.exp(-(2**rate - 1) / snr)
        assert abs(freq - exact) < 3 * math.sqrt(exact * (1 - exact) / n)


# ---------------------------------------------------------------------------
# first decodable round (scalar and batch agree with the predicate)
# ---------------------------------------------------------------------------

def test_first_decodable_round_agrees_with_outage_predicate():
    rng = np.random.default_rng(29)
    for cfg in (SCALAR2, AntennaConfig(users=3, tx=1, rx=2)):
        users = tuple(range(cfg.users))
        for _ in range(100):
            cs = draw_channels(cfg, 3.0, rng)
            rate = float(rng.uniform(0.2, 2.5))
            needed = first_decodable_round(cs, users, 3.0, rate)
            if needed < NEVER:
                assert joint_outage(cs, users, 3.0, rate, needed) is False
                if needed > 1:
                    assert joint_outage(cs, users, 3.0, rate, needed - 1) is True


def test_batch_first_decodable_round_matches_scalar_path():
    rng = np.random.default_rng(31)
    for cfg in (SCALAR2, AntennaConfig(users=2, tx=1, rx=2), AntennaConfig(users=3, tx=2, rx=2)):
        n = 200
        shape = (n, cfg.users, cfg.rx, cfg.tx)
        gains = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)
        rate = 1.1
        batch = batch_first_decodable_round(gains, 3.0, rate)
        for i in range(n):
            cs = ChannelSet(gains=gains[i], snr=3.0)
            assert batch[i] == first_decodable_round(cs, range(cfg.users), 3.0, rate)


def test_first_decodable_round_boundary_and_zero_rate():
    cs = scalar_channels([1.0], snr=3.0)
    assert first_decodable_round(cs, [0], 3.0, 2.0) == 1   # exact boundary decodes
    assert first_decodable_round(cs, [0], 3.0, 0.0) == 1
    dead = scalar_channels([0.0], snr=3.0)
    assert first_decodable_round(dead, [0], 3.0, 1.0) == NEVER
