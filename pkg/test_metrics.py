import math

import numpy as np
import pytest

from config.run_config import MetricsConfig, RunConfig
from metrics.performance import (
    DEFAULT_MOS_TABLE,
    MetricsReport,
    MosTable,
    capacity_bits,
    format_retainability_table,
    format_son_table,
    load_mos_table,
    mean_report,
    mos,
    qpsk_packet_error_rate,
    qpsk_symbol_error,
    retainability,
    son_report,
    spectral_efficiency,
    throughput_percentiles,
    volte_report,
    waterfill,
    zero_forcing_gains,
)


# retainability and voice quality

def test_retainability_counts_samples_at_or_below_threshold():
    assert retainability(np.array([[1.0, -1.0], [0.5, 2.0]])) == pytest.approx(0.75)
    assert retainability([0.0, 1.0]) == pytest.approx(0.5)
    assert retainability([np.array([3.0]), np.array([4.0, 5.0])]) == 1.0
    assert retainability([1.0, 2.0], gamma_min_db=1.5) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        retainability([])


def test_qpsk_symbol_error_at_unit_sinr():
    assert float(qpsk_symbol_error(1.0)) == pytest.approx(0.2922, abs=1e-4)
    assert float(qpsk_symbol_error(1e4)) == pytest.approx(0.0, abs=1e-12)


def test_packet_error_rate_over_several_symbols():
    p_s = float(qpsk_symbol_error(2.0))
    assert qpsk_packet_error_rate(2.0, symbols_per_packet=3) == pytest.approx(1 - (1 - p_s) ** 3)
    assert qpsk_packet_error_rate(1.0, coding_gain_db=3.0) < qpsk_packet_error_rate(1.0)
    with pytest.raises(ValueError):
        qpsk_packet_error_rate(0.0)


def test_mos_table_anchors_and_clipping():
    assert mos(0.0) == pytest.approx(4.2)
    assert mos(0.05 / 0.7) == pytest.approx(3.6)
    assert mos(1.0) == pytest.approx(1.0)
    assert DEFAULT_MOS_TABLE.score(0.15) == pytest.approx(2.7)
    with pytest.raises(ValueError):
        mos(1.5)


def test_mos_is_non_increasing_in_packet_error():
    scores = [mos(p) for p in np.linspace(0.0, 1.0, 101)]
    assert all(b <= a + 1e-12 for a, b in zip(scores, scores[1:]))


def test_mos_table_validation_and_loading(tmp_path):
    with pytest.raises(ValueError):
        MosTable((0.0, 0.1), (3.0, 3.5))
    with pytest.raises(ValueError):
        MosTable((0.1, 0.0), (3.0, 2.0))
    path = tmp_path / "mos.csv"
    path.write_text("loss,mos\n0.2,2.0\n0.0,4.0\n", encoding="utf-8")
    table = load_mos_table(path)
    assert table.losses == (0.0, 0.2)
    assert table.score(0.1) == pytest.approx(3.0)


def test_volte_report_combines_retainability_and_mos():
    blocks = [np.array([[10.0, -1.0]]), np.array([[12.0, 15.0]])]
    report = volte_report(blocks, MetricsConfig())
    assert report.retainability == pytest.approx(0.75)
    assert report.samples == 4
    assert 1.0 <= report.mos <= 4.2


# MIMO capacity

def test_zero_forcing_gains():
    np.testing.assert_allclose(zero_forcing_gains(np.eye(2)), [1.0, 1.0])
    np.testing.assert_allclose(zero_forcing_gains(np.diag([2.0, 3.0])), [4.0, 9.0])
    wide = np.array([[1.0, 0.0, 5.0, 5.0], [0.0, 2.0, 5.0, 5.0]])
    np.testing.assert_allclose(zero_forcing_gains(wide), [1.0, 4.0])
    assert zero_forcing_gains(np.zeros((2, 4))).size == 0
    with pytest.raises(ValueError):
        zero_forcing_gains(np.ones(3))


def test_waterfill_equal_gains_split_equally():
    np.testing.assert_allclose(waterfill([2.0, 2.0, 2.0], 3.0, 1.0), [1.0, 1.0, 1.0])


def test_waterfill_satisfies_kkt():
    gains = np.array([5.0, 1.0, 0.1, 2.0])
    powers = waterfill(gains, 1.0, 1.0)
    assert powers.sum() == pytest.approx(1.0)
    floors = 1.0 / gains
    active = powers > 0
    levels = powers[active] + floors[active]
    np.testing.assert_allclose(levels, levels[0])
    assert np.all(floors[~active] >= levels[0] - 1e-12)
    assert powers[2] == 0.0


def test_waterfill_beats_every_two_channel_split():
    gains = np.array([3.0, 0.7])
    best = capacity_bits(gains, waterfill(gains, 2.0, 0.5), 0.5)
    for p in np.linspace(0.0, 2.0, 401):
        assert capacity_bits(gains, [p, 2.0 - p], 0.5) <= best + 1e-9


def random_channel(rng, n_rx=2, n_tx=4):
    return (rng.normal(size=(n_rx, n_tx)) + 1j * rng.normal(size=(n_rx, n_tx))) / math.sqrt(2.0)


def test_waterfill_satisfies_kkt_on_random_channels():
    rng = np.random.default_rng(12)
    for _ in range(500):
        gains = rng.exponential(size=int(rng.integers(1, 7)))
        total, noise = float(rng.uniform(0.1, 10.0)), float(rng.uniform(0.05, 2.0))
        powers = waterfill(gains, total, noise)
        assert powers.sum() == pytest.approx(total, abs=1e-9)
        floors = noise / gains
        active = powers > 0
        level = powers[active][0] + floors[active][0]
        np.testing.assert_allclose(powers[active] + floors[active], level, atol=1e-9)
        assert np.all(floors[~active] >= level - 1e-9)


def test_waterfill_matches_a_grid_search_on_two_by_four_channels():
    rng = np.random.default_rng(13)
    for _ in range(20):
        gains = zero_forcing_gains(random_channel(rng))
        assert gains.size == 2
        best = capacity_bits(gains, waterfill(gains, 1.0, 0.5), 0.5)
        grid = max(capacity_bits(gains, [p, 1.0 - p], 0.5) for p in np.linspace(0.0, 1.0, 2001))
        assert grid <= best + 1e-9
        assert best - grid <= 1e-3


def test_waterfill_never_loses_to_equal_power():
    rng = np.random.default_rng(14)
    for _ in range(1000):
        gains = zero_forcing_gains(random_channel(rng))
        equal = np.full(gains.size, 1.0 / gains.size)
        assert capacity_bits(gains, waterfill(gains, 1.0, 0.1), 0.1) >= capacity_bits(gains, equal, 0.1) - 1e-12


def test_spectral_efficiency_never_exceeds_the_modulation_limit():
    rng = np.random.default_rng(15)
    for order in (4, 16, 64):
        for _ in range(200):
            snr = 10.0 ** rng.uniform(-2.0, 4.0)
            assert spectral_efficiency(random_channel(rng), snr, 1.0, order) <= math.log2(order) + 1e-12
        assert spectral_efficiency(np.eye(2), 1e6, 1.0, order) == pytest.approx(math.log2(order))


def test_waterfill_rejects_bad_inputs():
    with pytest.raises(ValueError):
        waterfill([1.0], 0.0, 1.0)
    with pytest.raises(ValueError):
        waterfill([1.0, -1.0], 1.0, 1.0)
    assert waterfill([], 1.0, 1.0).size == 0


def test_spectral_efficiency_is_capped_by_modulation():
    rng = np.random.default_rng(0)
    for _ in range(20):
        h = (rng.standard_normal((2, 4)) + 1j * rng.standard_normal((2, 4))) / math.sqrt(2.0)
        assert 0.0 <= spectral_efficiency(h, 1.0, 1.0) <= 6.0
        assert spectral_efficiency(h, 1.0, 1e-9) == pytest.approx(6.0)
    assert spectral_efficiency(np.zeros((2, 4)), 1.0, 1.0) == 0.0


def test_throughput_percentiles():
    peak, avg, edge = throughput_percentiles(np.arange(1, 101, dtype=float))
    assert (peak, avg, edge) == pytest.approx((95.05, 50.5, 5.95))
    with pytest.raises(ValueError):
        throughput_percentiles([])


def test_son_report_shapes_and_ordering():
    radio = RunConfig.for_environment("son").radio
    rng = np.random.default_rng(1)
    sinr = [rng.uniform(-5.0, 20.0, size=(4, 5))]
    channels = [(rng.standard_normal((4, 5, 2, 4)) + 1j * rng.standard_normal((4, 5, 2, 4))) / math.sqrt(2.0)]
    report = son_report(sinr, channels, radio, MetricsConfig())
    assert report.ue_throughput_edge_mbps <= report.ue_throughput_avg_mbps <= report.ue_throughput_peak_mbps
    assert report.avg_cell_throughput_mbps == pytest.approx(5 * report.ue_throughput_avg_mbps)
    assert 0.0 <= report.avg_spectral_efficiency <= 6.0
    assert report.samples == 20


# aggregation

def test_mean_report_averages_and_keeps_missing_fields_missing():
    merged = mean_report([MetricsReport(0.5, mos=3.0, samples=10), MetricsReport(1.0, samples=5)])
    assert merged.retainability == pytest.approx(0.75)
    assert merged.mos is None
    assert merged.samples == 15
    with pytest.raises(ValueError):
        mean_report([])
    with pytest.raises(ValueError):
        MetricsReport(1.5)


def test_tables_list_every_algorithm():
    volte = format_retainability_table({"proposed": MetricsReport(0.9, mos=3.9), "fpa": MetricsReport(0.55)})
    assert "90.00%" in volte and "55.00%" in volte
    son = format_son_table({("fifo", 5): MetricsReport(1.0, avg_cell_throughput_mbps=12.5),
                            ("random", 5): MetricsReport(1.0)})
    assert "q=5 fifo" in son and "12.50" in son
    assert len(son.splitlines()) == 7
