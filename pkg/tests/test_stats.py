import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from obsim.stats import (LinkStats, NetworkStateTable, StatsPayload, ThresholdModel, Weights,
                         dropping_probability, fit_threshold, least_squares_line,
                         success_probability, threshold)

unit = st.floats(0.0, 1.0, allow_nan=False)


class TestLinkStats:
    def test_single_success(self):
        assert LinkStats().record_attempt(True).blr == 0.0

    def test_alternating(self):
        s = LinkStats(window_attempts=4)
        for ok in (False, True, False, True):
            s.record_attempt(ok)
        assert s.blr == 0.5

    def test_window_evicts_failure(self):
        s = LinkStats(window_attempts=2)
        for ok in (False, True, True):
            s.record_attempt(ok)
        assert s.blr == 0.0

    def test_no_occupancy(self):
        assert LinkStats(window_duration=1.0).utilization(now=5.0) == 0.0

    def test_saturated(self):
        s = LinkStats(window_duration=2.0, n_data_channels=4)
        s.record_occupancy(4 * 2.0, now=2.0)
        assert s.utilization(2.0) == 1.0

    def test_one_of_four_channels_half_window(self):
        w = 0.32
        s = LinkStats(window_duration=w, n_data_channels=4)
        s.record_occupancy(0.5 * w, now=1.0)
        assert s.utilization(1.0) == pytest.approx(0.125, abs=1e-12)

    def test_occupancy_ages_out(self):
        s = LinkStats(window_duration=1.0, n_data_channels=1)
        s.record_occupancy(0.5, now=0.0)
        s.record_occupancy(0.25, now=0.9)
        assert s.utilization(0.95) == pytest.approx(0.75)
        assert s.utilization(1.5) == pytest.approx(0.25)
        assert s.utilization(3.0) == 0.0

    def test_utilization_clamped(self):
        s = LinkStats(window_duration=1.0, n_data_channels=1)
        s.record_occupancy(5.0, now=0.0)
        assert s.utilization(0.0) == 1.0

    def test_negative_busy_rejected(self):
        with pytest.raises(ValueError):
            LinkStats().record_occupancy(-1.0, 0.0)

    @settings(max_examples=200)
    @given(st.lists(st.booleans(), max_size=300), st.integers(1, 50))
    def test_blr_matches_recount(self, outcomes, window):
        s = LinkStats(window_attempts=window)
        for ok in outcomes:
            s.record_attempt(ok)
        last = outcomes[-window:]
        expected = (len(last) - sum(last)) / len(last) if last else 0.0
        assert s.blr == pytest.approx(expected, abs=1e-12)
        assert 0.0 <= s.blr <= 1.0


class TestStateTable:
    def test_insert(self):
        t = NetworkStateTable(0)
        t.apply_payload(StatsPayload((1, 2), 0.2, 0.4, 5.0))
        assert t.get((1, 2)) == (0.2, 0.4, 5.0)

    def test_stale_rejected(self):
        t = NetworkStateTable(0)
        t.apply_payload(StatsPayload((1, 2), 0.1, 0.1, 10.0))
        assert not t.apply_payload(StatsPayload((1, 2), 0.9, 0.9, 5.0))
        assert t.get((1, 2)) == (0.1, 0.1, 10.0)

    def test_fresher_wins(self):
        t = NetworkStateTable(0)
        t.apply_payload(StatsPayload((1, 2), 0.1, 0.1, 5.0))
        t.apply_payload(StatsPayload((1, 2), 0.3, 0.1, 10.0))
        assert t.get((1, 2))[0] == 0.3

    def test_mean_blr(self):
        t = NetworkStateTable(0)
        assert t.mean_blr() == 0.0
        t.apply_payload(StatsPayload((1, 2), 0.2, 0.0, 1.0))
        t.apply_payload(StatsPayload((2, 3), 0.4, 0.0, 1.0))
        t.apply_payload(StatsPayload((1, 2), 0.0, 0.0, 2.0))
        assert t.mean_blr() == pytest.approx(0.2)

    def test_payload_range(self):
        with pytest.raises(ValueError):
            StatsPayload((0, 1), 1.5, 0.0, 0.0)

    @given(st.lists(st.tuples(st.sampled_from([(0, 1), (1, 2), (2, 0)]), unit, unit), max_size=30),
           st.randoms(use_true_random=False))
    def test_outcome_depends_only_on_latest(self, items, rnd):
        payloads = [StatsPayload(link, b, u, float(i)) for i, (link, b, u) in enumerate(items)]
        shuffled = payloads[:]
        rnd.shuffle(shuffled)
        a, b = NetworkStateTable(0), NetworkStateTable(0)
        for p in payloads:
            a.apply_payload(p)
        for p in shuffled:
            b.apply_payload(p)
            b.apply_payload(p)  # idempotent for equal timestamps
        assert a.entries == b.entries
        latest = {}
        for p in payloads:
            latest[p.link] = (p.blr, p.utilization, p.measured_at)
        assert a.entries == latest


class TestWeights:
    def test_sum_enforced(self):
        with pytest.raises(ValueError):
            Weights(0.5, 0.6)
        with pytest.raises(ValueError):
            Weights(1.5, -0.5)

    def test_from_blr_weight(self):
        w = Weights.from_blr_weight(0.7)
        assert w.w_u == pytest.approx(0.3)


class TestDroppingProbability:
    def test_zero(self):
        assert dropping_probability((0.0, 0.0), Weights(0.3, 0.7)) == 0.0

    def test_example(self):
        assert dropping_probability((0.2, 0.4), Weights(0.5, 0.5)) == pytest.approx(0.3, abs=1e-12)

    def test_one(self):
        assert dropping_probability((1.0, 1.0), Weights.from_blr_weight(0.8)) == pytest.approx(1.0)

    @given(unit, unit, unit, unit)
    def test_linearity(self, blr, u, w, alpha):
        weights = Weights.from_blr_weight(w)
        lhs = dropping_probability((alpha * blr, alpha * u), weights)
        assert lhs == pytest.approx(alpha * dropping_probability((blr, u), weights), abs=1e-12)


def table_with(dps, route):
    """State table where each link of ``route`` has utilization = its DP and BLR = its DP."""
    t = NetworkStateTable(route[0])
    for (a, b), dp in zip(zip(route, route[1:]), dps):
        t.apply_payload(StatsPayload((a, b), dp, dp, 0.0))
    return t


class TestSuccessProbability:
    w = Weights(0.5, 0.5)

    def test_identity(self):
        assert success_probability((0, 1, 2, 3), table_with([0, 0, 0], (0, 1, 2, 3)), self.w) == 1.0

    def test_two_hops(self):
        sp = success_probability((0, 1, 2), table_with([0.1, 0.1], (0, 1, 2)), self.w)
        assert sp == pytest.approx(0.81, abs=1e-12)

    def test_absorbing_zero(self):
        assert success_probability((0, 1, 2), table_with([0.3, 1.0], (0, 1, 2)), self.w) == 0.0

    def test_unknown_links_are_lossless(self):
        assert success_probability((0, 1, 2), NetworkStateTable(0), self.w) == 1.0

    @given(st.lists(unit, min_size=1, max_size=6), unit)
    def test_single_link_and_range(self, dps, extra):
        route = tuple(range(len(dps) + 1))
        t = table_with(dps, route)
        sp = success_probability(route, t, self.w)
        assert 0.0 <= sp <= 1.0
        assert success_probability(route[:2], t, self.w) == pytest.approx(1 - dps[0])
        # appending a link
        longer = route + (len(route),)
        t.apply_payload(StatsPayload((route[-1], len(route)), extra, extra, 0.0))
        sp2 = success_probability(longer, t, self.w)
        if extra == 0:
            assert sp2 == sp
        elif sp > 0 and extra > 1e-12:
            assert sp2 < sp


class TestThresholdModel:
    def test_collinear_pair(self):
        m = ThresholdModel(min_samples=2)
        m.add_sample(0.1, 0.5)
        m.add_sample(0.3, 0.7)
        fit_threshold(m)
        slope, intercept = np.polyfit([0.1, 0.3], [0.5, 0.7], 1)
        assert m.omega == pytest.approx(1.0, abs=1e-9) and m.omega == pytest.approx(slope, abs=1e-9)
        assert m.phi == pytest.approx(0.4, abs=1e-9) and m.phi == pytest.approx(intercept, abs=1e-9)

    def test_degenerate_variance(self):
        m = ThresholdModel(min_samples=2)
        m.add_sample(0.2, 0.4)
        m.add_sample(0.2, 0.6)
        m.fit()
        assert (m.omega, m.phi) == (0.0, pytest.approx(0.5))

    def test_insufficient_samples(self):
        m = ThresholdModel(min_samples=2)
        m.add_sample(0.1, 0.9)
        m.fit()
        assert not m.fitted
        assert threshold(m, 0.3) == m.default_threshold == 0.5

    def test_evaluation(self):
        m = ThresholdModel(omega=1.0, phi=0.4, fitted=True)
        assert threshold(m, 0.1) == pytest.approx(0.5)
        assert ThresholdModel(omega=0.0, phi=0.9, fitted=True).threshold(0.77) == 0.9
        assert ThresholdModel(omega=5.0, phi=0.9, fitted=True).threshold(0.5) == 1.0
        assert ThresholdModel(omega=-5.0, phi=0.1, fitted=True).threshold(0.5) == 0.0

    def test_ring_capacity(self):
        m = ThresholdModel(capacity=3, min_samples=1)
        for i in range(10):
            m.add_sample(i, i)
        assert list(m.samples) == [(7, 7), (8, 8), (9, 9)]

    @given(st.floats(-3, 3), st.floats(-1, 1),
           st.lists(st.integers(0, 1000), min_size=2, max_size=40, unique=True))
    def test_collinear_recovers_line(self, slope, intercept, grid):
        xs = [g / 1000 for g in grid]
        m = ThresholdModel(min_samples=2, capacity=100)
        for x in xs:
            m.add_sample(x, slope * x + intercept)
        m.fit()
        assert abs(m.omega - slope) <= 1e-9 * max(1, abs(slope)) + 1e-9
        assert abs(m.phi - intercept) <= 1e-9


def test_least_squares_zero_variance():
    with pytest.raises(ZeroDivisionError):
        least_squares_line([1.0, 1.0], [0.0, 1.0])
