import pytest
from hypothesis import given, strategies as st

from obsim.policy import (DEFLECT, DROP, RETRANSMIT, ContentionContext, OffsetParams,
                          ahdr_decide, best_alternative, compute_offset, defl_permitted,
                          hop_count_for_offset, lhdr_decide, pure_obs_decide)
from obsim.stats import NetworkStateTable, StatsPayload, ThresholdModel, Weights
from obsim.topology import Route

W = Weights(0.5, 0.5)
A1 = Route((0, 1, 9))
A2 = Route((0, 2, 3, 9))
PRIMARY = Route((0, 5, 9))


def state(dp_by_link):
    """State table with BLR = utilization = DP on every listed link (so DP is exact)."""
    t = NetworkStateTable(0)
    for link, dp in dp_by_link.items():
        t.apply_payload(StatsPayload(link, dp, dp, 0.0))
    return t


def fixed(th):
    return ThresholdModel(omega=0.0, phi=th, fitted=True)


def ctx(alts, table, th):
    return ContentionContext(0, 9, PRIMARY, alts, table, fixed(th), W)


def two_routes(th):
    # A1: 0.9 * 0.9 = 0.81, A2: 0.9 * 0.8 * 1.0 = 0.72
    t = state({(0, 1): 0.1, (1, 9): 0.1, (0, 2): 0.1, (2, 3): 0.2})
    return ctx([A2, A1], t, th)


def test_best_alternative_picks_highest_sp():
    route, sp = best_alternative(two_routes(0.5))
    assert route == A1 and sp == pytest.approx(0.81)


def test_best_alternative_tie_prefers_shorter():
    route, sp = best_alternative(ctx([A2, A1], NetworkStateTable(0), 0.5))
    assert route == A1 and sp == 1.0


def test_ahdr_deflects_at_threshold():
    d = ahdr_decide(two_routes(0.7), 0, 1)
    assert d.kind is DEFLECT and d.route == A1 and d.sp == pytest.approx(0.81)


def test_ahdr_retransmits_below_threshold():
    assert ahdr_decide(two_routes(0.9), 0, 1).kind is RETRANSMIT


def test_ahdr_drops_at_cap():
    assert ahdr_decide(two_routes(0.9), 1, 1).kind is DROP


def test_ahdr_without_alternatives():
    assert ahdr_decide(ctx([], NetworkStateTable(0), 0.0), 0, 1).kind is RETRANSMIT


def test_lhdr_shortest_regardless_of_state():
    d = lhdr_decide(two_routes(0.99), 0, 1, 0, 1)
    assert d.kind is DEFLECT and d.route == A1


def test_lhdr_cap_then_retransmit_then_drop():
    c = two_routes(0.0)
    assert lhdr_decide(c, 1, 1, 0, 1).kind is RETRANSMIT
    assert lhdr_decide(c, 1, 1, 1, 1).kind is DROP


def test_pure_always_drops():
    assert pure_obs_decide().kind is DROP


def test_defl_permitted():
    assert defl_permitted(0.7, 0.7)
    assert not defl_permitted(0.69, 0.7)
    assert not defl_permitted(None, 0.0)


def test_offset_examples():
    p = OffsetParams(10e-6, 1e-6)
    assert compute_offset(p, False, 6, 3) == pytest.approx(13e-6, abs=1e-15)
    assert compute_offset(p, True, 6, 3) == pytest.approx(16e-6, abs=1e-15)
    assert compute_offset(p, True, 3, 3) == compute_offset(p, False, 3, 3)


def test_offset_validation():
    with pytest.raises(ValueError):
        compute_offset(OffsetParams(), True, 0, 3)
    with pytest.raises(ValueError):
        OffsetParams(0.0, 1e-6)


def test_context_rejects_wrong_endpoints():
    with pytest.raises(ValueError):
        ctx([Route((1, 9))], NetworkStateTable(0), 0.5)


# -- properties ------------------------------------------------------------

unit = st.floats(0.0, 1.0, allow_nan=False)
LINKS = [(0, 1), (1, 9), (0, 2), (2, 3), (3, 9), (2, 9)]
ALTS = [A1, A2, Route((0, 2, 9))]


@st.composite
def contexts(draw):
    dps = {link: draw(unit) for link in LINKS}
    alts = draw(st.lists(st.sampled_from(ALTS), unique=True))
    return ctx(alts, state(dps), draw(unit))


@given(contexts(), st.integers(0, 3), st.integers(0, 3))
def test_ahdr_never_deflects_below_threshold(c, retx, n_ret):
    d = ahdr_decide(c, retx, n_ret)
    th = c.threshold_model.threshold(c.state.mean_blr())
    best = best_alternative(c)
    if d.kind is DEFLECT:
        assert d.sp >= th and d.route in c.alternatives
    elif best is not None:
        assert best[1] < th
    if d.kind is RETRANSMIT:
        assert retx < n_ret
    if d.kind is DROP:
        assert retx >= n_ret


@given(contexts(), st.integers(0, 3))
def test_ahdr_is_pure(c, retx):
    assert ahdr_decide(c, retx, 1) == ahdr_decide(c, retx, 1)


@given(contexts())
def test_best_alternative_is_argmax_and_order_invariant(c):
    best = best_alternative(c)
    if not c.alternatives:
        assert best is None
        return
    rev = ContentionContext(c.node, c.destination, c.primary_remainder, list(reversed(c.alternatives)),
                            c.state, c.threshold_model, c.weights)
    assert best_alternative(rev) == best
    for alt in c.alternatives:
        other = best_alternative(ContentionContext(c.node, c.destination, c.primary_remainder, [alt],
                                                   c.state, c.threshold_model, c.weights))
        assert other[1] <= best[1]


@given(contexts(), st.integers(0, 2), st.integers(0, 2), st.integers(0, 2))
def test_lhdr_respects_caps(c, defl, max_defl, retx):
    d = lhdr_decide(c, defl, max_defl, retx, 1)
    if d.kind is DEFLECT:
        assert defl < max_defl
    if d.kind is RETRANSMIT:
        assert retx < 1


@given(st.floats(1e-7, 1e-4), st.floats(1e-8, 1e-5), st.integers(1, 20), st.integers(1, 20),
       st.booleans())
def test_offset_formula_and_monotone(t_conf, t_p, a, b, permitted):
    shortest, longest = min(a, b), max(a, b)
    p = OffsetParams(t_conf, t_p)
    n = longest if permitted else shortest
    assert hop_count_for_offset(permitted, longest, shortest) == n
    assert abs(compute_offset(p, permitted, longest, shortest) - (t_conf + n * t_p)) <= 1e-9
    assert compute_offset(p, True, longest, shortest) >= compute_offset(p, False, longest, shortest)
    assert compute_offset(p, permitted, longest + 1, shortest + 1) > compute_offset(p, permitted, longest, shortest)
