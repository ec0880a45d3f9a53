import math
from dataclasses import replace

import numpy as np
import pytest

from slyap.analysis.example import example_signal, example_system
from slyap.analysis.flows import eps_flow
from slyap.analysis.lyapunov import (
    LyapunovBound,
    MethodCertificate,
    Side,
    Stability,
    SweepRow,
    chain_experiment,
    classify,
    lambda_lower,
    lambda_upper_lognorm,
    lambda_upper_quadratic,
    replay_witness,
    shift_modes,
    sweep_eps,
    sweep_trend,
)
from slyap.analysis.matkit import spectral_radius
from slyap.analysis.model import BlockMode, BlockSystem, PwcSignal
from slyap.analysis.search import Witness, evaluate, initial_candidates, refine, search_witness
from slyap.config import ChainConfig, CheckSampleConfig, HatConfig, KSetConfig, SearchConfig
from slyap.errors import AssumptionError, ConsistencyError, ValidationError

BAR_MODES = [np.array([[-1.0]]), np.array([[-3.0]])]


# ---------------------------------------------------------------------------
# Witness search
# ---------------------------------------------------------------------------

def test_evaluate_constant_signal():
    w = evaluate(BAR_MODES, PwcSignal.constant(1, 2.0))
    assert w.rho == pytest.approx(math.exp(-6.0))
    assert w.value == pytest.approx(-3.0)


def test_candidates_are_seeded(small_search):
    a = initial_candidates(3, small_search)
    b = initial_candidates(3, small_search)
    assert [s.digest for s in a] == [s.digest for s in b]
    assert len(a) == 3 + small_search.restarts
    assert all(len(s.pieces) <= small_search.max_pieces for s in a)


def test_candidates_respect_horizon():
    cfg = SearchConfig(restarts=20, horizon=0.5)
    assert all(s.total_duration <= 0.5 + 1e-12 for s in initial_candidates(2, cfg))


def test_refine_never_decreases(small_search):
    modes = [np.array([[0.0, 1.0], [-1.0, 0.0]]), np.array([[-0.5, 2.0], [0.0, -0.5]])]
    start = evaluate(modes, PwcSignal(((0, 0.3), (1, 0.7))))
    assert refine(modes, start, small_search).value >= start.value


def test_search_is_thread_independent(small_search):
    modes = [np.array([[-1.0, 3.0], [0.0, -1.0]]), np.array([[-1.0, 0.0], [3.0, -1.0]])]
    single = search_witness(modes, small_search)
    multi = search_witness(modes, replace(small_search, threads=4))
    assert single.signal.digest == multi.signal.digest
    assert single.value == multi.value


# ---------------------------------------------------------------------------
# Bounds
# ---------------------------------------------------------------------------

def test_reduced_example_bounds(small_search):
    lower = lambda_lower(BAR_MODES, small_search)
    upper = lambda_upper_lognorm(BAR_MODES)
    assert lower.value == pytest.approx(-1.0)
    assert upper.value == -1.0
    assert lower.side is Side.LOWER and upper.side is Side.UPPER
    assert classify(lower, upper) is Stability.ES


def test_lower_witness_replays(small_search):
    modes = [np.array([[-1.0, 3.0], [0.0, -1.0]]), np.array([[-1.0, 0.0], [3.0, -1.0]])]
    lower = lambda_lower(modes, small_search)
    assert isinstance(lower.certificate, Witness)
    assert replay_witness(modes, lower.certificate) == pytest.approx(lower.value, abs=1e-9)


def test_switching_destabilizes_stable_modes():
    # each mode is Hurwitz but the switched system is not
    modes = [np.array([[-0.1, 1.0], [-10.0, -0.1]]), np.array([[-0.1, 10.0], [-1.0, -0.1]])]
    lower = lambda_lower(modes, SearchConfig(max_pieces=2, restarts=64, iterations=40, seed=3))
    assert all(np.linalg.eigvals(M).real.max() < 0 for M in modes)
    assert lower.value > 0
    assert classify(lower, lambda_upper_lognorm(modes)) is Stability.EU


def test_adding_modes_keeps_lower_bound(small_search):
    modes = [np.array([[-1.0, 3.0], [0.0, -1.0]]), np.array([[-1.0, 0.0], [3.0, -1.0]])]
    first = lambda_lower(modes[:1], small_search)
    both = lambda_lower(modes, small_search, warm_start=(first.certificate.signal,))
    assert both.value >= first.value


def test_shift_moves_both_bounds_exactly(small_search):
    modes = [np.array([[-1.0, 3.0], [0.0, -1.0]]), np.array([[-1.0, 0.0], [3.0, -1.0]])]
    mu = 0.75
    lower, shifted_lower = lambda_lower(modes, small_search), lambda_lower(shift_modes(modes, mu), small_search)
    assert shifted_lower.certificate.signal.digest == lower.certificate.signal.digest
    assert shifted_lower.value == pytest.approx(lower.value + mu, abs=1e-12)
    upper, shifted_upper = lambda_upper_lognorm(modes), lambda_upper_lognorm(shift_modes(modes, mu))
    assert shifted_upper.value == pytest.approx(upper.value + mu, abs=1e-12)
    assert lower.shifted(mu).value == lower.value + mu


def test_quadratic_bound_tighter_than_lognorm():
    modes = [np.array([[-1.0, 4.0], [0.0, -1.0]])]
    quad = lambda_upper_quadratic(modes)
    assert quad.value < 0.0 <= lambda_upper_lognorm(modes).value
    assert quad.certificate.method == "quadratic-lognorm"
    assert quad.certificate.data["c"] >= 1.0


def test_classify_outcomes():
    assert classify(-2.0, -1.0) is Stability.ES
    assert classify(0.5, 1.0) is Stability.EU
    assert classify(-0.5, 0.5) is Stability.UNDECIDED
    with pytest.raises(ConsistencyError):
        classify(1.0, 0.5)


def test_rotation_is_undecided(small_search):
    rot = [np.array([[0.0, 1.0], [-1.0, 0.0]])]
    lower, upper = lambda_lower(rot, small_search), lambda_upper_lognorm(rot)
    assert classify(lower, upper) is Stability.UNDECIDED


def test_empty_mode_list():
    with pytest.raises(ValidationError):
        lambda_upper_lognorm([])


def test_bound_to_dict():
    bound = LyapunovBound(1.5, Side.UPPER, MethodCertificate("lognorm", {"per_mode": [1.5]}))
    assert bound.to_dict() == {
        "value": 1.5,
        "side": "UPPER",
        "certificate": {"method": "lognorm", "per_mode": [1.5]},
    }


# ---------------------------------------------------------------------------
# ε-sweep
# ---------------------------------------------------------------------------

def test_sweep_example_is_unstable_at_small_eps(example_sys, example_sig, small_search):
    eps_list = [0.01, 0.1]
    warm = {eps: [example_sig.rescaled(eps)] for eps in eps_list}
    rows = sweep_eps(example_sys, eps_list, small_search, warm)
    assert [r.epsilon for r in rows] == [0.1, 0.01]
    # one example period at ε = 0.1 has ρ ≈ 1.167
    assert rows[0].lower.value >= math.log(1.167) / 0.2 - 1e-2
    for row in rows:
        assert row.verdict is Stability.EU
        assert row.lower.value <= row.upper.value
        assert row.lower.value <= 19.3
        assert row.eps_times_lower == pytest.approx(row.epsilon * row.lower.value)


def test_sweep_witness_is_in_slow_time(example_sys, example_sig, small_search):
    (row,) = sweep_eps(example_sys, [0.1], small_search, {0.1: [example_sig.rescaled(0.1)]})
    witness = row.lower.certificate
    rho = spectral_radius(eps_flow(example_sys, witness.signal, 0.1).phi)
    assert math.log(rho) / witness.signal.total_duration == pytest.approx(row.lower.value, rel=1e-6)


def test_sweep_rejects_bad_epsilon(example_sys, small_search):
    with pytest.raises(ValidationError):
        sweep_eps(example_sys, [0.1, -0.1], small_search)


def test_sweep_survives_tiny_eps(small_search):
    # decoupled scalar blocks: λ(Σ_ε) = max a = 0.5 for every ε
    sys = BlockSystem(n=1, m=1, modes=(
        BlockMode(A=[[0.5]], B=[[0.0]], C=[[0.0]], D=[[-1.0]]),
        BlockMode(A=[[0.3]], B=[[0.0]], C=[[0.0]], D=[[-2.0]]),
    ))
    rows = sweep_eps(sys, [1e-3, 1e-5, 1e-7], small_search)
    assert [r.epsilon for r in rows] == [1e-3, 1e-5, 1e-7]
    for row in rows:
        assert row.upper.value == pytest.approx(0.5)
        assert row.lower.value == pytest.approx(0.5, abs=1e-6)
        assert row.verdict is Stability.EU


def test_search_rejects_out_of_range_warm_start(example_sys, small_search):
    with pytest.raises(ValidationError):
        search_witness(example_sys.block_modes, small_search, [PwcSignal(((0, 1.0), (5, 1.0)))])


def test_sweep_trend_on_exact_line():
    rows = [
        SweepRow(eps, LyapunovBound((3.0 + 2.0 * eps) / eps, Side.LOWER, MethodCertificate("x")),
                 LyapunovBound(1e9, Side.UPPER, MethodCertificate("x")), Stability.EU)
        for eps in (0.1, 0.05, 0.02, 0.01)
    ]
    trend = sweep_trend(rows)
    assert trend["intercept"] == pytest.approx(3.0)
    assert trend["slope"] == pytest.approx(2.0)
    assert trend["epsilons"] == [0.01, 0.02]


# ---------------------------------------------------------------------------
# Comparison chain
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def example_chain():
    return chain_experiment(example_system(), ChainConfig(check_signals=(example_signal(),)))


def test_chain_orders_the_example(example_chain):
    report = example_chain
    assert report.bar_lower.value == pytest.approx(-1.0)
    assert report.bar_upper.value == -1.0
    assert report.check_lower.value >= 2.99
    assert report.bar_lower.value <= report.check_lower.value
    rows = {row.epsilon: row for row in report.eps_rows}
    assert 0.0 < rows[0.01].lower.value <= 19.3
    # finite-ε lower bounds approach λ(Σ̌) from below as ε shrinks
    assert report.check_lower.value <= rows[0.001].lower.value + 0.5
    for row in report.eps_rows:
        assert row.lower.value <= 19.3
    assert report.hat_upper.value == pytest.approx(19.0, abs=0.3)
    assert report.consistent


def test_chain_lifts_the_check_witness(example_chain):
    lift = example_chain.lifts[0.01]
    assert lift.rho > 1.0
    payload = example_chain.to_dict()
    assert payload["consistent"] is True
    assert set(payload) >= {"bar", "check", "eps", "hat", "lifts", "checks"}


def test_chain_progress_reports_stages(example_sys):
    seen = []
    cfg = ChainConfig(
        search=SearchConfig(restarts=4, iterations=5),
        check=CheckSampleConfig(count=4),
        kset=KSetConfig(signals=4, horizon=200.0),
        hat=HatConfig(greedy_horizon=0.1),
        eps_list=(0.1,),
    )
    chain_experiment(example_sys, cfg, lambda pct, stage: seen.append(pct))
    assert seen[0] == 5 and seen[-1] == 100
    assert seen == sorted(seen)


def test_chain_requires_stable_fast_dynamics():
    sys = BlockSystem(n=1, m=1, modes=(BlockMode(A=[[-1.0]], B=[[1.0]], C=[[1.0]], D=[[0.5]]),))
    with pytest.raises(AssumptionError):
        chain_experiment(sys, ChainConfig(search=SearchConfig(restarts=4, iterations=5)))


def test_decoupled_chain_quantities_agree():
    rng = np.random.default_rng(5)
    cfg = ChainConfig(
        search=SearchConfig(restarts=8, iterations=10),
        check=CheckSampleConfig(count=8),
        kset=KSetConfig(signals=2, horizon=50.0),
        hat=HatConfig(greedy_horizon=0.1),
    )
    for _ in range(20):
        a = rng.uniform(-2.0, -0.2, size=2)
        d = rng.uniform(-1.0, -0.5, size=2)
        modes = tuple(BlockMode(A=[[a[i]]], B=[[0.0]], C=[[0.0]], D=[[d[i]]]) for i in range(2))
        report = chain_experiment(BlockSystem(n=1, m=1, modes=modes), cfg)
        values = [report.bar_lower.value, report.check_lower.value, report.hat_upper.value]
        for row in report.eps_rows:
            values += [row.lower.value, row.upper.value]
        assert np.allclose(values, a.max(), atol=1e-6)
        assert report.consistent
