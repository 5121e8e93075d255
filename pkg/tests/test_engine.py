import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pytest import approx

from tvqp.engine import (
    TRACE_COLUMNS,
    NetworkState,
    estimate_khat,
    read_trace_csv,
    run,
    step,
    write_intervals_csv,
    write_trace_csv,
)
from tvqp.errors import ConfigError, NonFiniteTraceError, PreconditionError
from tvqp.qp_model import (
    AggregateObjective,
    BlockPartition,
    Box,
    ConstantFamily,
    SampleState,
    TimeVaryingQP,
    make_qp,
    random_spd,
)
from tvqp.schedule import AsyncSchedule, SamplingPlan, generate_sampling, generate_schedule, synchronous_schedule

from helpers import random_cosine_qp


def _scalar_agg(q, r):
    part = BlockPartition((1,))
    return AggregateObjective(np.array([[q]]), np.array([r]), 0.0, SampleState.synchronous(1, 0.0), part)


def _one_step(x, q, r, gamma, compute=True):
    agg = _scalar_agg(q, r)
    sched = AsyncSchedule(1, np.array([1]), np.array([[compute]]), -np.ones((1, 1, 1), dtype=np.int64), np.ones((1, 1), bool))
    state = NetworkState.initial(np.array([x]), 1)
    hist = np.array([[x], [np.nan]])
    s = step(0, agg, sched, state, gamma, np.array([-100.0]), np.array([100.0]), hist)
    return state.x[0], s


def test_step_by_hand():
    x, s = _one_step(1.0, 2.0, 0.0, 0.1)
    assert x == approx(0.8)
    assert s == approx([-0.2])


def test_step_idle():
    x, s = _one_step(1.0, 2.0, 0.0, 0.1, compute=False)
    assert x == 1.0 and np.all(s == 0)


def test_step_clamps():
    # direction 200 at x = 1
    x, _ = _one_step(1.0, 0.0, 200.0, 1.0)
    assert x == -100.0


def _static_qp(n_agents=3, block=2, seed=0):
    rng = np.random.default_rng(seed)
    n = n_agents * block
    fam = ConstantFamily(random_spd(n, rng), rng.normal(0, 3, n))
    return make_qp(BlockPartition.uniform(n_agents, block), Box.cube(n, -5, 5), fam, 10.0)


def test_static_synchronous_run_descends():
    qp = _static_qp()
    plan = SamplingPlan.from_times(1.0, [[0]] * qp.N)
    sched = synchronous_schedule(qp.N, 400, 1)
    L = np.linalg.eigvalsh(qp.Q(0.0))[-1]
    tr = run(qp, plan, sched, 1.0 / L, x0=np.full(qp.n, 4.0))
    assert np.all(np.diff(tr.costs) <= 1e-10)
    assert tr.s_norm[-1] < 1e-6


def test_run_is_deterministic():
    qp = random_cosine_qp(3)
    plan = generate_sampling(3, qp.N, 2.0, 10.0, 0.5)
    sched = generate_schedule(3, qp.N, 4, 30, 0.5, 0.5, plan.T + 1)
    a = run(qp, plan, sched, 0.01, x0="random", seed=3)
    b = run(qp, plan, sched, 0.01, x0="random", seed=3)
    np.testing.assert_array_equal(a.states, b.states)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_views_match_delayed_history(seed, B):
    """Every copy an agent holds is x_j at some tau within the last B iterations."""
    qp = random_cosine_qp(seed % 5, n_agents=3, block=1)
    plan = generate_sampling(seed, qp.N, 2.0, 8.0, 0.7)
    sched = generate_schedule(seed, qp.N, B, 15, 0.5, 0.4, plan.T + 1)
    tr = run(qp, plan, sched, 0.02, x0="random", seed=seed, audit=True)
    assert tr.copy_ages.min() >= 0 and tr.copy_ages.max() <= B - 1
    part = qp.partition
    for k in range(tr.K):
        for i in range(qp.N):
            for j in range(qp.N):
                tau = k - tr.copy_ages[k, i, j]
                b = part.block(j)
                if i != j:
                    np.testing.assert_array_equal(tr.views[k, i, b], tr.states[tau, b])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-4, 2.0))
def test_states_stay_in_box(seed, gamma):
    qp = random_cosine_qp(seed % 5, half_width=1.0)
    plan = generate_sampling(seed, qp.N, 1.0, 5.0, 0.6)
    sched = generate_schedule(seed, qp.N, 3, 20, 0.6, 0.6, plan.T + 1)
    tr = run(qp, plan, sched, gamma, x0="random", seed=seed)
    assert np.all(tr.states >= -1.0) and np.all(tr.states <= 1.0)


def test_beta_definition():
    qp = random_cosine_qp(1)
    plan = generate_sampling(1, qp.N, 2.0, 6.0, 1.0)
    sched = generate_schedule(1, qp.N, 5, 20, 0.5, 0.5, plan.T + 1)
    tr = run(qp, plan, sched, 0.01, x0="random", seed=1)
    beta = tr.beta
    for k in (0, 3, 5, 17, tr.K):
        assert beta[k] == approx(np.sum(tr.s_norm[max(0, k - 5) : k] ** 2), abs=1e-12)


def test_estimate_khat_cases():
    qp = _static_qp()
    plan = SamplingPlan.from_times(1.0, [[0]] * qp.N)
    sched = synchronous_schedule(qp.N, 2000, 1)
    tr = run(qp, plan, sched, 0.05, x0=np.full(qp.n, 4.0))
    kh = estimate_khat(tr, 0, 1e-6)
    assert kh < 2000
    assert tr.s_norm[kh] < 1e-6 and tr.s_norm[kh - 1] >= 1e-6
    assert estimate_khat(tr, 0, np.inf) == tr.B
    assert estimate_khat(tr, 0, 0.0) == 2000


def test_gamma_policies():
    qp = random_cosine_qp(2)
    plan = generate_sampling(2, qp.N, 2.0, 4.0, 1.0)
    sched = synchronous_schedule(qp.N, 5, plan.T + 1)
    tr = run(qp, plan, sched, [0.01, 0.02, 0.03])
    np.testing.assert_allclose(tr.gammas, [0.01, 0.02, 0.03])
    tr = run(qp, plan, sched, lambda z, agg: 0.001 * (z + 1))
    np.testing.assert_allclose(tr.gammas, [0.001, 0.002, 0.003])
    for bad in (0.0, -1.0, "fast", [0.1, 0.2]):
        with pytest.raises(ConfigError):
            run(qp, plan, sched, bad)


def test_x0_outside_box():
    qp = random_cosine_qp(2, half_width=1.0)
    plan = generate_sampling(2, qp.N, 2.0, 2.0, 1.0)
    with pytest.raises(PreconditionError):
        run(qp, plan, synchronous_schedule(qp.N, 3, plan.T + 1), 0.1, x0=np.full(qp.n, 2.0))


def test_trace_csv_roundtrip(tmp_path):
    qp = random_cosine_qp(4)
    plan = generate_sampling(4, qp.N, 2.0, 6.0, 0.5)
    sched = generate_schedule(4, qp.N, 3, 10, 0.5, 0.5, plan.T + 1)
    tr = run(qp, plan, sched, 0.01, x0="random", seed=4)
    path = tmp_path / "trace.csv"
    write_trace_csv(tr, path)
    data = read_trace_csv(path)
    assert tuple(data) == TRACE_COLUMNS
    np.testing.assert_array_equal(data["cost"], tr.costs)
    np.testing.assert_array_equal(data["beta"], tr.beta)
    assert np.all(np.isnan(data["alpha"]))
    write_intervals_csv(tr, tmp_path / "intervals.csv")
    assert len((tmp_path / "intervals.csv").read_text().splitlines()) == plan.T + 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_trace_csv_rejects_nonfinite(tmp_path):
    qp = random_cosine_qp(4)
    plan = generate_sampling(4, qp.N, 2.0, 2.0, 1.0)
    tr = run(qp, plan, synchronous_schedule(qp.N, 3, plan.T + 1), 0.01)
    tr.states[2, 0] = np.inf
    with pytest.raises(NonFiniteTraceError):
        write_trace_csv(tr, tmp_path / "t.csv")
