import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pytest import approx

from tvqp.baselines import ConsensusConfig, metropolis_weights, run_consensus, run_sync_bcd
from tvqp.bounds import interval_bounds
from tvqp.engine import run
from tvqp.errors import ConfigError
from tvqp.oracle import solve_strongly_convex
from tvqp.qp_model import BlockPartition, Box, ConstantFamily, make_qp, random_spd
from tvqp.schedule import SamplingPlan, generate_sampling, synchronous_schedule

from helpers import random_cosine_qp


def _static(seed=0, n_agents=2, block=2):
    rng = np.random.default_rng(seed)
    n = n_agents * block
    fam = ConstantFamily(random_spd(n, rng), rng.normal(0, 2, n))
    return make_qp(BlockPartition.uniform(n_agents, block), Box.cube(n, -2, 2), fam, 1.0)


def test_sync_bcd_matches_engine():
    qp = random_cosine_qp(6)
    plan = generate_sampling(6, qp.N, 2.0, 10.0, 1.0)
    sched = synchronous_schedule(qp.N, 50, plan.T + 1)
    a = run(qp, plan, sched, 0.02, x0="random", seed=6)
    b = run_sync_bcd(qp, plan.union_times, 50, 0.02, x0="random", seed=6)
    assert np.max(np.abs(a.states - b.states)) <= 1e-12


def test_sync_bcd_kappa_one():
    qp = _static()
    x0 = np.full(qp.n, 1.0)
    tr = run_sync_bcd(qp, [0.0, 1.0, 2.0], 1, 0.1, x0=x0)
    assert tr.K == 3
    x1 = np.clip(x0 - 0.1 * (qp.Q(0.0) @ x0 + qp.r(0.0)), -2, 2)
    np.testing.assert_allclose(tr.states[1], x1)


def test_sync_bcd_geometric_rate():
    qp = _static(1)
    plan = SamplingPlan.from_times(1.0, [[0]] * qp.N)
    rows = interval_bounds(qp, plan, 300, 1)
    rho = rows[0].block.rho
    L = np.linalg.eigvalsh(qp.Q(0.0))[-1]
    xstar, fstar = solve_strongly_convex(qp.Q(0.0), qp.r(0.0), qp.box, 1e-13)
    for gamma in (rows[0].block.gamma, 1.0 / L):
        tr = run_sync_bcd(qp, [0.0], 300, gamma, x0=np.full(qp.n, -2.0))
        alpha = tr.costs - fstar
        ok = alpha > 1e-12
        ks = np.flatnonzero(ok)
        rate = np.exp(np.polyfit(ks, np.log(alpha[ks]), 1)[0])
        assert rate <= rho + 0.05


def test_metropolis_weights():
    for topo in ("complete", "ring"):
        for n in (1, 2, 5):
            W = metropolis_weights(n, topo)
            np.testing.assert_allclose(W.sum(axis=0), 1, atol=1e-12)
            np.testing.assert_allclose(W.sum(axis=1), 1, atol=1e-12)
            assert np.all(W >= 0)
            if n > 1:
                assert ConsensusConfig(W, 0.1).spectral_gap() > 0
    with pytest.raises(ConfigError):
        metropolis_weights(3, "star")


def test_consensus_config_validation():
    with pytest.raises(ConfigError):
        ConsensusConfig(np.array([[0.5, 0.6], [0.5, 0.4]]), 0.1)
    with pytest.raises(ConfigError):
        ConsensusConfig(np.eye(2), 0.0)


def test_consensus_single_agent_is_projected_gradient():
    qp = _static(2, n_agents=1, block=3)
    plan = SamplingPlan.from_times(1.0, [[0, 1, 2]])
    x0 = np.zeros(3)
    a = run_consensus(qp, plan, ConsensusConfig.build(1, 0.05), 20, x0=x0)
    b = run_sync_bcd(qp, plan.union_times, 20, 0.05, x0=x0)
    np.testing.assert_allclose(a.states, b.states, atol=1e-13)


def test_consensus_uniform_weights_agree():
    qp = _static(3)
    plan = SamplingPlan.from_times(1.0, [[0], [0]])
    W = np.full((2, 2), 0.5)
    tr = run_consensus(qp, plan, ConsensusConfig(W, 0.1), 10, x0=np.ones(qp.n))
    assert np.all(tr.extra["disagreement"] <= 1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["complete", "ring"]))
def test_consensus_copies_stay_in_box(seed, topo):
    qp = random_cosine_qp(seed % 5, n_agents=3, block=1, half_width=1.0)
    plan = generate_sampling(seed, 3, 1.0, 4.0, 0.5)
    tr = run_consensus(qp, plan, ConsensusConfig.build(3, 0.05, topo), 15, x0="random", seed=seed)
    assert np.all(np.abs(tr.states) <= 1.0)
    assert np.all(tr.extra["disagreement"] <= qp.box.diameter)
