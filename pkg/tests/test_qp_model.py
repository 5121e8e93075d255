import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pytest import approx

from tvqp.errors import ConfigError, PreconditionError
from tvqp.qp_model import (
    PAPER_LITERAL,
    SYMMETRIZED,
    AggregateObjective,
    BlockPartition,
    Box,
    ConstantFamily,
    CosineFamily,
    SampleState,
    TimeVaryingQP,
    TrackingFamily,
    build_aggregate,
    continuous_jump_constant,
    coupling_mask,
    eval_block_direction,
    eval_cost,
    make_qp,
    project_box,
)

from helpers import nonconvex_qp, random_cosine_qp

SQ2 = np.sqrt(2) / 2


def test_partition_offsets():
    p = BlockPartition((2, 1, 3))
    assert p.n == 6 and p.N == 3
    assert p.offsets == (0, 2, 3)
    assert p.block(2) == slice(3, 6)
    assert list(p.owner) == [0, 0, 1, 2, 2, 2]


@pytest.mark.parametrize("sizes", [(), (0,), (2, -1)])
def test_partition_rejects_bad_sizes(sizes):
    with pytest.raises(ConfigError):
        BlockPartition(sizes)


def test_box_geometry():
    box = Box(np.array([0.0, -1.0]), np.array([1.0, 3.0]))
    assert box.diameter == approx(np.sqrt(17))
    assert box.inradius == approx(0.5)
    assert box.volume == approx(4.0)
    assert box.max_norm == approx(np.sqrt(10))


def test_box_needs_interior():
    with pytest.raises(ConfigError):
        Box(np.array([0.0]), np.array([0.0]))


def test_aggregate_nonconvex_instance():
    qp, ss = nonconvex_qp()
    agg = build_aggregate(qp, ss)
    expected = np.array([[1.2 - SQ2, -SQ2], [-1.0, 1.2]])
    np.testing.assert_allclose(agg.q_hat, expected, atol=1e-12)


def test_aggregate_synchronous_is_sampled_problem():
    qp = random_cosine_qp(0)
    t = 3.7
    agg = build_aggregate(qp, SampleState.synchronous(qp.N, t))
    np.testing.assert_array_equal(agg.q_hat, qp.Q(t))
    np.testing.assert_array_equal(agg.q_hat, agg.q_hat.T)
    assert np.linalg.eigvalsh(agg.q_hat)[0] >= qp.xi - 1e-12


def test_aggregate_two_sample_times():
    fam = CosineFamily(np.diag([2.0, 2.0]), np.diag([1.0, 0.0]), 1.0)
    qp = TimeVaryingQP(BlockPartition((1, 1)), Box.cube(2, -1, 1), fam, 1.0)
    agg = build_aggregate(qp, SampleState(np.array([0.0, np.pi]), np.pi))
    np.testing.assert_allclose(agg.q_hat, np.diag([3.0, 2.0]), atol=1e-12)


def test_aggregate_dimension_mismatch():
    qp = random_cosine_qp(0)
    with pytest.raises(ConfigError):
        build_aggregate(qp, SampleState(np.zeros(3), 0.0))


def test_sample_state_rejects_future_samples():
    with pytest.raises(PreconditionError):
        SampleState(np.array([1.0, 3.0]), 2.0)


def _agg(q, r, offset=0.0):
    q = np.atleast_2d(np.asarray(q, dtype=float))
    part = BlockPartition((1,) * q.shape[0])
    ss = SampleState.synchronous(part.N, 0.0)
    return AggregateObjective(q, np.asarray(r, dtype=float), 0.0, ss, part, offset)


def test_eval_cost_examples():
    assert eval_cost(_agg([[2.0]], [1.0], 0.5), np.zeros(1)) == 0.5
    assert eval_cost(_agg([[2.0]], [1.0]), np.array([3.0])) == approx(12.0)
    qp, ss = nonconvex_qp()
    agg = build_aggregate(qp, ss)
    # half the sum of the entries of q_hat
    assert eval_cost(agg, np.ones(2)) == approx(0.5 * (2.4 - 2 * SQ2 - 1.0), abs=1e-12)
    assert eval_cost(agg, np.ones(2)) == approx(-0.0071068, abs=1e-7)


def test_eval_cost_shape_check():
    with pytest.raises(PreconditionError):
        eval_cost(_agg([[2.0]], [1.0]), np.zeros(2))


def test_block_direction_modes():
    qp, ss = nonconvex_qp()
    agg = build_aggregate(qp, ss)
    x = np.array([1.0, 0.0])
    assert eval_block_direction(agg, 1, x, PAPER_LITERAL) == approx([-1.0])
    assert eval_block_direction(agg, 1, x, SYMMETRIZED) == approx([0.5 * (-SQ2 - 1.0)])
    assert eval_block_direction(agg, 1, x, SYMMETRIZED)[0] == approx(-0.8536, abs=1e-4)


def test_block_direction_linear_only():
    agg = _agg(np.zeros((2, 2)), [0.3, -0.7])
    for mode in (PAPER_LITERAL, SYMMETRIZED):
        assert eval_block_direction(agg, 1, np.array([5.0, 6.0]), mode) == approx([-0.7])


def test_block_direction_unknown_mode():
    with pytest.raises(ConfigError):
        eval_block_direction(_agg([[1.0]], [0.0]), 0, np.zeros(1), "newton")


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 10), st.floats(0, 10))
def test_modes_agree_when_synchronous(seed, t, scale):
    qp = random_cosine_qp(seed % 7)
    agg = build_aggregate(qp, SampleState.synchronous(qp.N, t))
    x = qp.box.sample(np.random.default_rng(seed)) * scale / 10
    for i in range(qp.N):
        np.testing.assert_allclose(
            eval_block_direction(agg, i, x, PAPER_LITERAL), eval_block_direction(agg, i, x, SYMMETRIZED), rtol=1e-12, atol=1e-9
        )


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_cost_is_skew_invariant(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    Q = rng.normal(size=(n, n))
    r = rng.normal(size=n)
    x = rng.normal(size=n)
    a = eval_cost(_agg(Q, r), x)
    b = eval_cost(_agg(0.5 * (Q + Q.T), r), x)
    assert a == approx(b, rel=1e-12, abs=1e-12)


def test_project_box_examples():
    box = Box.cube(1, -100, 100)
    part = BlockPartition((1,))
    assert project_box(box, part, 0, np.array([-199.0])) == approx([-100.0])
    box2 = Box.cube(2, 0, 1)
    assert project_box(box2, BlockPartition((2,)), 0, np.array([0.5, 2.0])) == approx([0.5, 1.0])
    assert project_box(box2, BlockPartition((2,)), 0, np.array([0.5, 0.25])) == approx([0.5, 0.25])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_projection_idempotent_and_nonexpansive(seed):
    rng = np.random.default_rng(seed)
    box = Box(-rng.uniform(0.1, 5, 4), rng.uniform(0.1, 5, 4))
    part = BlockPartition((2, 2))
    u, v = rng.normal(0, 10, 2), rng.normal(0, 10, 2)
    pu, pv = project_box(box, part, 1, u), project_box(box, part, 1, v)
    np.testing.assert_array_equal(project_box(box, part, 1, pu), pu)
    assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-12


def test_jump_constant_examples():
    n, c = 3, 0.7
    part = BlockPartition((1,) * n)
    fam = CosineFamily(5 * np.eye(n), np.diag([c, 0, 0]), 1.0)
    qp = TimeVaryingQP(part, Box.cube(n, -1, 1), fam, 1.0)
    assert np.sum(qp.lipschitz_Q) == approx(c)
    assert continuous_jump_constant(qp) == approx(0.5 * n * c)

    fam = CosineFamily(np.eye(2), np.zeros((2, 2)), 1.0, r_amp=np.array([1.0, 0.0]))
    qp = TimeVaryingQP(BlockPartition((1, 1)), Box.cube(2, -1, 1), fam, 1.0)
    assert continuous_jump_constant(qp) == approx(np.sqrt(2))

    qp = TimeVaryingQP(BlockPartition((1,)), Box.cube(1, -1, 1), ConstantFamily(np.eye(1), np.zeros(1)), 1.0)
    assert continuous_jump_constant(qp) == 0.0


def _families():
    rng = np.random.default_rng(5)
    q0 = 10 * np.eye(4)
    a = rng.normal(size=(4, 4))
    s = rng.normal(size=(4, 4))
    yield CosineFamily(q0, 0.5 * (a + a.T), 0.7, sin_amp=0.5 * (s + s.T), r_amp=rng.normal(size=4), r_freq=3.0)
    yield TrackingFamily(2 * np.eye(4), (3.0, 1.0), (0.2, 0.5))
    yield ConstantFamily(q0, np.ones(4))


@pytest.mark.parametrize("fam", list(_families()))
def test_lipschitz_constants_are_valid(fam):
    part = BlockPartition((2, 2))
    times = np.linspace(0, 20, 60)
    LQ, Lr = fam.lipschitz_Q(part), fam.lipschitz_r(part)
    for i in range(part.N):
        b = part.block(i)
        for t1 in times[::3]:
            for t2 in times:
                dq = np.linalg.norm(fam.Q(t1)[b] - fam.Q(t2)[b], 2)
                dr = np.linalg.norm(fam.r(t1)[b] - fam.r(t2)[b])
                assert dq <= LQ[i] * abs(t1 - t2) + 1e-9
                assert dr <= Lr[i] * abs(t1 - t2) + 1e-9


def test_assumptions_hold_on_grid():
    qp = random_cosine_qp(1)
    times = np.linspace(0, 20, 101)
    assert qp.check_assumptions(times) == []
    for t in times:
        Q = qp.Q(t)
        assert np.max(np.abs(Q - Q.T)) <= 1e-12
        assert np.linalg.eigvalsh(Q)[0] >= qp.xi - 1e-12


def test_make_qp_rejects_indefinite_family():
    fam = CosineFamily(0.5 * np.eye(2), np.eye(2), 1.0)
    with pytest.raises(ConfigError):
        make_qp(BlockPartition((1, 1)), Box.cube(2, -1, 1), fam, 10.0)


def test_make_qp_rejects_asymmetric_family():
    fam = ConstantFamily(np.array([[2.0, 1.0], [0.0, 2.0]]), np.zeros(2))
    with pytest.raises(ConfigError):
        make_qp(BlockPartition((1, 1)), Box.cube(2, -1, 1), fam, 1.0, xi=1.0)


def test_tracking_family_minimizer_is_reference():
    fam = TrackingFamily(10 * np.eye(4), (100.0, 100.0), (0.01, 0.03))
    t = 42.0
    x = np.linalg.solve(fam.Q(t), -fam.r(t))
    np.testing.assert_allclose(x, np.tile([100 * np.cos(0.42), 100 * np.sin(1.26)], 2))


def test_coupling_mask_block_diagonal():
    fam = ConstantFamily(np.diag([1.0, 2.0, 3.0]), np.zeros(3))
    qp = TimeVaryingQP(BlockPartition((1, 2)), Box.cube(3, -1, 1), fam, 1.0)
    np.testing.assert_array_equal(coupling_mask(qp), np.eye(2, dtype=bool))


def test_fingerprint_distinguishes_samples():
    qp = random_cosine_qp(2)
    a = build_aggregate(qp, SampleState.synchronous(qp.N, 1.0))
    b = build_aggregate(qp, SampleState.synchronous(qp.N, 2.0))
    assert a.fingerprint() != b.fingerprint()
    assert a.fingerprint() == build_aggregate(qp, SampleState.synchronous(qp.N, 1.0)).fingerprint()
