"""Shared small instances for the test suite."""

import numpy as np

from tvqp.qp_model import BlockPartition, Box, CosineFamily, SampleState, TimeVaryingQP, make_qp, random_spd


def nonconvex_qp():
    q0 = np.array([[1.2, 0.0], [0.0, 1.2]])
    fam = CosineFamily(q0, np.array([[1.0, 0.0], [0.0, 0.0]]), 1.0, sin_amp=np.array([[0.0, 1.0], [1.0, 0.0]]))
    qp = TimeVaryingQP(BlockPartition((1, 1)), Box.cube(2, 0.0, 1.0), fam, 0.04)
    ss = SampleState(np.array([5 * np.pi / 4, 3 * np.pi / 2]), 3 * np.pi / 2)
    return qp, ss


def random_cosine_qp(seed, n_agents=4, block=2, half_width=10.0, omega=0.3, r_amp=5.0, horizon=20.0, shift=0.0):
    rng = np.random.default_rng([seed, 99])
    n = n_agents * block
    fam = CosineFamily(
        random_spd(n, rng) + shift * np.eye(n), 0.5 * np.eye(n), omega, r_amp=r_amp * np.ones(n), r_freq=2.0
    )
    return make_qp(BlockPartition.uniform(n_agents, block), Box.cube(n, -half_width, half_width), fam, horizon)


# criterion number -> (title, "PASS" | "FAIL"), printed at the end of the session
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def record_acceptance(number: int, title: str, passed: bool) -> None:
    ACCEPTANCE[number] = (title, "PASS" if passed else "FAIL")
