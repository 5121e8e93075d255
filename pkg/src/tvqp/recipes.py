"""Build problems and schedules from a config and run the experiment pipelines."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import baselines, bounds, engine, oracle, report
from .config import ExperimentConfig
from .errors import ConfigError
from .qp_model import (
    BlockPartition,
    Box,
    ConstantFamily,
    CosineFamily,
    SampleState,
    TimeVaryingQP,
    TrackingFamily,
    build_aggregate,
    coupling_mask,
    make_qp,
    random_spd,
)
from .schedule import AsyncSchedule, SamplingPlan, generate_sampling, generate_schedule, write_schedule_csv

_PROBLEM_STREAM = 4
_X0_STREAM = 3

SWEEP_PARAMS = {
    "B": ("schedule", "B", int),
    "gamma": ("solver", "gamma", str),
    "kappa": ("schedule", "kappa", lambda v: (int(v),)),
    "p_sample": ("sampling", "p_sample", lambda v: (float(v),)),
    "p_update": ("schedule", "p_update", lambda v: (float(v),)),
    "p_comm": ("schedule", "p_comm", lambda v: (float(v),)),
    "N": ("problem", "n_agents", int),
}


@dataclass
class Setup:
    cfg: ExperimentConfig
    qp: TimeVaryingQP
    plan: SamplingPlan
    schedule: AsyncSchedule
    x0: np.ndarray


def build_problem(cfg: ExperimentConfig) -> TimeVaryingQP:
    p = cfg.problem
    part = BlockPartition.uniform(p.n_agents, p.block_size)
    n = part.n
    box = Box.cube(n, p.box_lo, p.box_hi)
    rng = np.random.default_rng([cfg.seed, _PROBLEM_STREAM])
    if p.family == "random_cosine":
        fam = CosineFamily(random_spd(n, rng), p.amplitude * np.eye(n), p.omega, r_amp=p.r_amp * np.ones(n), r_freq=p.r_freq)
    elif p.family == "tracking":
        fam = TrackingFamily(p.q_scale * np.eye(n), tuple(p.ref_amplitude), tuple(p.ref_freq), tuple(p.ref_kinds))
    elif p.family == "constant":
        fam = ConstantFamily(random_spd(n, rng), p.r_amp * rng.standard_normal(n))
    else:
        raise ConfigError(f"unknown problem family {p.family!r}; use random_cosine, tracking or constant")
    return make_qp(part, box, fam, cfg.sampling.horizon, xi=p.xi, value_offset=p.value_offset)


def build_plan(cfg: ExperimentConfig, n_agents: int) -> SamplingPlan:
    s = cfg.sampling
    return generate_sampling(cfg.seed, n_agents, s.t_s, s.horizon, _per_agent(s.p_sample, n_agents))


def _per_agent(values, n_agents):
    return values[0] if len(values) == 1 else np.asarray(values, dtype=float)


def build_schedule(cfg: ExperimentConfig, qp: TimeVaryingQP, plan: SamplingPlan) -> AsyncSchedule:
    s = cfg.schedule
    mask = coupling_mask(qp) if s.mask == "coupling" else None
    kappa = s.kappa[0] if len(s.kappa) == 1 else s.kappa
    return generate_schedule(
        cfg.seed,
        qp.N,
        s.B,
        kappa,
        _per_agent(s.p_update, qp.N),
        _per_agent(s.p_comm, qp.N),
        n_intervals=plan.T + 1,
        mask=mask,
    )


def build_x0(cfg: ExperimentConfig, qp: TimeVaryingQP) -> np.ndarray:
    sol = cfg.solver
    spec = sol.x0.strip().lower()
    if spec == "zero":
        return np.clip(np.zeros(qp.n), qp.box.lo, qp.box.hi)
    if spec == "random":
        lo = qp.box.lo if sol.x0_lo is None else np.full(qp.n, sol.x0_lo)
        hi = qp.box.hi if sol.x0_hi is None else np.full(qp.n, sol.x0_hi)
        rng = np.random.default_rng([cfg.seed, _X0_STREAM])
        return np.clip(lo + (hi - lo) * rng.random(qp.n), qp.box.lo, qp.box.hi)
    try:
        x0 = np.array([float(v) for v in sol.x0.split(",")])
    except ValueError:
        raise ConfigError(f"x0 must be 'zero', 'random' or a vector, got {sol.x0!r}") from None
    if x0.size != qp.n:
        raise ConfigError(f"x0 has {x0.size} entries, expected {qp.n}")
    return x0


def setup(cfg: ExperimentConfig) -> Setup:
    qp = build_problem(cfg)
    plan = build_plan(cfg, qp.N)
    schedule = build_schedule(cfg, qp, plan)
    return Setup(cfg, qp, plan, schedule, build_x0(cfg, qp))


def make_oracle(cfg: ExperimentConfig, qp: TimeVaryingQP) -> report.OracleCache | None:
    o = cfg.oracle
    if not o.metrics:
        return None
    return report.OracleCache(qp, o.multistarts, o.tol, o.dedup_radius)


def run_async(st: Setup) -> engine.RunTrace:
    return engine.run(st.qp, st.plan, st.schedule, st.cfg.solver.gamma_policy(), st.cfg.solver.gradient_mode, st.x0, st.cfg.seed)


def _ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _plot_traces(traces: list[engine.RunTrace], cols, path, title):
    series = {}
    for tr in traces:
        rows = np.array([[r[0], r[3], r[4], r[5]] for r in tr.rows()])
        cols_map = {"cost": rows[:, 1], "s_norm": rows[:, 2], "beta": rows[:, 3]}
        if tr.alpha is not None:
            cols_map["alpha"] = tr.alpha
        if tr.err_opt is not None:
            cols_map["err_opt"] = tr.err_opt
        for c in cols:
            if c in cols_map:
                name = tr.label if len(cols) == 1 else f"{tr.label}:{c}"
                series[name] = (rows[:, 0], cols_map[c])
    if series:
        report.write_svg(path, report.svg_chart(series, title=title, xlabel="k", ylabel=", ".join(cols)))


def run_experiment(cfg: ExperimentConfig, out_dir: str | None = None, dump_schedule: bool = False) -> dict[str, str]:
    """Async run: trace.csv, intervals.csv, summary.csv (plus an SVG when enabled)."""
    out = _ensure_dir(out_dir or cfg.output.dir)
    st = setup(cfg)
    trace = run_async(st)
    trace, summary = report.compute_metrics(trace, make_oracle(cfg, st.qp))
    files = {
        "trace": os.path.join(out, "trace.csv"),
        "intervals": os.path.join(out, "intervals.csv"),
        "summary": os.path.join(out, "summary.csv"),
    }
    engine.write_trace_csv(trace, files["trace"])
    engine.write_intervals_csv(trace, files["intervals"])
    report.write_summary_csv([summary], files["summary"])
    if dump_schedule:
        files["schedule"] = os.path.join(out, "schedule.csv")
        write_schedule_csv(st.schedule, files["schedule"])
    if cfg.output.svg:
        files["svg"] = os.path.join(out, "trace.svg")
        _plot_traces([trace], cfg.output.plot_cols, files["svg"], cfg.name)
    return files


def compare_traces(cfg: ExperimentConfig) -> tuple[list[engine.RunTrace], list[report.SummaryReport]]:
    """Async BCD, synchronous BCD and consensus on one shared sampling realization."""
    st = setup(cfg)
    gamma = cfg.solver.gamma_policy()
    traces = [run_async(st)]
    sync_gamma = traces[0].gammas[0] if gamma == "auto" else float(gamma)
    traces.append(baselines.run_sync_bcd(st.qp, st.plan.union_times, st.schedule.kappa, sync_gamma, st.x0))
    cg = cfg.baseline.consensus_gamma if cfg.baseline.consensus_gamma is not None else sync_gamma
    ccfg = baselines.ConsensusConfig.build(st.qp.N, cg, cfg.baseline.topology)
    traces.append(baselines.run_consensus(st.qp, st.plan, ccfg, st.schedule.kappa, st.x0))
    oc = make_oracle(cfg, st.qp)
    out_traces, summaries = [], []
    for tr in traces:
        tr, s = report.compute_metrics(tr, oc)
        out_traces.append(tr)
        summaries.append(s)
    return out_traces, summaries


def compare(cfg: ExperimentConfig, out_dir: str | None = None) -> dict[str, str]:
    out = _ensure_dir(out_dir or cfg.output.dir)
    traces, summaries = compare_traces(cfg)
    files = {}
    for tr in traces:
        files[tr.label] = os.path.join(out, f"trace_{tr.label}.csv")
        engine.write_trace_csv(tr, files[tr.label])
    files["summary"] = os.path.join(out, "summary.csv")
    report.write_summary_csv(summaries, files["summary"])
    if cfg.output.svg:
        files["svg"] = os.path.join(out, "compare.svg")
        _plot_traces(traces, cfg.output.plot_cols, files["svg"], f"{cfg.name}: compare")
    return files


def sweep_config(cfg: ExperimentConfig, param: str, value: str) -> ExperimentConfig:
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {param!r}; choose from {', '.join(SWEEP_PARAMS)}")
    section, key, conv = SWEEP_PARAMS[param]
    try:
        v = conv(value)
    except ValueError:
        raise ConfigError(f"bad value {value!r} for sweep parameter {param}") from None
    new = cfg.replace(section, **{key: v})
    if param == "gamma":
        new.solver.gamma_policy()
    return new.validate()


def _sweep_member(args):
    cfg, param, value = args
    st = setup(cfg)
    trace = run_async(st)
    trace, summary = report.compute_metrics(trace, make_oracle(cfg, st.qp))
    summary.label = f"{param}={value}"
    return trace, summary


def sweep_traces(cfg: ExperimentConfig, param: str, values: list[str], workers: int = 1):
    cfgs = [sweep_config(cfg, param, v) for v in values]
    jobs = [(c, param, v) for c, v in zip(cfgs, values)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_sweep_member, jobs))
    else:
        results = [_sweep_member(j) for j in jobs]
    return [r[0] for r in results], [r[1] for r in results]


def sweep(cfg: ExperimentConfig, param: str, values: list[str], out_dir: str | None = None, workers: int = 1) -> dict[str, str]:
    out = _ensure_dir(out_dir or cfg.output.dir)
    traces, summaries = sweep_traces(cfg, param, values, workers)
    files = {}
    for v, tr in zip(values, traces):
        tr.label = f"{param}={v}"
        files[v] = os.path.join(out, f"trace_{param}_{v}.csv")
        engine.write_trace_csv(tr, files[v])
    files["summary"] = os.path.join(out, "summary.csv")
    report.write_summary_csv(summaries, files["summary"], extra=[{param: v} for v in values])
    if cfg.output.svg:
        files["svg"] = os.path.join(out, f"sweep_{param}.svg")
        _plot_traces(traces, cfg.output.plot_cols[:1], files["svg"], f"{cfg.name}: sweep {param}")
    return files


# -- bounds ------------------------------------------------------------------------

BOUNDS_COLUMNS = (
    "z", "t_z", "L_z", "gamma_max", "gamma_eval", "gamma_cfg", "gamma_cfg_ok",
    "D", "E", "F", "G", "a", "b", "rho", "K", "r", "thm1", "thm2",
    "lambda_hat", "eps_hat", "sigma_hat", "value_offset",
)


def bounds_rows(cfg: ExperimentConfig) -> list[dict]:
    """Per-interval constants and bounds, evaluated at 0.9 gamma_max.

    The cost offset is raised so the aggregate cost is nonnegative on the box.
    r_z is taken as kappa_z // B.
    """
    st = setup(cfg)
    qp = st.qp
    orc = report.OracleCache(qp, cfg.oracle.multistarts, cfg.oracle.tol, cfg.oracle.dedup_radius)
    Z = st.plan.T + 1
    aggs = [build_aggregate(qp, st.plan.sample_state(z)) for z in range(Z)]
    sets = [orc.stationary(a) for a in aggs]
    lowest = min(float(s.costs.min()) for s in sets if len(s))
    offset = max(qp.value_offset, -lowest)
    if offset != qp.value_offset:
        qp = qp.with_offset(offset)
        aggs = [build_aggregate(qp, st.plan.sample_state(z)) for z in range(Z)]
    rows = bounds.interval_bounds(qp, st.plan, st.schedule.kappa, st.schedule.B, aggs, lam=cfg.oracle.lam)
    rows = bounds.theorem2_column(qp, rows, aggs)
    gamma_cfg = cfg.solver.gamma_policy()
    out = []
    for z, row in enumerate(rows):
        lam_hat, _ = oracle.estimate_error_bound_constant(aggs[z], qp.box, sets[z], cfg.oracle.lambda_samples, cfg.seed)
        sigma_hat = oracle.estimate_sigma(sets[z - 1], sets[z], qp.box.diameter) if z > 0 else math.nan
        g_cfg = row.block.gamma if gamma_cfg == "auto" else float(gamma_cfg)
        cb = row.block
        out.append(
            {
                "z": z,
                "t_z": row.t_z,
                "L_z": row.oc.L,
                "gamma_max": cb.gamma_max,
                "gamma_eval": cb.gamma,
                "gamma_cfg": g_cfg,
                "gamma_cfg_ok": int(g_cfg < cb.gamma_max),
                "D": cb.D,
                "E": cb.E,
                "F": cb.F,
                "G": cb.G,
                "a": cb.a,
                "b": cb.b,
                "rho": cb.rho,
                "K": cb.K,
                "r": row.r,
                "thm1": row.thm1,
                "thm2": row.thm2,
                "lambda_hat": lam_hat,
                "eps_hat": oracle.estimate_separation(sets[z]),
                "sigma_hat": sigma_hat,
                "value_offset": offset,
            }
        )
    return out


def bounds_report(cfg: ExperimentConfig, out_dir: str | None = None) -> tuple[str, str]:
    """Write bounds.csv and return (path, printable table)."""
    out = _ensure_dir(out_dir or cfg.output.dir)
    rows = bounds_rows(cfg)
    path = os.path.join(out, "bounds.csv")
    report.atomic_write_csv(path, BOUNDS_COLUMNS, [[engine._fmt(r[c]) for c in BOUNDS_COLUMNS] for r in rows])
    shown = ("z", "t_z", "L_z", "gamma_max", "D", "E", "F", "G", "a", "rho", "K", "thm1", "thm2", "lambda_hat", "eps_hat", "sigma_hat")
    lines = ["  ".join(f"{c:>11}" for c in shown)]
    for r in rows:
        lines.append("  ".join(f"{_short(r[c]):>11}" for c in shown))
    lines.append("r_z = kappa_z // B (bound-side convention); lambda = %g (config), lambda_hat is empirical" % cfg.oracle.lam)
    return path, "\n".join(lines)


def _short(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".4g")


# -- nonconvex aggregate demo -----------------------------------------------------


def nonconvex_instance() -> tuple[TimeVaryingQP, SampleState]:
    """Q(t) = [[1.2 + cos t, sin t], [sin t, 1.2]], r = 0, box [0, 1]^2, samples 5pi/4 and 3pi/2."""
    q0 = np.array([[1.2, 0.0], [0.0, 1.2]])
    amp = np.array([[1.0, 0.0], [0.0, 0.0]])
    sin_amp = np.array([[0.0, 1.0], [1.0, 0.0]])
    fam = CosineFamily(q0, amp, 1.0, sin_amp=sin_amp)
    # xi is the eigenvalue floor over one period (about 0.045)
    qp = make_qp(BlockPartition((1, 1)), Box.cube(2, 0.0, 1.0), fam, 2 * np.pi)
    return qp, SampleState(np.array([5 * np.pi / 4, 3 * np.pi / 2]), 3 * np.pi / 2)


def nonconvexity_demo() -> str:
    qp, ss = nonconvex_instance()
    agg = build_aggregate(qp, ss)
    eigs = oracle.symmetric_part_eigs(agg.q_hat)
    sset = oracle.find_stationary_set(agg, qp.box)

    def mat(M):
        return "\n".join("  [" + ", ".join(f"{v: .6f}" for v in row) + "]" for row in M)

    lines = [
        f"sample times: theta = ({ss.theta[0]:.6f}, {ss.theta[1]:.6f}), t_z = {ss.t_z:.6f}",
        f"sampled problems strongly convex with xi = {qp.xi:.6f}",
        "aggregate Q_hat:",
        mat(agg.q_hat),
        "symmetric part:",
        mat(agg.q_sym),
        "eigenvalues of symmetric part: " + ", ".join(f"{v:.6f}" for v in eigs),
        "stationary points on [0,1]^2:",
    ]
    for p, c in zip(sset.points, sset.costs):
        lines.append(f"  x = ({p[0]:.6f}, {p[1]:.6f})  cost = {c:.6f}")
    verdict = "nonconvex aggregate" if eigs.min() < 0 else "convex aggregate"
    lines.append(f"verdict: {verdict}")
    return "\n".join(lines)
