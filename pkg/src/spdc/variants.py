"""Solver run loops: fixed-plan runs, violation-refresh sampling, and the
snapshot/acceptance heuristics that restrict updates to violated coordinates.

Each runner drives the step functions from :mod:`spdc.core`, emits one trace
record per epoch-equivalent of sampled dual coordinates, and stops when the
duality gap reaches the budget tolerance or the epoch budget is exhausted
(budget exhaustion returns the final state, it is not an error).  Runs are
strictly sequential; distinct runs over the same dataset may execute in
parallel.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import core
from .core import (
    DspdcConfig,
    SolverState,
    StepParams,
    adaspdc_step,
    init_state,
)
from .errors import NumericalFailure, ScheduleError, ZeroViolations
from .objective import (
    ProblemSpec,
    dual_objective,
    dual_prox,
    dual_violations,
    primal_objective,
    primal_violations,
)
from .sampling import SamplingPlan, build_ovs, build_restricted, build_uniform
from .trace import TraceRecord

__all__ = [
    "Budget",
    "VariantConfig",
    "RunResult",
    "run_fixed",
    "run_ovsspdc",
    "run_ovs_exact",
    "run_ovsspdc_plus",
    "run_ovsspdc_plusplus",
]


@dataclass(frozen=True)
class Budget:
    """Stopping rule: absolute duality-gap tolerance and epoch-equivalent cap."""

    gap_tol: float = 1e-8
    max_epochs: float = 100.0


@dataclass
class VariantConfig:
    """Knobs for the violation-driven runners.

    ``refresh_every`` is the iteration period of the violation/probability
    refresh (None means ceil(n/a)).  ``gap_check_every`` sets how often the
    snapshot acceptance test runs inside an inner loop (None means once, at
    the end).  ``violation_tol`` is the threshold below which a violation
    counts as zero; the default 0 uses exact float equality, which the prox
    arithmetic produces at fixed points.  ``record_draws`` keeps a log of all
    sampled indices for instrumentation.
    """

    refresh_every: int | None = None
    gap_check_every: int | None = None
    mode: str = "ovs"
    violation_tol: float = 0.0
    record_draws: bool = False

    def __post_init__(self):
        if self.refresh_every is not None and self.refresh_every < 1:
            raise ValueError("refresh_every must be >= 1")


@dataclass
class RunResult:
    """A finished run: final state, trace, and bookkeeping counters."""

    state: SolverState
    trace: list
    converged: bool
    counters: dict = field(default_factory=dict)
    params: StepParams | None = None
    plan: SamplingPlan | None = None


class _Clock:
    """Wall-clock stopwatch; frozen at zero when timing is disabled."""

    def __init__(self, timing: bool = True):
        self.timing = timing
        self._t0 = time.perf_counter()

    def read(self) -> float:
        return time.perf_counter() - self._t0 if self.timing else 0.0


def _checkpoint(records, idx, epoch, clock, state, ds, spec) -> TraceRecord:
    p_val = primal_objective(state.w, ds, spec)
    d_val = dual_objective(state.alpha, ds, spec)
    if not (np.isfinite(p_val) and np.isfinite(d_val)):
        raise NumericalFailure(
            f"non-finite objective at checkpoint {idx}: primal={p_val}, dual={d_val}"
        )
    if state.cache_error(ds) > 1e-9:
        raise NumericalFailure(f"dual-image cache drifted at checkpoint {idx}")
    kappa = dual_violations(state.w, state.alpha, ds, spec)
    rec = TraceRecord(
        checkpoint=idx,
        epoch=epoch,
        seconds=clock.read(),
        primal=p_val,
        dual=d_val,
        gap=p_val - d_val,
        nnz_w=int(np.count_nonzero(state.w)),
        zero_kappa=int(np.count_nonzero(kappa == 0.0)),
    )
    records.append(rec)
    return rec


def run_fixed(ds, spec: ProblemSpec, plan: SamplingPlan, params: StepParams,
              a: int, budget: Budget, rng: np.random.Generator,
              stepper: str = "adaspdc", dspdc_cfg: DspdcConfig | None = None,
              timing: bool = True, state0: SolverState | None = None) -> RunResult:
    """Run a solver with a fixed plan and fixed step sizes to the budget.

    ``stepper`` selects the iteration: 'adaspdc' (per-instance dual steps),
    'spdc' (shared scalar step), or 'dspdc' (random primal block, needs
    ``dspdc_cfg``).  ``state0`` warm-starts the run (the state is copied).
    """
    state = init_state(ds) if state0 is None else state0.copy()
    clock = _Clock(timing)
    records: list[TraceRecord] = []
    per_epoch = math.ceil(ds.n / a)
    rec = _checkpoint(records, 0, 0.0, clock, state, ds, spec)
    converged = rec.gap <= budget.gap_tol
    duals_drawn = 0
    ckpt = 0
    while not converged and duals_drawn / ds.n < budget.max_epochs:
        for _ in range(per_epoch):
            if stepper == "dspdc":
                core.dspdc_step(state, params, plan, dspdc_cfg, ds, spec, a, rng)
            else:
                adaspdc_step(state, params, plan, ds, spec, a, rng)
            duals_drawn += a
        ckpt += 1
        rec = _checkpoint(records, ckpt, duals_drawn / ds.n, clock, state, ds, spec)
        converged = rec.gap <= budget.gap_tol
    return RunResult(
        state=state,
        trace=records,
        converged=converged,
        counters={"iterations": state.iter, "duals_drawn": duals_drawn},
        params=params,
        plan=plan,
    )


def run_ovsspdc(ds, spec: ProblemSpec, a: int, cfg: VariantConfig, budget: Budget,
                rng: np.random.Generator, timing: bool = True,
                state0: SolverState | None = None) -> RunResult:
    """Violation-weighted sampling with periodic probability refresh.

    Every ``refresh_every`` iterations (default one epoch-equivalent) the dual
    violations are recomputed at the current iterate, the capped
    violation-weighted plan is rebuilt, and the sqrt(n)-boosted step sizes and
    momentum are rederived from it.  When every violation is zero the refresh
    falls back to the uniform plan and the run continues.
    """
    n = ds.n
    if a * a > n:
        raise ScheduleError(f"violation-weighted sampling requires a <= sqrt(n); got a={a}")
    refresh_every = cfg.refresh_every or math.ceil(n / a)
    per_epoch = math.ceil(n / a)
    state = init_state(ds) if state0 is None else state0.copy()
    clock = _Clock(timing)
    records: list[TraceRecord] = []
    rec = _checkpoint(records, 0, 0.0, clock, state, ds, spec)
    converged = rec.gap <= budget.gap_tol
    plan = params = None
    refreshes = fallbacks = 0
    draw_log = [] if cfg.record_draws else None
    duals_drawn = 0
    ckpt = 0
    it = 0
    while not converged and duals_drawn / n < budget.max_epochs:
        if it % refresh_every == 0:
            kappa = dual_violations(state.w, state.alpha, ds, spec)
            kappa = np.where(kappa > cfg.violation_tol, kappa, 0.0)
            try:
                plan = build_ovs(kappa, ds.row_norms, a, n)
            except ZeroViolations:
                plan = build_uniform(n, a)
                fallbacks += 1
            params = core.schedule_thm5(ds, spec, plan)
            refreshes += 1
        adaspdc_step(state, params, plan, ds, spec, a, rng)
        if draw_log is not None:
            draw_log.append(state.last_draws.copy())
        duals_drawn += a
        it += 1
        if it % per_epoch == 0:
            ckpt += 1
            rec = _checkpoint(records, ckpt, duals_drawn / n, clock, state, ds, spec)
            converged = rec.gap <= budget.gap_tol
    if it % per_epoch != 0:
        rec = _checkpoint(records, ckpt + 1, duals_drawn / n, clock, state, ds, spec)
        converged = rec.gap <= budget.gap_tol
    counters = {
        "iterations": state.iter,
        "duals_drawn": duals_drawn,
        "refreshes": refreshes,
        "uniform_fallbacks": fallbacks,
    }
    if draw_log is not None:
        counters["draw_log"] = draw_log
    return RunResult(state, records, converged, counters, params, plan)


def _restricted_schedule(ds, spec: ProblemSpec, plan: SamplingPlan, a: int) -> StepParams:
    """Step sizes for a plan restricted to the active coordinates.

    The active-set size replaces the instance count in the step-size formulas
    and in the momentum factor.  Uses the sqrt(n')-boosted rule when
    ``a <= sqrt(n')``, the base rule for ``a <= n'``, and clamps the effective
    batch to ``n'`` otherwise.  Dual steps are nudged if the prox coefficient
    would make ``gamma - p_i n'/sigma_i`` vanish (the skip test needs it
    nonzero).
    """
    active = plan.active
    n_eff = active.size
    p_act = plan.p[active]
    norms_act = ds.row_norms[active]
    ru = float(np.min(p_act / norms_act))
    a_eff = min(a, n_eff)
    if a_eff * a_eff <= n_eff:
        tau = (a_eff * ru / 2.0) * math.sqrt(n_eff * spec.gamma / spec.lam)
        sig_act = (n_eff * p_act / (2.0 * norms_act)) * math.sqrt(n_eff * spec.lam / spec.gamma)
        schedule = "thm5"
    else:
        tau = (a_eff * ru / 2.0) * math.sqrt(spec.gamma / spec.lam)
        sig_act = (n_eff * p_act / (2.0 * norms_act)) * math.sqrt(spec.lam / spec.gamma)
        schedule = "thm4"
    degenerate = spec.gamma - p_act * n_eff / sig_act == 0.0
    if np.any(degenerate):
        sig_act = np.where(degenerate, sig_act * (1.0 + 1e-9), sig_act)
    sigma = np.ones(ds.n)
    sigma[active] = sig_act
    params = StepParams(tau=tau, sigma=sigma, theta=0.5, schedule=schedule,
                        r_under=ru, n_eff=n_eff)
    t1 = 1.0 - 1.0 / (1.0 + 1.0 / (2.0 * tau * spec.lam))
    t2 = 1.0 - 1.0 / float(
        np.max(1.0 / (a_eff * p_act) + n_eff / (2.0 * a_eff * sig_act * spec.gamma))
    )
    params.theta = max(t1, t2)
    return params


def run_ovs_exact(ds, spec: ProblemSpec, cfg: VariantConfig, budget: Budget,
                  rng: np.random.Generator, timing: bool = True,
                  state0: SolverState | None = None) -> RunResult:
    """Exact violation gating: recompute violations every iteration, sample
    only violated duals (zero probability elsewhere).

    Violations are evaluated against the extrapolated weights, which is the
    quantity the dual prox actually sees, so gated coordinates are exact
    fixed points.  Costs O(nnz) per iteration; intended for small problems.
    Terminates early when every dual and primal violation is exactly zero.
    """
    n = ds.n
    a = 1
    state = init_state(ds) if state0 is None else state0.copy()
    clock = _Clock(timing)
    records: list[TraceRecord] = []
    rec = _checkpoint(records, 0, 0.0, clock, state, ds, spec)
    converged = rec.gap <= budget.gap_tol
    plan = params = None
    optimal = False
    draw_log = [] if cfg.record_draws else None
    active_log = [] if cfg.record_draws else None
    duals_drawn = 0
    ckpt = 0
    it = 0
    while not converged and not optimal and duals_drawn / n < budget.max_epochs:
        kappa_bar = dual_violations(state.w_bar, state.alpha, ds, spec)
        kappa_bar = np.where(kappa_bar > cfg.violation_tol, kappa_bar, 0.0)
        try:
            plan = build_restricted(kappa_bar, a)
        except ZeroViolations:
            psi = primal_violations(state.w, state.alpha_bar, ds, spec)
            if np.all(psi == 0.0):
                optimal = True
                break
            # dual side settled; flush the primal and re-check next iteration
            if params is None:
                params = core.schedule_thm5(ds, spec, build_uniform(n, a))
            core._settle_alpha_bar(state, ds)
            w_before = state.w.copy()
            core._primal_pass(state, params.tau, spec.lam, params.theta)
            it += 1
            if np.array_equal(state.w, w_before):
                # the primal map has frozen too: a genuine fixed point
                optimal = True
                break
            continue
        params = _restricted_schedule(ds, spec, plan, a)
        adaspdc_step(state, params, plan, ds, spec, a, rng)
        if draw_log is not None:
            draw_log.append(state.last_draws.copy())
            active_log.append(plan.active.copy())
        duals_drawn += a
        it += 1
        if it % n == 0:
            ckpt += 1
            rec = _checkpoint(records, ckpt, duals_drawn / n, clock, state, ds, spec)
            converged = rec.gap <= budget.gap_tol
    if state.iter > 0 and (optimal or it % n != 0):
        rec = _checkpoint(records, ckpt + 1, duals_drawn / n, clock, state, ds, spec)
        converged = rec.gap <= budget.gap_tol
    counters = {"iterations": state.iter, "duals_drawn": duals_drawn,
                "optimal_exit": optimal}
    if draw_log is not None:
        counters["draw_log"] = draw_log
        counters["active_log"] = active_log
    return RunResult(state, records, converged or optimal, counters, params, plan)


def _full_pass(state: SolverState, ds, spec: ProblemSpec, params: StepParams) -> None:
    """One deterministic sweep: every dual coordinate once, in index order,
    then the full primal prox and weight extrapolation.

    No sampling is involved, so the duals enter the cache unextrapolated.
    """
    n = ds.n
    indptr, indices, data = ds.csr_arrays()
    core._settle_alpha_bar(state, ds)
    alpha = state.alpha
    w_bar = state.w_bar
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        s = float(np.dot(data[lo:hi], w_bar[indices[lo:hi]]))
        q = 1.0 / params.sigma[i]
        new = dual_prox(s, alpha[i], q, ds.labels[i], spec.gamma)
        delta = new - alpha[i]
        if delta != 0.0:
            state.v_cache[indices[lo:hi]] += (delta / n) * data[lo:hi]
            alpha[i] = new
            state.alpha_bar[i] = new
    core._primal_pass(state, params.tau, spec.lam, params.theta)


def _run_snapshot_variant(ds, spec: ProblemSpec, a: int, cfg: VariantConfig,
                          budget: Budget, rng: np.random.Generator,
                          restrict_primal: bool, timing: bool = True) -> RunResult:
    """Shared body of the snapshot/acceptance heuristics.

    Outer rounds: one deterministic full sweep, violation recomputation, then
    an inner loop of ceil(n'/a) sampled iterations over the restricted plan.
    Inner iterates are committed only when their duality gap strictly improves
    on the best committed gap, so the committed gap sequence is strictly
    decreasing by construction.  When ``restrict_primal`` is set, inner primal
    updates touch only coordinates with nonzero primal violations.
    """
    n = ds.n
    state = init_state(ds)
    clock = _Clock(timing)
    records: list[TraceRecord] = []
    rec = _checkpoint(records, 0, 0.0, clock, state, ds, spec)
    ref_gap = rec.gap
    converged = ref_gap <= budget.gap_tol
    if a * a <= n:
        outer_params = core.schedule_thm5(ds, spec, build_uniform(n, a))
    else:
        outer_params = core.schedule_thm15(ds, spec, a)
    committed_gaps = [ref_gap]
    counters = {
        "primal_writes": 0,
        "duals_drawn": 0,
        "accepts": 0,
        "inner_rounds": 0,
        "optimal_exit": False,
    }
    draw_log = [] if cfg.record_draws else None
    active_log = [] if cfg.record_draws else None
    plan = params = None
    ckpt = 0
    while not converged and counters["duals_drawn"] / n < budget.max_epochs:
        _full_pass(state, ds, spec, outer_params)
        counters["duals_drawn"] += n
        counters["primal_writes"] += ds.d
        kappa = dual_violations(state.w, state.alpha, ds, spec)
        kappa = np.where(kappa > cfg.violation_tol, kappa, 0.0)
        g_full = primal_objective(state.w, ds, spec) - dual_objective(state.alpha, ds, spec)
        if g_full < ref_gap:
            ref_gap = g_full
            committed_gaps.append(ref_gap)
        if ref_gap <= budget.gap_tol:
            converged = True
            break
        try:
            plan = build_restricted(kappa, a)
        except ZeroViolations:
            counters["optimal_exit"] = True
            break
        params = _restricted_schedule(ds, spec, plan, a)
        primal_coords = None
        if restrict_primal:
            psi = primal_violations(state.w, state.alpha, ds, spec)
            psi = np.where(psi > cfg.violation_tol, psi, 0.0)
            primal_coords = np.flatnonzero(psi != 0.0)
        n_active = plan.active.size
        inner_len = math.ceil(n_active / a)
        counters.setdefault("active_sizes", []).append(n_active)
        counters.setdefault("inner_lengths", []).append(inner_len)
        inner = state.copy()
        accepted = None
        for u in range(1, inner_len + 1):
            adaspdc_step(inner, params, plan, ds, spec, a, rng,
                         primal_coords=primal_coords)
            if draw_log is not None:
                draw_log.append(inner.last_draws.copy())
                active_log.append(plan.active.copy())
            counters["duals_drawn"] += a
            counters["primal_writes"] += ds.d if primal_coords is None else len(primal_coords)
            check = (cfg.gap_check_every is not None and u % cfg.gap_check_every == 0)
            if check or u == inner_len:
                g = primal_objective(inner.w, ds, spec) - dual_objective(inner.alpha, ds, spec)
                if g < ref_gap:
                    ref_gap = g
                    committed_gaps.append(g)
                    accepted = inner.copy()
                    counters["accepts"] += 1
                    if ref_gap <= budget.gap_tol:
                        break
        if accepted is not None:
            state = accepted
        counters["inner_rounds"] += 1
        ckpt += 1
        rec = _checkpoint(records, ckpt, counters["duals_drawn"] / n, clock, state, ds, spec)
        converged = rec.gap <= budget.gap_tol
    if counters["optimal_exit"] or (converged and records[-1].gap > budget.gap_tol):
        rec = _checkpoint(records, ckpt + 1, counters["duals_drawn"] / n, clock,
                          state, ds, spec)
        converged = rec.gap <= budget.gap_tol or counters["optimal_exit"]
    counters["iterations"] = state.iter
    counters["committed_gaps"] = committed_gaps
    if draw_log is not None:
        counters["draw_log"] = draw_log
        counters["active_log"] = active_log
    return RunResult(state, records, converged or counters["optimal_exit"],
                     counters, params, plan)


def run_ovsspdc_plus(ds, spec: ProblemSpec, a: int, cfg: VariantConfig,
                     budget: Budget, rng: np.random.Generator,
                     timing: bool = True) -> RunResult:
    """Snapshot/acceptance heuristic restricting dual sampling to violated
    coordinates; full primal updates."""
    return _run_snapshot_variant(ds, spec, a, cfg, budget, rng,
                                 restrict_primal=False, timing=timing)


def run_ovsspdc_plusplus(ds, spec: ProblemSpec, a: int, cfg: VariantConfig,
                         budget: Budget, rng: np.random.Generator,
                         timing: bool = True) -> RunResult:
    """Snapshot/acceptance heuristic restricting both dual sampling and inner
    primal updates to coordinates with nonzero violations.

    Requires a separable penalty; the elastic net qualifies.  The dual-image
    cache still tracks every coordinate, so skipped coordinates resume
    seamlessly once their violation reappears.
    """
    return _run_snapshot_variant(ds, spec, a, cfg, budget, rng,
                                 restrict_primal=True, timing=timing)
