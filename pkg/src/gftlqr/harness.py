"""Scenario set, closed-loop simulation, costs, baseline search, training and robustness.

Case cost: ``T_s + IAC_1 / tau1_max + IAC_2 / tau2_max``, where an unsettled
run is charged ``t_max`` plus a fixed penalty.  Training minimizes the mean
over cases of the cost relative to the cached per-case optimal static LQR.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numba
import numpy as np

from gftlqr import _simkernel as sk
from gftlqr import evo
from gftlqr.dyn2r import CoriolisVariant, ManipulatorParams, State4, linearize, rk4_step
from gftlqr.gft import GftController
from gftlqr.riccati import (
    GainMatrix, LqrWeights, NoStabilizingSolution, feedback_torque, lqr, lqr_gain, solve_care,
)

UNSETTLED_PENALTY = 10.0
REFERENCE_WEIGHTS = LqrWeights((100.0, 100.0, 10.0, 10.0))


class MissingBaseline(KeyError):
    """A case has no cached optimal static-LQR cost."""

    def __init__(self, case_ids):
        self.case_ids = sorted(int(c) for c in case_ids)
        super().__init__(f"no cached baseline for case ids {self.case_ids}")

    def __str__(self):
        return self.args[0]


@dataclass(frozen=True)
class ScenarioCase:
    id: int
    initial: State4
    target: State4

    def label(self) -> str:
        deg = [round(math.degrees(v)) for v in (self.initial.theta1, self.initial.theta2,
                                                self.target.theta1, self.target.theta2)]
        return f"({deg[0]},{deg[1]})->({deg[2]},{deg[3]})"


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.0167
    t_max: float = 10.0
    settle_tol: float = 0.02
    saturate: bool = True
    variant: CoriolisVariant = CoriolisVariant.PAPER_VERBATIM
    unsettled_penalty: float = UNSETTLED_PENALTY

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not self.t_max >= self.dt:
            raise ValueError("t_max must be >= dt")
        if not self.settle_tol > 0:
            raise ValueError("settle_tol must be > 0")
        if self.unsettled_penalty < 0:
            raise ValueError("unsettled_penalty must be >= 0")
        object.__setattr__(self, "variant", CoriolisVariant(self.variant))

    @property
    def n_max(self) -> int:
        return int(math.floor(self.t_max / self.dt + 1e-9))

    def to_dict(self) -> dict:
        return {
            "dt": self.dt, "t_max": self.t_max, "settle_tol": self.settle_tol,
            "saturate": self.saturate, "variant": self.variant.name.lower(),
            "unsettled_penalty": self.unsettled_penalty,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimConfig":
        d = dict(d)
        if "variant" in d and isinstance(d["variant"], str):
            d["variant"] = CoriolisVariant[d["variant"].upper()]
        return cls(**d)


@dataclass(frozen=True, eq=False)
class SimResult:
    settled: bool
    settle_time: float
    iac: np.ndarray
    control_variance: np.ndarray
    n_steps: int
    failed: bool = False
    times: Optional[np.ndarray] = None
    states: Optional[np.ndarray] = None  # (n_steps + 1, 4)
    torques: Optional[np.ndarray] = None  # (n_steps, 2), torque held over each step


@dataclass(frozen=True, eq=False)
class StaticLqrController:
    """Fixed gain ``K`` from one linearization; ``tau = sat(-K (x - x_t))``."""

    gain: GainMatrix
    params: ManipulatorParams = field(default_factory=ManipulatorParams.nominal)
    saturate: bool = True
    weights: Optional[LqrWeights] = None

    @classmethod
    def at_target(cls, weights: LqrWeights, target: State4, params: ManipulatorParams,
                  saturate: bool = True,
                  variant: CoriolisVariant = CoriolisVariant.PAPER_VERBATIM) -> "StaticLqrController":
        A, B = linearize(params, (target.theta1, target.theta2), variant)
        return cls(lqr(A, B, weights), params, saturate, weights)

    def __call__(self, state, target) -> np.ndarray:
        return feedback_torque(self.gain, state, target, self.params.tau_max, self.saturate)


@dataclass(frozen=True)
class ScheduledLqrController:
    """Fixed Q and R, re-linearized and re-solved at every step (pure Python).

    This is the static-weight special case of the fuzzy tree, built directly
    on the Riccati module.
    """

    weights: LqrWeights
    params: ManipulatorParams = field(default_factory=ManipulatorParams.nominal)
    saturate: bool = True
    variant: CoriolisVariant = CoriolisVariant.PAPER_VERBATIM

    def __call__(self, state, target) -> np.ndarray:
        x = state.as_array() if isinstance(state, State4) else np.asarray(state, dtype=float)
        A, B = linearize(self.params, x[:2], self.variant)
        P = solve_care(A, B, self.weights.Q, self.weights.R)
        K = lqr_gain(P, B, self.weights.R)
        return feedback_torque(K, x, target, self.params.tau_max, self.saturate)


# ---------------------------------------------------------------------------
# scenarios

THETA1_TARGETS_DEG = (0, 45, 90, 135, 180)
THETA2_TARGETS_DEG = tuple(range(-180, 181, 45))
INITIAL_CONDITIONS_DEG = ((0, 0), (180, 0))
# two initial conditions x four spread targets, including the (180,0)->(90,45) case
DESK_SUBSET_DEG = (
    ((0, 0), (45, 90)), ((0, 0), (90, -45)), ((0, 0), (135, 180)), ((0, 0), (180, -90)),
    ((180, 0), (0, -90)), ((180, 0), (45, -135)), ((180, 0), (90, 45)), ((180, 0), (135, 135)),
)
FIG4_CASE_DEG = ((180, 0), (90, 45))


def build_scenarios() -> list[ScenarioCase]:
    """88 rest-to-rest cases, 44 per initial condition, ids 0..87."""
    cases = []
    for ic in INITIAL_CONDITIONS_DEG:
        for t1 in THETA1_TARGETS_DEG:
            for t2 in THETA2_TARGETS_DEG:
                if (t1, t2) == ic:
                    continue
                cases.append(ScenarioCase(len(cases), State4.from_degrees(*ic),
                                          State4.from_degrees(t1, t2)))
    return cases


def find_case(initial_deg, target_deg, scenarios: Optional[Sequence[ScenarioCase]] = None) -> ScenarioCase:
    scenarios = scenarios if scenarios is not None else build_scenarios()
    want = (State4.from_degrees(*initial_deg), State4.from_degrees(*target_deg))
    for c in scenarios:
        if (c.initial, c.target) == want:
            return c
    raise KeyError(f"no scenario {initial_deg}->{target_deg}")


def desk_subset(scenarios: Optional[Sequence[ScenarioCase]] = None) -> list[ScenarioCase]:
    scenarios = scenarios if scenarios is not None else build_scenarios()
    return [find_case(ic, tg, scenarios) for ic, tg in DESK_SUBSET_DEG]


def select_cases(ids: Iterable[int], scenarios: Optional[Sequence[ScenarioCase]] = None) -> list[ScenarioCase]:
    scenarios = scenarios if scenarios is not None else build_scenarios()
    by_id = {c.id: c for c in scenarios}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise KeyError(f"unknown case ids {missing}; valid ids are 0..{len(scenarios) - 1}")
    return [by_id[i] for i in ids]


# ---------------------------------------------------------------------------
# simulation

def set_threads():
    n = min(evo.worker_count(), numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(max(1, n))


def _result_from_summary(row, sim_cfg: SimConfig, traj=None) -> SimResult:
    status, n = int(row[0]), int(row[1])
    settled = status == sk.STATUS_SETTLED
    kwargs = {}
    if traj is not None:
        xs, taus = traj
        kwargs = dict(times=np.arange(n + 1) * sim_cfg.dt, states=xs[: n + 1].copy(),
                      torques=taus[:n].copy())
    return SimResult(
        settled=settled,
        settle_time=n * sim_cfg.dt if settled else sim_cfg.t_max,
        iac=np.array(row[2:4]),
        control_variance=np.array(row[4:6]),
        n_steps=n,
        failed=status == sk.STATUS_FAILED,
        **kwargs,
    )


def _gft_arrays(controllers: Sequence[GftController]):
    first = controllers[0]
    n_bid, n_q, _, _, _, e_max, edot_max, r_value = first.kernel_args()
    packed = [c.kernel_args() for c in controllers]
    for a in packed:
        if (a[0], a[1], a[5], a[6], a[7]) != (n_bid, n_q, e_max, edot_max, r_value):
            raise ValueError("batched fuzzy controllers must share partitions and scales")
    return (n_bid, n_q,
            np.stack([a[2] for a in packed]), np.stack([a[3] for a in packed]),
            np.stack([a[4] for a in packed]), e_max, edot_max, r_value)


_EMPTY_GFT = (3, 7, np.zeros((1, 2, 9)), np.zeros((1, 4, 49)), np.ones((1, 4, 2)),
              math.pi, math.pi, 1e-4)


def _kernel_controller(controller):
    if isinstance(controller, StaticLqrController):
        n_bid, n_q, bc, qc, qb, e_max, edot_max, r_value = _EMPTY_GFT
        return (sk.MODE_STATIC, controller.gain.K, (n_bid, n_q, bc[0], qc[0], qb[0], e_max, edot_max, r_value),
                controller.params, controller.saturate, 0)
    if isinstance(controller, GftController):
        n_bid, n_q, bc, qc, qb, e_max, edot_max, r_value = controller.kernel_args()
        return (sk.MODE_GFT, np.zeros((2, 4)), (n_bid, n_q, bc, qc, qb, e_max, edot_max, r_value),
                controller.params, controller.saturate, int(controller.variant))
    return None


def simulate_case(controller, case: ScenarioCase, params: ManipulatorParams,
                  sim_cfg: SimConfig = SimConfig(), record: bool = True,
                  compiled: bool = True) -> SimResult:
    """Closed-loop run of ``controller`` on the plant ``params``.

    Any callable ``(state, target) -> torque`` is accepted; the two built-in
    controller types run in compiled code unless ``compiled`` is False.  The
    plant may differ from the controller's internal model.
    """
    x0 = case.initial.as_array()
    xt = case.target.as_array()
    kc = _kernel_controller(controller) if compiled else None
    if kc is not None:
        mode, K, g, model, saturate, model_variant = kc
        n_bid, n_q, bc, qc, qb, e_max, edot_max, r_value = g
        n_max = sim_cfg.n_max
        traj_x = np.zeros((n_max + 1, 4) if record else (1, 4))
        traj_tau = np.zeros((max(n_max, 1), 2) if record else (1, 2))
        out = np.empty(6)
        sk.simulate(mode, np.ascontiguousarray(K), model.as_array(), model_variant, n_bid, n_q,
                    np.ascontiguousarray(bc), np.ascontiguousarray(qc), np.ascontiguousarray(qb),
                    e_max, edot_max, r_value, params.as_array(), int(sim_cfg.variant),
                    params.tau_max_array(), bool(saturate and sim_cfg.saturate),
                    x0, xt, sim_cfg.dt, sim_cfg.n_max, sim_cfg.settle_tol,
                    record, traj_x, traj_tau, out)
        return _result_from_summary(out, sim_cfg, (traj_x, traj_tau) if record else None)
    return _simulate_python(controller, x0, xt, params, sim_cfg, record)


def _simulate_python(controller, x0, xt, params, sim_cfg, record) -> SimResult:
    tol = sim_cfg.settle_tol
    x = x0.copy()
    states = [x.copy()]
    torques = []
    failed = False
    settled = bool(np.all(np.abs(x - xt) <= tol))
    n = 0
    while not settled and n < sim_cfg.n_max:
        try:
            tau = np.asarray(controller(x, xt), dtype=np.float64)
        except NoStabilizingSolution:
            failed = True
            break
        if sim_cfg.saturate:
            tau = np.clip(tau, -params.tau_max_array(), params.tau_max_array())
        x = rk4_step(params, x, tau, sim_cfg.dt, sim_cfg.variant)
        n += 1
        torques.append(tau)
        states.append(x.copy())
        if not np.all(np.isfinite(x)):
            failed = True
            break
        settled = bool(np.all(np.abs(x - xt) <= tol))
    torques = np.array(torques).reshape(-1, 2)
    iac = np.abs(torques).sum(axis=0) * sim_cfg.dt
    var = torques.var(axis=0) if n else np.zeros(2)
    extra = {}
    if record:
        extra = dict(times=np.arange(n + 1) * sim_cfg.dt, states=np.array(states), torques=torques)
    return SimResult(settled, n * sim_cfg.dt if settled else sim_cfg.t_max, iac, var, n,
                     failed, **extra)


def case_cost(result: SimResult, params: ManipulatorParams,
              unsettled_penalty: float = UNSETTLED_PENALTY) -> float:
    cost = result.settle_time + result.iac[0] / params.tau_max[0] + result.iac[1] / params.tau_max[1]
    if not result.settled:
        cost += unsettled_penalty
    return float(cost)


def overall_cost(results: Iterable[SimResult], params: ManipulatorParams,
                 unsettled_penalty: float = UNSETTLED_PENALTY) -> float:
    return float(sum(case_cost(r, params, unsettled_penalty) for r in results))


def _summary_costs(out: np.ndarray, params: ManipulatorParams, sim_cfg: SimConfig) -> np.ndarray:
    settled = out[:, 0] == sk.STATUS_SETTLED
    ts = np.where(settled, out[:, 1] * sim_cfg.dt, sim_cfg.t_max)
    cost = ts + out[:, 2] / params.tau_max[0] + out[:, 3] / params.tau_max[1]
    return cost + np.where(settled, 0.0, sim_cfg.unsettled_penalty)


def _run_batch(jobs_mode, ctrl_idx, case_idx, plant_idx, Ks, gft, model: ManipulatorParams,
               model_variant: int, plants: np.ndarray, cases: Sequence[ScenarioCase],
               tau_max: np.ndarray, saturate: bool, sim_cfg: SimConfig) -> np.ndarray:
    set_threads()
    n_bid, n_q, bc, qc, qb, e_max, edot_max, r_value = gft
    x0s = np.array([c.initial.as_array() for c in cases])
    xts = np.array([c.target.as_array() for c in cases])
    return sk.run_jobs(
        np.asarray(jobs_mode, dtype=np.int64), np.asarray(ctrl_idx, dtype=np.int64),
        np.asarray(case_idx, dtype=np.int64), np.asarray(plant_idx, dtype=np.int64),
        np.ascontiguousarray(Ks, dtype=np.float64), model.as_array(), model_variant, n_bid, n_q,
        np.ascontiguousarray(bc), np.ascontiguousarray(qc), np.ascontiguousarray(qb),
        e_max, edot_max, r_value, np.ascontiguousarray(plants, dtype=np.float64),
        int(sim_cfg.variant), tau_max, bool(saturate and sim_cfg.saturate),
        x0s, xts, sim_cfg.dt, sim_cfg.n_max, sim_cfg.settle_tol,
    )


def evaluate_static_gains(Ks: np.ndarray, case: ScenarioCase, params: ManipulatorParams,
                          sim_cfg: SimConfig) -> np.ndarray:
    """Case costs of a batch of static gains (n, 2, 4) on the nominal plant."""
    n = len(Ks)
    out = _run_batch(np.zeros(n), np.arange(n), np.zeros(n), np.zeros(n), Ks, _EMPTY_GFT,
                     params, 0, params.as_array()[None], [case], params.tau_max_array(), True, sim_cfg)
    return _summary_costs(out, params, sim_cfg)


def evaluate_gft_batch(controllers: Sequence[GftController], cases: Sequence[ScenarioCase],
                       params: ManipulatorParams, sim_cfg: SimConfig) -> np.ndarray:
    """Case costs, shape (n_controllers, n_cases), on the plant ``params``."""
    gft = _gft_arrays(controllers)
    nc, nk = len(controllers), len(cases)
    ctrl_idx = np.repeat(np.arange(nc), nk)
    case_idx = np.tile(np.arange(nk), nc)
    model = controllers[0].params
    out = _run_batch(np.ones(nc * nk), ctrl_idx, case_idx, np.zeros(nc * nk), np.zeros((1, 2, 4)),
                     gft, model, int(controllers[0].variant), params.as_array()[None], cases,
                     params.tau_max_array(), controllers[0].saturate, sim_cfg)
    return _summary_costs(out, params, sim_cfg).reshape(nc, nk)


# ---------------------------------------------------------------------------
# baseline

@dataclass(frozen=True, eq=False)
class BaselineResult:
    case_id: int
    weights: LqrWeights
    gain: GainMatrix
    cost: float
    genes: Optional[np.ndarray] = None


def _static_gains(weights_list: Sequence[LqrWeights], target: State4, params: ManipulatorParams,
                  variant: CoriolisVariant) -> tuple[np.ndarray, np.ndarray]:
    A, B = linearize(params, (target.theta1, target.theta2), variant)
    Ks = np.zeros((len(weights_list), 2, 4))
    ok = np.ones(len(weights_list), dtype=bool)
    for i, w in enumerate(weights_list):
        try:
            Ks[i] = lqr(A, B, w).K
        except NoStabilizingSolution:
            ok[i] = False
    return Ks, ok


def static_weights_cost(weights_list: Sequence[LqrWeights], case: ScenarioCase,
                        params: ManipulatorParams, sim_cfg: SimConfig,
                        model_variant: CoriolisVariant = CoriolisVariant.PAPER_VERBATIM) -> np.ndarray:
    Ks, ok = _static_gains(weights_list, case.target, params, model_variant)
    costs = evaluate_static_gains(Ks, case, params, sim_cfg)
    failed = sim_cfg.t_max + sim_cfg.unsettled_penalty
    return np.where(ok, costs, failed)


def optimize_baseline(case: ScenarioCase, params: ManipulatorParams, sim_cfg: SimConfig,
                      ga_cfg: evo.GaConfig,
                      model_variant: CoriolisVariant = CoriolisVariant.PAPER_VERBATIM,
                      report_sink=None) -> BaselineResult:
    """GA search over diagonal Q for the best static gain on one case.

    The fixed reference weights seed the initial population and are also
    scored exactly, so the result never loses to them.
    """

    def batch_cost(pop):
        return static_weights_cost([evo.decode_baseline(g) for g in pop], case, params,
                                   sim_cfg, model_variant)

    best_genes, history = evo.run_ga(
        ga_cfg, batch_cost, report_sink, genome_length=evo.BASELINE_GENOME_LENGTH,
        initial=evo.encode_baseline(REFERENCE_WEIGHTS)[None], vectorized=True,
    )
    best_w = evo.decode_baseline(best_genes)
    best_cost = history[-1].best_cost
    ref_cost = float(static_weights_cost([REFERENCE_WEIGHTS], case, params, sim_cfg, model_variant)[0])
    genes = best_genes
    if ref_cost < best_cost:
        best_w, best_cost, genes = REFERENCE_WEIGHTS, ref_cost, None
    ctrl = StaticLqrController.at_target(best_w, case.target, params, True, model_variant)
    return BaselineResult(case.id, best_w, ctrl.gain, float(best_cost), genes)


def baseline_controller(entry: BaselineResult, params: ManipulatorParams) -> StaticLqrController:
    return StaticLqrController(entry.gain, params, True, entry.weights)


# ---------------------------------------------------------------------------
# relative cost and training

def relative_cost(result: SimResult, baseline_cost: Optional[float], params: ManipulatorParams,
                  unsettled_penalty: float = UNSETTLED_PENALTY, case_id: Optional[int] = None) -> float:
    if baseline_cost is None:
        raise MissingBaseline([case_id if case_id is not None else -1])
    if not baseline_cost > 0:
        raise ValueError("baseline cost must be positive")
    return case_cost(result, params, unsettled_penalty) / baseline_cost


def baseline_costs_for(cases: Sequence[ScenarioCase], baselines: Mapping[int, float]) -> np.ndarray:
    missing = [c.id for c in cases if c.id not in baselines]
    if missing:
        raise MissingBaseline(missing)
    return np.array([float(baselines[c.id]) for c in cases])


def static_seed_population(cases: Sequence[ScenarioCase], store,
                           sliding_bids: bool = False) -> np.ndarray:
    """Constant-Q chromosomes reproducing each case's optimal static weights.

    ``store`` maps case id to a BaselineResult (or has a ``records`` mapping).
    """
    records = getattr(store, "records", store)
    rows = []
    for c in cases:
        if c.id in records:
            row = evo.encode_static_gft(records[c.id].weights.q, sliding_bids=sliding_bids)
            if not any(np.array_equal(row, r) for r in rows):
                rows.append(row)
    return np.array(rows, dtype=np.int64).reshape(-1, evo.GFT_GENOME_LENGTH)


def warm_start_population(cases: Sequence[ScenarioCase], store, size: int, seed: int,
                          sliding_bids: bool = False) -> np.ndarray:
    """Initial GFT population built around the cached static optima.

    The first rows are the constant-Q seeds from ``static_seed_population``.
    The rest cycle through those seeds, keep their output-bound genes and
    draw every rule consequent uniformly, so the population starts diverse
    but with Q gains in a workable range.
    """
    seeds = static_seed_population(cases, store, sliding_bids)
    if len(seeds) == 0:
        return seeds
    seeds = seeds[:size]
    n_rules = evo.N_BID_GENES + evo.N_QCONS_GENES
    rng = np.random.default_rng([seed, len(seeds), size])
    rows = seeds[np.arange(size) % len(seeds)].copy()
    rows[len(seeds):, :n_rules] = rng.integers(0, evo.GENE_MAX + 1, size=(size - len(seeds), n_rules))
    return rows


@dataclass(frozen=True, eq=False)
class TrainResult:
    controller: GftController
    genes: np.ndarray
    history: list
    case_costs: np.ndarray
    relative_costs: np.ndarray

    @property
    def mean_relative_cost(self) -> float:
        return float(np.mean(self.relative_costs))


def train_gft(scenarios: Sequence[ScenarioCase], params: ManipulatorParams, sim_cfg: SimConfig,
              ga_cfg: evo.GaConfig, baselines: Mapping[int, float], report_sink=None,
              initial: Optional[np.ndarray] = None, **controller_kwargs) -> TrainResult:
    """Evolve the fuzzy tree against the cached baseline costs.

    Fitness is the mean over ``scenarios`` of case cost / baseline cost.
    """
    base = baseline_costs_for(scenarios, baselines)
    controller_kwargs.setdefault("params", params)

    def batch_cost(pop):
        ctrls = [evo.decode_gft(g, **controller_kwargs) for g in pop]
        costs = evaluate_gft_batch(ctrls, scenarios, params, sim_cfg)
        return np.mean(costs / base, axis=1)

    best_genes, history = evo.run_ga(ga_cfg, batch_cost, report_sink,
                                     genome_length=evo.GFT_GENOME_LENGTH,
                                     initial=initial, vectorized=True)
    ctrl = evo.decode_gft(best_genes, **controller_kwargs)
    costs = evaluate_gft_batch([ctrl], scenarios, params, sim_cfg)[0]
    return TrainResult(ctrl, best_genes, history, costs, costs / base)


# ---------------------------------------------------------------------------
# robustness

ROBUSTNESS_METRICS = ("settle_time", "iac1", "iac2", "var1", "var2")


@dataclass(frozen=True, eq=False)
class RobustnessReport:
    """Per-draw table plus success rates and mutual-success statistics.

    ``draws`` columns: case_id, draw, m1_scale, m2_scale, l1_scale, l2_scale,
    then for each controller (a, b): settled, settle_time, iac1, iac2, var1, var2.
    """

    names: tuple[str, str]
    draws: np.ndarray
    width: float
    seed: int

    @property
    def n_draws(self) -> int:
        return len(self.draws)

    def _block(self, which: int) -> np.ndarray:
        start = 6 + 6 * which
        return self.draws[:, start:start + 6]

    def success_rate(self, which: int) -> float:
        return float(np.mean(self._block(which)[:, 0])) if self.n_draws else float("nan")

    @property
    def mutual(self) -> np.ndarray:
        return (self._block(0)[:, 0] == 1) & (self._block(1)[:, 0] == 1)

    def metric(self, which: int, name: str, mutual_only: bool = True) -> np.ndarray:
        col = self._block(which)[:, 1 + ROBUSTNESS_METRICS.index(name)]
        return col[self.mutual] if mutual_only else col

    def summary(self) -> dict:
        out = {
            "n_draws": self.n_draws,
            "n_mutual": int(self.mutual.sum()),
            "perturbation_width": self.width,
            "seed": self.seed,
            "controllers": {},
        }
        for w, name in enumerate(self.names):
            stats = {}
            for m in ROBUSTNESS_METRICS:
                v = self.metric(w, m)
                if len(v):
                    stats[m] = {
                        "mean": float(np.mean(v)), "std": float(np.std(v)),
                        "min": float(np.min(v)), "p05": float(np.percentile(v, 5)),
                        "median": float(np.median(v)), "p95": float(np.percentile(v, 95)),
                        "max": float(np.max(v)),
                    }
                else:
                    stats[m] = None
            out["controllers"][name] = {"success_rate": self.success_rate(w), "mutual_stats": stats}
        return out


def perturbation_factors(seed: int, case_id: int, draw: int, width: float) -> np.ndarray:
    """(m1, m2, l1, l2) scale factors, each Uniform[1 - width, 1 + width]."""
    u = np.random.default_rng([seed, case_id, draw]).random(4)
    return 1.0 + width * (2.0 * u - 1.0)


def robustness_mc(controller_a, controller_b, scenarios: Sequence[ScenarioCase], n_per_case: int,
                  seed: int, params: ManipulatorParams = ManipulatorParams.nominal(),
                  sim_cfg: SimConfig = SimConfig(), width: float = 0.1,
                  names: tuple[str, str] = ("gft", "lqr")) -> RobustnessReport:
    """Run both controllers on identically perturbed plants.

    A controller argument is either one controller used for every case or a
    mapping from case id to controller (the per-case static baselines).  The
    controllers keep their own nominal models; only the simulated plant is
    perturbed.
    """
    if n_per_case < 1:
        raise ValueError("n_per_case must be >= 1")
    if not 0.0 <= width < 1.0:
        raise ValueError("width must lie in [0, 1)")

    def pick(ctrl, case):
        return ctrl[case.id] if isinstance(ctrl, Mapping) else ctrl

    rows = []
    plants = []
    for case in scenarios:
        for d in range(n_per_case):
            f = perturbation_factors(seed, case.id, d, width)
            plants.append(params.perturbed(f[:2], f[2:]))
            rows.append([case.id, d, *f])
    rows = np.array(rows, dtype=np.float64).reshape(-1, 6)

    blocks = []
    for ctrl in (controller_a, controller_b):
        per_job = [pick(ctrl, case) for case in scenarios for _ in range(n_per_case)]
        blocks.append(_run_plants(per_job, scenarios, n_per_case, plants, params, sim_cfg))
    return RobustnessReport(tuple(names), np.hstack([rows] + blocks), float(width), int(seed))


def _run_plants(ctrls, scenarios, n_per_case, plants, params, sim_cfg) -> np.ndarray:
    n = len(ctrls)
    case_idx = np.repeat(np.arange(len(scenarios)), n_per_case)
    plant_arr = np.array([p.as_array() for p in plants])
    if all(isinstance(c, StaticLqrController) for c in ctrls):
        Ks = np.array([c.gain.K for c in ctrls])
        sat = ctrls[0].saturate
        out = _run_batch(np.zeros(n), np.arange(n), case_idx, np.arange(n), Ks, _EMPTY_GFT,
                         params, 0, plant_arr, scenarios, params.tau_max_array(), sat, sim_cfg)
    elif all(isinstance(c, GftController) for c in ctrls):
        uniq = []
        idx = []
        for c in ctrls:
            for i, u in enumerate(uniq):
                if u is c:
                    idx.append(i)
                    break
            else:
                uniq.append(c)
                idx.append(len(uniq) - 1)
        out = _run_batch(np.ones(n), idx, case_idx, np.arange(n), np.zeros((1, 2, 4)),
                         _gft_arrays(uniq), uniq[0].params, int(uniq[0].variant), plant_arr,
                         scenarios, params.tau_max_array(), uniq[0].saturate, sim_cfg)
    else:
        out = np.array([
            _summary_row(simulate_case(c, scenarios[case_idx[j]], plants[j], sim_cfg, record=False))
            for j, c in enumerate(ctrls)
        ])
    settled = (out[:, 0] == sk.STATUS_SETTLED).astype(float)
    ts = np.where(settled == 1, out[:, 1] * sim_cfg.dt, sim_cfg.t_max)
    return np.column_stack([settled, ts, out[:, 2:6]])


def _summary_row(r: SimResult) -> np.ndarray:
    status = sk.STATUS_SETTLED if r.settled else (sk.STATUS_FAILED if r.failed else sk.STATUS_TIMEOUT)
    return np.array([status, r.n_steps, *r.iac, *r.control_variance], dtype=float)
