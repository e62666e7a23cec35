"""Alternating minimax training of feature filters.

The filter u is scored by the tradeoff objective

    Phi(u) = sum_i kappa_i * Phi_priv_i(u)
             - rho * sum_j omega_j * Phi_util_j(u)

where Phi_priv_i(u) = -min_v f_i(u, v) is the negated best-response risk
of an adversary head on a private task, and Phi_util_j likewise for a
utility head on a target task.  Minimizing Phi drives every adversary's
best achievable risk up while keeping the utility heads' risks low.

Because each inner problem is strongly convex (ridge terms), the inner
minimizers are unique and Phi is differentiable with

    grad Phi(u) = -[ sum_i kappa_i grad_u f_i(u, v_i*)
                     - rho sum_j omega_j grad_u f_j(u, w_j*) ]

so the bracketed quantity is a descent direction once the heads are fit
to optimality.  Training alternates exact head refits with a backtracking
line search along that direction; every line-search probe refits all
heads, so recorded objective values are true Phi evaluations and the
accepted sequence decreases monotonically.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import heads as heads_mod
from .errors import DataError, ShapeError
from .filters import FilterState, apply_filter, filter_param_grad

TASK_SOFTMAX = "softmax"
TASK_LEAST_SQUARES = "least_squares"
TASK_RECONSTRUCTION = "reconstruction"
_TASK_KINDS = (TASK_SOFTMAX, TASK_LEAST_SQUARES, TASK_RECONSTRUCTION)


@dataclass(frozen=True)
class TaskSpec:
    """One inner problem: which head family, which labels, which ridge."""

    kind: str
    label_field: str = "y"   # "y" (private labels) or "z" (target labels)
    reg_lambda: float = 1e-6
    fit_intercept: bool = False  # least-squares and reconstruction heads only

    def __post_init__(self):
        if self.kind not in _TASK_KINDS:
            raise DataError(f"unknown task kind {self.kind!r}")
        if self.kind != TASK_RECONSTRUCTION and self.label_field not in ("y", "z"):
            raise DataError("label_field must be 'y' or 'z'")
        if self.reg_lambda < 0:
            raise DataError("reg_lambda must be non-negative")


def softmax_task(label_field="y", reg_lambda=1e-6) -> TaskSpec:
    return TaskSpec(TASK_SOFTMAX, label_field, reg_lambda)


def least_squares_task(label_field="y", reg_lambda=0.0,
                       fit_intercept=False) -> TaskSpec:
    return TaskSpec(TASK_LEAST_SQUARES, label_field, reg_lambda, fit_intercept)


def reconstruction_task(reg_lambda=0.0, fit_intercept=True) -> TaskSpec:
    return TaskSpec(TASK_RECONSTRUCTION, "y", reg_lambda, fit_intercept)


@dataclass(frozen=True)
class LineSearchConfig:
    initial_step: float = 1.0
    shrink: float = 0.5
    max_backtracks: int = 30
    sufficient_decrease: float = 1e-4

    def __post_init__(self):
        if self.initial_step <= 0 or not 0 < self.shrink < 1:
            raise DataError("line search needs initial_step > 0 and 0 < shrink < 1")
        if self.max_backtracks < 0 or self.sufficient_decrease <= 0:
            raise DataError("line search constants must be positive")


@dataclass(frozen=True)
class TradeoffConfig:
    """Weights, task lists, and optimizer settings for minimax training."""

    utility_weight: float = 10.0
    private_tasks: tuple = ((TaskSpec(TASK_SOFTMAX, "y"), 1.0),)
    utility_tasks: tuple = ((TaskSpec(TASK_SOFTMAX, "z"), 1.0),)
    max_iter: int = 200
    line_search: LineSearchConfig = LineSearchConfig()
    convergence_tol: float = 1e-6
    slow_iterations: int = 3  # consecutive small decreases that count as converged
    inner_tol: float = 1e-8
    inner_max_iter: int = 500

    def __post_init__(self):
        if self.utility_weight <= 0:
            raise DataError("utility_weight must be positive")
        if not self.private_tasks:
            raise DataError("at least one private task is required")
        for task, weight in (*self.private_tasks, *self.utility_tasks):
            if not isinstance(task, TaskSpec):
                raise DataError("tasks must be TaskSpec instances")
            if weight <= 0:
                raise DataError("task weights must be positive")
        if self.max_iter < 1:
            raise DataError("max_iter must be at least 1")
        if self.convergence_tol <= 0 or self.inner_tol <= 0:
            raise DataError("tolerances must be positive")
        if self.slow_iterations < 1 or self.inner_max_iter < 1:
            raise DataError("iteration limits must be at least 1")


def classification_tradeoff(utility_weight=10.0, reg_lambda=1e-6,
                            **kwargs) -> TradeoffConfig:
    """Standard setup: softmax adversary on y, softmax utility head on z."""
    return TradeoffConfig(
        utility_weight=utility_weight,
        private_tasks=((softmax_task("y", reg_lambda), 1.0),),
        utility_tasks=((softmax_task("z", reg_lambda), 1.0),),
        **kwargs,
    )


def least_squares_tradeoff(utility_weight=10.0, reg_lambda=0.0,
                           **kwargs) -> TradeoffConfig:
    """Least-squares heads on one-hot labels for both tasks."""
    return TradeoffConfig(
        utility_weight=utility_weight,
        private_tasks=((least_squares_task("y", reg_lambda), 1.0),),
        utility_tasks=((least_squares_task("z", reg_lambda), 1.0),),
        **kwargs,
    )


@dataclass(frozen=True)
class FittedHeads:
    """Best-response heads for every task at one filter state."""

    private: tuple
    utility: tuple
    inner_iterations: int = 0


def _task_labels(task: TaskSpec, data):
    labels = getattr(data, task.label_field, None)
    if labels is None:
        raise DataError(f"data has no '{task.label_field}' labels but a task needs them")
    return np.asarray(labels)


def _fit_task(task: TaskSpec, G, data, cfg: TradeoffConfig, warm):
    """Fit one head to inner optimality; return (head, risk, iterations)."""
    if task.kind == TASK_SOFTMAX:
        labels = _task_labels(task, data)
        num_classes = int(labels.max())
        head, nit = heads_mod.fit_softmax_with_info(
            G, labels, num_classes, task.reg_lambda,
            tol=cfg.inner_tol, max_iter=cfg.inner_max_iter, init=warm)
        risk, _, _ = heads_mod.softmax_risk(head, G, labels)
        return head, risk, nit
    if task.kind == TASK_LEAST_SQUARES:
        labels = _task_labels(task, data)
        target = heads_mod.one_hot(labels, int(labels.max()))
    else:
        target = np.asarray(data.X, dtype=np.float64)
    head = heads_mod.fit_reconstruction(G, target, task.reg_lambda,
                                        task.fit_intercept)
    risk, _, _ = heads_mod.reconstruction_risk(head, G, target)
    return head, risk, 1


def _task_risk_and_feature_grad(task: TaskSpec, head, G, data):
    if task.kind == TASK_SOFTMAX:
        labels = _task_labels(task, data)
        risk, _, grad_features = heads_mod.softmax_risk(head, G, labels)
        return risk, grad_features
    if task.kind == TASK_LEAST_SQUARES:
        labels = _task_labels(task, data)
        target = heads_mod.one_hot(labels, head.weights.shape[1])
    else:
        target = np.asarray(data.X, dtype=np.float64)
    risk, _, grad_features = heads_mod.reconstruction_risk(head, G, target)
    return risk, grad_features


def joint_objective(state: FilterState, data, cfg: TradeoffConfig, warm=None):
    """Fit all heads at ``state`` and evaluate the tradeoff objective.

    Returns (objective, privacy_value, utility_value, fitted_heads) where
    privacy_value = sum_i kappa_i * (-best private risk_i) and
    utility_value = sum_j omega_j * (-best utility risk_j).
    """
    G = apply_filter(state, data.X)
    privacy_value = 0.0
    utility_value = 0.0
    iterations = 0
    private_heads = []
    for i, (task, weight) in enumerate(cfg.private_tasks):
        warm_head = warm.private[i] if warm is not None else None
        head, risk, nit = _fit_task(task, G, data, cfg, warm_head)
        private_heads.append(head)
        privacy_value += weight * (-risk)
        iterations += nit
    utility_heads = []
    for j, (task, weight) in enumerate(cfg.utility_tasks):
        warm_head = warm.utility[j] if warm is not None else None
        head, risk, nit = _fit_task(task, G, data, cfg, warm_head)
        utility_heads.append(head)
        utility_value += weight * (-risk)
        iterations += nit
    objective = privacy_value - cfg.utility_weight * utility_value
    fitted = FittedHeads(tuple(private_heads), tuple(utility_heads), iterations)
    return objective, privacy_value, utility_value, fitted


def evaluate_objective(state: FilterState, fitted: FittedHeads, data,
                       cfg: TradeoffConfig):
    """The tradeoff objective at fixed heads (no refit).

    Useful for scoring held-out data with the heads fit on training data.
    """
    G = apply_filter(state, data.X)
    privacy_value = 0.0
    for (task, weight), head in zip(cfg.private_tasks, fitted.private):
        risk, _ = _task_risk_and_feature_grad(task, head, G, data)
        privacy_value += weight * (-risk)
    utility_value = 0.0
    for (task, weight), head in zip(cfg.utility_tasks, fitted.utility):
        risk, _ = _task_risk_and_feature_grad(task, head, G, data)
        utility_value += weight * (-risk)
    return privacy_value - cfg.utility_weight * utility_value, privacy_value, utility_value


def descent_direction(state: FilterState, fitted: FittedHeads, data,
                      cfg: TradeoffConfig) -> np.ndarray:
    """The negated objective gradient at ``state`` given best-response heads.

    q = sum_i kappa_i grad_u f_priv_i - rho sum_j omega_j grad_u f_util_j,
    assembled as one vector-Jacobian product through the filter.
    """
    G = apply_filter(state, data.X)
    upstream = np.zeros_like(G)
    for (task, weight), head in zip(cfg.private_tasks, fitted.private):
        _, grad_features = _task_risk_and_feature_grad(task, head, G, data)
        upstream += weight * grad_features
    for (task, weight), head in zip(cfg.utility_tasks, fitted.utility):
        _, grad_features = _task_risk_and_feature_grad(task, head, G, data)
        upstream -= cfg.utility_weight * weight * grad_features
    return filter_param_grad(state, data.X, upstream)


@dataclass(frozen=True)
class IterationRecord:
    """State after ``iteration`` accepted steps.

    ``objective`` and ``grad_norm`` are measured at the recorded iterate;
    ``step_size`` is the accepted step that produced it (0 for the initial
    record) and ``inner_iterations`` counts head-solver iterations spent
    during that outer step, line-search probes included.
    """

    iteration: int
    objective: float
    privacy_value: float
    utility_value: float
    step_size: float
    inner_iterations: int
    grad_norm: float


@dataclass(frozen=True)
class TrainReport:
    records: tuple
    final_state: FilterState
    converged: bool

    @property
    def iterations(self) -> int:
        return self.records[-1].iteration

    @property
    def final_objective(self) -> float:
        return self.records[-1].objective


def save_report(report: TrainReport, path) -> None:
    """One JSON object per iteration record, for convergence plotting."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in report.records:
            fh.write(json.dumps(asdict(record), sort_keys=True))
            fh.write("\n")


def load_report_records(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(IterationRecord(**json.loads(line)))
    return tuple(records)


def train_minimax(init: FilterState, data, cfg: TradeoffConfig) -> TrainReport:
    """Alternating descent on the tradeoff objective from ``init``.

    Deterministic given the initial state.  Each iteration fits all heads,
    takes the steepest-descent direction, and backtracks until the
    objective strictly decreases by the Armijo margin; the run stops after
    ``cfg.slow_iterations`` consecutive decreases below
    ``cfg.convergence_tol`` (converged), when the line search stalls, or
    at ``cfg.max_iter``.
    """
    X = np.asarray(data.X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != init.input_dim:
        raise ShapeError("initial filter does not match the data dimension")
    ls = cfg.line_search
    state = init
    objective, privacy_value, utility_value, fitted = joint_objective(state, data, cfg)
    direction = descent_direction(state, fitted, data, cfg)
    records = [IterationRecord(0, objective, privacy_value, utility_value,
                               0.0, fitted.inner_iterations,
                               float(np.linalg.norm(direction)))]
    converged = False
    slow_count = 0
    for iteration in range(1, cfg.max_iter + 1):
        grad_norm_sq = float(direction @ direction)
        accepted = None
        step = ls.initial_step
        inner_used = 0
        for _ in range(ls.max_backtracks + 1):
            trial = state.with_params(state.params + step * direction)
            trial_values = joint_objective(trial, data, cfg, warm=fitted)
            inner_used += trial_values[3].inner_iterations
            if trial_values[0] < objective - ls.sufficient_decrease * step * grad_norm_sq:
                accepted = (trial, step, trial_values)
                break
            step *= ls.shrink
        if accepted is None:
            # No productive step along the gradient; at (or numerically
            # indistinguishable from) a stationary point.
            break
        state, step, (trial_objective, privacy_value, utility_value, fitted) = (
            accepted[0], accepted[1], accepted[2])
        decrease = objective - trial_objective
        objective = trial_objective
        direction = descent_direction(state, fitted, data, cfg)
        records.append(IterationRecord(iteration, objective, privacy_value,
                                       utility_value, step, inner_used,
                                       float(np.linalg.norm(direction))))
        if decrease < cfg.convergence_tol:
            slow_count += 1
            if slow_count >= cfg.slow_iterations:
                converged = True
                break
        else:
            slow_count = 0
    return TrainReport(tuple(records), state, converged)
