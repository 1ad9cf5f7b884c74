"""Recover shape coefficients from attribute and measurement targets.

The energy is a weighted sum of squared residuals on attribute scores,
height, and the three circumferences, plus an L2 prior on beta. All terms are
differentiable in beta (measurements analytically, attribute predictions
through the polynomial mapper), so the fitter runs first-order descent:
Gauss-Newton by default, with plain gradient descent and an Adam-style rule
as alternatives. With backtracking enabled the accepted loss sequence is
non-increasing; circumference non-smooth points (hull combinatorics changes)
are treated as subgradients and halve the trial step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, InvalidValueError, ToolkitError
from .mappers import PolyMapper, apply_mapper, mapper_jacobian, variant_input_rows
from .measurements import selected_measurements
from .model import BodyModel

DEFAULT_WEIGHTS = {"attributes": 1.0, "height": 1.0, "circumference": 1.0,
                   "regularizer": 1e-4}
DEFAULT_MAX_ITERS = 200
DEFAULT_TOL = 1e-10

CIRC_FIELDS = ("chest", "waist", "hip")


@dataclass(frozen=True)
class FitTargets:
    """Optional attribute/measurement targets and per-term weights."""

    attributes: np.ndarray | None = None
    height: float | None = None
    chest: float | None = None
    waist: float | None = None
    hip: float | None = None
    w_attributes: float = DEFAULT_WEIGHTS["attributes"]
    w_height: float = DEFAULT_WEIGHTS["height"]
    w_circumference: float = DEFAULT_WEIGHTS["circumference"]
    w_regularizer: float = DEFAULT_WEIGHTS["regularizer"]

    def __post_init__(self):
        if self.attributes is not None:
            object.__setattr__(self, "attributes",
                               np.asarray(self.attributes, dtype=np.float64).reshape(-1))
        present = (self.attributes is not None or self.height is not None
                   or any(getattr(self, f) is not None for f in CIRC_FIELDS))
        if not present:
            raise InvalidValueError("at least one target must be present")
        for name in ("w_attributes", "w_height", "w_circumference", "w_regularizer"):
            if getattr(self, name) < 0:
                raise InvalidValueError(f"{name} must be >= 0")

    def circ_targets(self) -> list[tuple[str, float]]:
        return [(f, float(getattr(self, f))) for f in CIRC_FIELDS
                if getattr(self, f) is not None]


@dataclass
class FitConfig:
    max_iters: int = DEFAULT_MAX_ITERS
    tol: float = DEFAULT_TOL
    step_rule: str = "gauss_newton"   # gauss_newton | gradient | adam
    backtracking: bool = True
    init_step: float = 1.0
    min_step: float = 1e-12
    adam_lr: float = 0.05


@dataclass
class FitResult:
    beta: np.ndarray
    loss: float
    breakdown: dict[str, float]
    iterations: int
    converged: bool
    non_smooth_encounters: int
    loss_trace: list[float] = field(default_factory=list)


def _unclamped_scores(mapper: PolyMapper, beta: np.ndarray) -> np.ndarray:
    # The energy uses the raw polynomial output; clamping would flatten the
    # gradient exactly where the fit needs to move.
    return np.atleast_1d(apply_mapper(mapper, beta))


def _needed_fields(targets: FitTargets) -> tuple[str, ...]:
    fields = []
    if targets.height is not None:
        fields.append("height")
    for name, _ in targets.circ_targets():
        fields.append(f"{name}_circ")
    return tuple(fields)


def target_loss(model: BodyModel, s2a_mapper: PolyMapper | None, beta: np.ndarray,
                targets: FitTargets) -> tuple[float, dict[str, float]]:
    """Weighted squared-error energy and its per-term breakdown.

    Attribute and circumference residuals are summed over their components;
    the breakdown entries are the weighted terms, so they sum to the total.
    """
    beta = model.check_beta(beta)
    if (targets.attributes is not None) and s2a_mapper is None:
        raise InvalidValueError("attribute targets need an s2a mapper")
    breakdown = {"attributes": 0.0, "height": 0.0, "circumference": 0.0,
                 "regularizer": float(targets.w_regularizer * np.dot(beta, beta))}

    values, _, _ = selected_measurements(model, beta, _needed_fields(targets))

    if targets.attributes is not None:
        pred = _unclamped_scores(s2a_mapper, beta)
        if pred.shape != targets.attributes.shape:
            raise InvalidValueError(
                f"{pred.shape[0]} predicted attributes vs "
                f"{targets.attributes.shape[0]} targets"
            )
        breakdown["attributes"] = float(
            targets.w_attributes * np.sum((targets.attributes - pred) ** 2))
    if targets.height is not None:
        breakdown["height"] = float(
            targets.w_height * (targets.height - values["height"]) ** 2)
    acc = 0.0
    for name, target in targets.circ_targets():
        acc += (target - values[f"{name}_circ"]) ** 2
    breakdown["circumference"] = float(targets.w_circumference * acc)

    return float(sum(breakdown.values())), breakdown


def _residuals_and_jacobian(model: BodyModel, s2a_mapper, beta, targets: FitTargets,
                            with_jacobian: bool = True):
    """Stacked weighted residual vector r (loss = ||r||^2) and its Jacobian."""
    rows: list[np.ndarray] = []
    jacs: list[np.ndarray] = []

    values, grads, flags = selected_measurements(
        model, beta, _needed_fields(targets), with_gradients=with_jacobian)
    non_smooth = any(flags.values())

    if targets.attributes is not None:
        s = np.sqrt(targets.w_attributes)
        pred = _unclamped_scores(s2a_mapper, beta)
        rows.append(s * (pred - targets.attributes))
        if with_jacobian:
            jacs.append(s * mapper_jacobian(s2a_mapper, beta))
    if targets.height is not None:
        s = np.sqrt(targets.w_height)
        rows.append(np.array([s * (values["height"] - targets.height)]))
        if with_jacobian:
            jacs.append(s * grads["height"][None, :])
    for name, target in targets.circ_targets():
        s = np.sqrt(targets.w_circumference)
        rows.append(np.array([s * (values[f"{name}_circ"] - target)]))
        if with_jacobian:
            jacs.append(s * grads[f"{name}_circ"][None, :])
    s = np.sqrt(targets.w_regularizer)
    rows.append(s * beta)
    if with_jacobian:
        jacs.append(s * np.eye(len(beta)))

    r = np.concatenate(rows)
    j = np.concatenate(jacs, axis=0) if with_jacobian else None
    return r, j, non_smooth


def loss_gradient(model: BodyModel, s2a_mapper, beta, targets: FitTargets):
    """Analytic gradient of :func:`target_loss`; flags non-smooth points."""
    beta = model.check_beta(beta)
    r, j, non_smooth = _residuals_and_jacobian(model, s2a_mapper, beta, targets)
    return 2.0 * (j.T @ r), non_smooth


def pick_initializer(mappers: dict[str, PolyMapper] | None,
                     targets: FitTargets) -> tuple[str | None, PolyMapper | None]:
    """Best matching *2S mapper for the available targets, largest first."""
    if not mappers:
        return None, None
    have_a = targets.attributes is not None
    have_h = targets.height is not None
    have_c = len(targets.circ_targets()) == 3
    letters = ("A" if have_a else "") + ("H" if have_h else "") + ("C" if have_c else "")
    # try progressively smaller channel subsets, preferring more information
    candidates = []
    for mask in range(2 ** len(letters) - 1, 0, -1):
        name = "".join(c for k, c in enumerate(letters) if mask & (1 << k)) + "2S"
        candidates.append(name)
    for name in candidates:
        if name in mappers and mappers[name].output_kind == "betas":
            return name, mappers[name]
    return None, None


def _initial_beta(model, mappers, targets) -> tuple[np.ndarray, str | None]:
    name, mapper = pick_initializer(mappers, targets)
    if mapper is None:
        return np.zeros(model.num_betas), None
    meas_row = np.full((1, 5), np.nan)
    if targets.height is not None:
        meas_row[0, 0] = targets.height
    for idx, fieldname in ((2, "chest"), (3, "waist"), (4, "hip")):
        val = getattr(targets, fieldname)
        if val is not None:
            meas_row[0, idx] = val
    attrs = targets.attributes[None, :] if targets.attributes is not None else None
    raw = variant_input_rows(mapper.spec, meas_row, attrs, None)
    beta0 = apply_mapper(mapper, raw)[0]
    if beta0.shape[0] != model.num_betas:
        return np.zeros(model.num_betas), None
    return beta0, name


def fit_shape(model: BodyModel, mappers: dict[str, PolyMapper] | None,
              targets: FitTargets, config: FitConfig | None = None,
              s2a_mapper: PolyMapper | None = None) -> FitResult:
    """Minimize the target energy over beta.

    ``mappers`` may hold named variants ("AHC2S", "S2A", ...) used for
    initialization; ``s2a_mapper`` overrides the score predictor used by the
    attribute term (defaults to mappers["S2A"]).
    """
    config = config or FitConfig()
    if s2a_mapper is None and mappers:
        s2a_mapper = mappers.get("S2A")
    if targets.attributes is not None and s2a_mapper is None:
        raise InvalidValueError("attribute targets need an S2A mapper")

    beta, _ = _initial_beta(model, mappers, targets)
    loss, _ = target_loss(model, s2a_mapper, beta, targets)
    if np.isnan(loss):
        raise DivergenceError("loss is non-finite at the initial point", iteration=0,
                              trace=[])
    trace = [loss]
    non_smooth_hits = 0
    converged = False
    iterations = 0
    adam_m = np.zeros_like(beta)
    adam_v = np.zeros_like(beta)

    for it in range(1, config.max_iters + 1):
        iterations = it
        r, j, non_smooth = _residuals_and_jacobian(model, s2a_mapper, beta, targets)
        if non_smooth:
            non_smooth_hits += 1

        if config.step_rule == "gauss_newton":
            gram = j.T @ j
            gram += np.eye(len(beta)) * (1e-12 + np.trace(gram) * 1e-12)
            direction = -np.linalg.solve(gram, j.T @ r)
        elif config.step_rule == "gradient":
            direction = -2.0 * (j.T @ r)
        elif config.step_rule == "adam":
            g = 2.0 * (j.T @ r)
            adam_m = 0.9 * adam_m + 0.1 * g
            adam_v = 0.999 * adam_v + 0.001 * g * g
            mhat = adam_m / (1 - 0.9 ** it)
            vhat = adam_v / (1 - 0.999 ** it)
            beta = beta - config.adam_lr * mhat / (np.sqrt(vhat) + 1e-8)
            new_loss, _ = target_loss(model, s2a_mapper, beta, targets)
            if np.isnan(new_loss):
                raise DivergenceError("loss became non-finite", iteration=it,
                                      trace=[float(v) for v in trace])
            trace.append(new_loss)
            if abs(loss - new_loss) < config.tol:
                loss = new_loss
                converged = True
                break
            loss = new_loss
            continue
        else:
            raise InvalidValueError(f"unknown step rule '{config.step_rule}'")

        step = config.init_step * (0.5 if non_smooth else 1.0)
        accepted = False
        while step >= config.min_step:
            candidate = beta + step * direction
            try:
                new_loss, _ = target_loss(model, s2a_mapper, candidate, targets)
            except ToolkitError:
                if not config.backtracking:
                    raise
                # trial point left the valid geometry; shorten the step
                step *= 0.5
                continue
            if np.isnan(new_loss):
                raise DivergenceError("loss became non-finite", iteration=it,
                                      trace=[float(v) for v in trace])
            if (not config.backtracking) or new_loss <= loss:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = True  # no descent possible at the smallest step
            break
        beta = candidate
        trace.append(new_loss)
        if abs(loss - new_loss) < config.tol:
            loss = new_loss
            converged = True
            break
        loss = new_loss

    final_loss, breakdown = target_loss(model, s2a_mapper, beta, targets)
    return FitResult(
        beta=beta,
        loss=final_loss,
        breakdown=breakdown,
        iterations=iterations,
        converged=converged,
        non_smooth_encounters=non_smooth_hits,
        loss_trace=[float(v) for v in trace],
    )
