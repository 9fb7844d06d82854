"""Fit the 17 detector parameters by maximizing mean volumetric accuracy.

The search runs Nelder-Mead on an unconstrained vector ``u`` of 17 reals:

* ``sigma = exp(u[0:8])``
* ``alpha = softmax(u[8:16])``
* ``theta = logistic(u[16])``

so every iterate is a valid :class:`GeneoParams` by construction. Potentials
do not depend on the parameters and are computed once per training item.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from geneopocket.errors import DomainError, OptimizationError
from geneopocket.geneo import (
    INITIAL_GUESS,
    N_CHANNELS,
    GeneoParams,
    predict_stack,
    volumetric_accuracy,
    write_params,
)
from geneopocket.potentials import PotentialConfig, PotentialStack, compute_stack

# Kernel widths are confined to [SIGMA_MIN, SIGMA_MAX] Angstrom so that a
# runaway simplex cannot request kernels wider than any desk-scale grid.
SIGMA_MIN = 0.25
SIGMA_MAX = 16.0
_LOGIT_MAX = 30.0
_ALPHA_FLOOR = 1e-300


# --- reparameterization ------------------------------------------------------


def _logistic(z: float) -> float:
    z = min(max(z, -_LOGIT_MAX), _LOGIT_MAX)
    return 1.0 / (1.0 + math.exp(-z))


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / math.fsum(e.tolist())


def _project_simplex(alpha: np.ndarray) -> tuple[float, ...]:
    # Rescale until fsum is 1 to within a few ulps.
    alpha = np.asarray(alpha, dtype=np.float64)
    for _ in range(3):
        alpha = alpha / math.fsum(alpha.tolist())
    return tuple(alpha.tolist())


def to_unconstrained(params: GeneoParams) -> np.ndarray:
    """Inverse of :func:`from_unconstrained` (log, centred log, logit)."""
    u = np.empty(2 * N_CHANNELS + 1)
    u[:8] = np.log(params.sigma)
    la = np.log(np.maximum(params.alpha, _ALPHA_FLOOR))
    u[8:16] = la - la.mean()
    t = params.theta
    u[16] = math.log(t) - math.log1p(-t)
    return u


def from_unconstrained(u) -> GeneoParams:
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (2 * N_CHANNELS + 1,):
        raise DomainError(f"expected {2 * N_CHANNELS + 1} values, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise OptimizationError("non-finite coordinates in the search space")
    sigma = np.clip(np.exp(u[:8]), SIGMA_MIN, SIGMA_MAX)
    alpha = _project_simplex(_softmax(u[8:16]))
    return GeneoParams(tuple(sigma.tolist()), alpha, _logistic(float(u[16])))


# --- objective ---------------------------------------------------------------


@dataclasses.dataclass(frozen=True, eq=False)
class PreparedItem:
    """A training pair with its potentials precomputed on the truth grid."""

    stack: PotentialStack
    truth: object


def prepare(trainset, potential_config: PotentialConfig = PotentialConfig()) -> list[PreparedItem]:
    items = []
    for structure, truth in trainset:
        spec = getattr(truth, "mask", truth).spec
        items.append(PreparedItem(compute_stack(structure, spec, potential_config), truth))
    return items


def prepared_objective(params: GeneoParams, items: Sequence[PreparedItem], connectivity: int = 6) -> float:
    if not items:
        raise DomainError("trainset is empty")
    scores = [volumetric_accuracy(predict_stack(it.stack, params, connectivity), it.truth) for it in items]
    return math.fsum(scores) / len(scores)


def objective(params: GeneoParams, trainset, potential_config: PotentialConfig = PotentialConfig()) -> float:
    """Mean volumetric accuracy of the detector over ``(structure, ligand)`` pairs.

    Each structure is evaluated on the grid of its ligand region.
    """
    trainset = list(trainset)
    if not trainset:
        raise DomainError("trainset is empty")
    return prepared_objective(params, prepare(trainset, potential_config))


# --- fitting -----------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    trainset: tuple
    initial_params: GeneoParams = INITIAL_GUESS
    max_iters: int = 60
    tolerance: float = 1e-4
    seed: int = 0
    step: float = 1.0
    potential_config: PotentialConfig = PotentialConfig()

    def __post_init__(self):
        object.__setattr__(self, "trainset", tuple(self.trainset))
        if not self.trainset:
            raise DomainError("trainset must be nonempty")
        if self.max_iters < 1:
            raise DomainError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tolerance > 0:
            raise DomainError(f"tolerance must be positive, got {self.tolerance}")
        if not self.step > 0:
            raise DomainError(f"step must be positive, got {self.step}")


@dataclasses.dataclass(frozen=True)
class TrainResult:
    params: GeneoParams
    objective_trace: tuple[float, ...]
    iterations: int
    initial_objective: float
    final_objective: float
    evaluations: int


def initial_simplex(u0: np.ndarray, step: float, seed: int) -> np.ndarray:
    """Axis-aligned simplex around ``u0``; ``seed`` picks the sign of each edge."""
    signs = np.random.default_rng(seed).choice([-1.0, 1.0], size=u0.size)
    simplex = np.tile(u0, (u0.size + 1, 1))
    simplex[1:] += np.diag(signs * step)
    return simplex


def fit(config: TrainConfig) -> TrainResult:
    """Nelder-Mead search from ``config.initial_params``.

    The returned parameters are the best point evaluated, so the final
    objective is never below the initial one.
    """
    items = prepare(config.trainset, config.potential_config)
    memo: dict[bytes, float] = {}
    best = {"value": -math.inf, "u": None}

    def evaluate(u: np.ndarray) -> float:
        key = np.asarray(u, dtype=np.float64).tobytes()
        if key in memo:
            return memo[key]
        value = prepared_objective(from_unconstrained(u), items)
        if not math.isfinite(value):
            raise OptimizationError(f"objective evaluated to {value}")
        memo[key] = value
        if value > best["value"]:
            best["value"], best["u"] = value, np.array(u, dtype=np.float64)
        return value

    u0 = to_unconstrained(config.initial_params)
    initial = evaluate(u0)
    trace: list[float] = []

    res = minimize(
        lambda u: -evaluate(u),
        u0,
        method="Nelder-Mead",
        callback=lambda xk: trace.append(best["value"]),
        options={
            "maxiter": config.max_iters,
            "initial_simplex": initial_simplex(u0, config.step, config.seed),
            "xatol": config.tolerance,
            "fatol": config.tolerance,
        },
    )
    # scipy skips the callback on the iteration that exhausts maxiter
    while len(trace) < max(int(res.nit), 1):
        trace.append(best["value"])
    if best["value"] > initial:
        params = from_unconstrained(best["u"])
    else:
        params = config.initial_params
    return TrainResult(
        params=params,
        objective_trace=tuple(trace),
        iterations=int(res.nit),
        initial_objective=initial,
        final_objective=max(best["value"], initial),
        evaluations=len(memo),
    )


def format_trace(result: TrainResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iter", "objective"])
    for i, v in enumerate(result.objective_trace, 1):
        w.writerow([i, repr(v)])
    return buf.getvalue()


def save_result(result: TrainResult, directory) -> tuple[Path, Path]:
    """Persist ``fitted.params`` and ``trace.csv`` under ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    params_path = directory / "fitted.params"
    trace_path = directory / "trace.csv"
    write_params(result.params, params_path)
    trace_path.write_text(format_trace(result), encoding="utf-8")
    return params_path, trace_path
