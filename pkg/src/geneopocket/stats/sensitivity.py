"""Spread of fitted parameters across random training subsets."""

from __future__ import annotations

import csv
import dataclasses
import functools
import io
from typing import Sequence

import numpy as np

from geneopocket._parallel import ordered_map
from geneopocket.errors import DomainError, GeneoError
from geneopocket.geneo import PARAM_NAMES, GeneoParams
from geneopocket.train import TrainConfig, fit


@dataclasses.dataclass(frozen=True)
class Summary:
    min: float
    q1: float
    median: float
    q3: float
    max: float

    @classmethod
    def of(cls, values) -> "Summary":
        q = np.quantile(np.asarray(values, dtype=np.float64), [0.0, 0.25, 0.5, 0.75, 1.0])
        return cls(*(float(v) for v in q))


@dataclasses.dataclass(frozen=True)
class SensitivityReport:
    """Fitted parameters per successful repetition and their five-number summaries.

    ``subsets[r]`` lists the pool indices drawn for repetition ``r`` and
    ``failed`` the repetitions whose training raised; those are excluded from
    ``param_samples`` and ``summaries``.
    """

    repetitions: int
    param_samples: tuple[GeneoParams, ...]
    summaries: dict
    subsets: tuple[tuple[int, ...], ...]
    failed: tuple[int, ...]
    objectives: tuple[float, ...]

    @property
    def n_failed(self) -> int:
        return len(self.failed)


def _run(base: TrainConfig, pool, job):
    rep, subset = job
    cfg = dataclasses.replace(base, trainset=tuple(pool[i] for i in subset))
    try:
        res = fit(cfg)
    except GeneoError as exc:
        return rep, None, str(exc)
    return rep, res.params, res.final_objective


def draw_subsets(n_pool: int, subset_size: int, repetitions: int, seed: int):
    """Per repetition, ``subset_size`` distinct pool indices."""
    rng = np.random.default_rng(seed)
    return [
        (rep, tuple(int(i) for i in rng.choice(n_pool, size=subset_size, replace=False)))
        for rep in range(repetitions)
    ]


def sensitivity(
    base: TrainConfig,
    repetitions: int,
    pool: Sequence,
    subset_size: int,
    seed: int,
    jobs: int = 1,
) -> SensitivityReport:
    """Retrain on fresh random subsets of ``pool``, always from ``base.initial_params``.

    ``base.trainset`` is ignored; every repetition trains on its own draw
    with the optimizer settings (including ``base.seed``) of ``base``, so
    the draw is the only thing that varies between repetitions.
    """
    pool = tuple(pool)
    if repetitions < 1:
        raise DomainError(f"repetitions must be >= 1, got {repetitions}")
    if not 1 <= subset_size <= len(pool):
        raise DomainError(f"subset_size must be in [1, {len(pool)}], got {subset_size}")
    work = draw_subsets(len(pool), subset_size, repetitions, seed)
    results = ordered_map(functools.partial(_run, base, pool), work, jobs)

    samples, objectives, failed = [], [], []
    for rep, params, info in results:
        if params is None:
            failed.append(rep)
        else:
            samples.append(params)
            objectives.append(info)
    summaries = {}
    if samples:
        matrix = np.array([p.as_vector() for p in samples])
        summaries = {name: Summary.of(matrix[:, k]) for k, name in enumerate(PARAM_NAMES)}
    return SensitivityReport(
        repetitions=repetitions,
        param_samples=tuple(samples),
        summaries=summaries,
        subsets=tuple(w[1] for w in work),
        failed=tuple(failed),
        objectives=tuple(objectives),
    )


def format_samples_long(report: SensitivityReport) -> str:
    """One row per (successful repetition, parameter) for boxplots."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["repetition", "parameter", "value"])
    ok = [r for r in range(report.repetitions) if r not in report.failed]
    for rep, params in zip(ok, report.param_samples):
        for name, v in zip(PARAM_NAMES, params.as_vector().tolist()):
            w.writerow([rep + 1, name, repr(v)])
    return buf.getvalue()


def format_summary(report: SensitivityReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["parameter", "min", "q1", "median", "q3", "max"])
    for name, s in report.summaries.items():
        w.writerow([name, *(repr(v) for v in dataclasses.astuple(s))])
    return buf.getvalue()
