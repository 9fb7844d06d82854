"""Rotation consistency of pocket detectors, summarized as Wald proportions."""

from __future__ import annotations

import csv
import dataclasses
import functools
import io
import math
from typing import Callable, Sequence

from scipy.stats import norm

from geneopocket._parallel import ordered_map
from geneopocket.errors import DomainError
from geneopocket.grid import Rotation, bounding_grid, cube_grid, inverse, overlap_fraction, rotate_mask
from geneopocket.ingest import rotate_structure

DEFAULT_LEVEL = 0.99
DEFAULT_DDOF = 1


def z_value(level: float = DEFAULT_LEVEL) -> float:
    if not 0.0 < level < 1.0:
        raise DomainError(f"confidence level must be in (0, 1), got {level}")
    return float(norm.ppf(0.5 + level / 2.0))


@dataclasses.dataclass(frozen=True)
class ProportionEstimate:
    """A proportion with its standard error and two-sided Wald interval.

    ``defined`` is False when no observation is available; the numeric fields
    are then NaN. The interval is not truncated to [0, 1], and for p_hat in
    {0, 1} it collapses to a point, which overstates certainty for small n.
    """

    method_tag: str
    pocket_rank: int
    n_nonmissing: int
    p_hat: float
    se: float
    ci_low: float
    ci_high: float
    tau: float
    defined: bool = True

    def row(self) -> list[str]:
        return [
            self.method_tag,
            str(self.pocket_rank),
            str(self.n_nonmissing),
            *(_fmt(v) for v in (self.p_hat, self.se, self.ci_low, self.ci_high)),
            repr(self.tau),
        ]


def _fmt(v: float) -> str:
    return "NA" if math.isnan(v) else f"{v:.6f}"


def wald_interval(
    successes: int,
    n: int,
    level: float = DEFAULT_LEVEL,
    ddof: int = DEFAULT_DDOF,
) -> tuple[float, float, float, float]:
    """``(p_hat, se, low, high)`` for ``successes`` out of ``n``.

    ``se = sqrt(p_hat (1 - p_hat) / (n - ddof))``. With ``ddof=1`` (the
    default) this is the sample-variance form; ``ddof=0`` gives the textbook
    binomial form. When ``n <= ddof`` the standard error is 0 for a
    degenerate proportion and NaN otherwise.
    """
    if n < 1:
        raise DomainError(f"need at least one observation, got n={n}")
    if not 0 <= successes <= n:
        raise DomainError(f"successes must be in [0, {n}], got {successes}")
    p = successes / n
    var = p * (1.0 - p)
    if n > ddof:
        se = math.sqrt(var / (n - ddof))
    else:
        se = 0.0 if var == 0.0 else math.nan
    half = z_value(level) * se
    return p, se, p - half, p + half


def proportion_estimate(
    outcomes: Sequence[bool | None],
    tau: float,
    pocket_rank: int,
    method_tag: str = "geneopocket",
    level: float = DEFAULT_LEVEL,
    ddof: int = DEFAULT_DDOF,
) -> ProportionEstimate:
    """Wald estimate from per-item outcomes; ``None`` marks a missing item."""
    observed = [bool(o) for o in outcomes if o is not None]
    if not observed:
        nan = math.nan
        return ProportionEstimate(method_tag, pocket_rank, 0, nan, nan, nan, nan, tau, False)
    p, se, lo, hi = wald_interval(sum(observed), len(observed), level, ddof)
    return ProportionEstimate(method_tag, pocket_rank, len(observed), p, se, lo, hi, tau)


# --- rotation overlaps ----------------------------------------------------------


def rotation_grid(structure, spacing: float = 1.0, padding: float = 5.0):
    """A cubic grid around ``structure``; every quarter turn maps it onto itself."""
    return cube_grid(bounding_grid(structure, spacing, padding))


def _protein_overlaps(detector, rotation, ranks, spacing, padding, structure):
    grid = rotation_grid(structure, spacing, padding)
    base = detector(structure, grid)
    turned = detector(rotate_structure(structure, rotation, grid), grid)
    back = inverse(rotation)
    out = []
    for j in ranks:
        a = base.pocket_mask(j)
        b = turned.pocket_mask(j)
        if a is None or b is None:
            out.append(None)
        else:
            out.append(overlap_fraction(a, rotate_mask(b, back)))
    return tuple(out)


def rotation_overlaps(
    detector: Callable,
    proteins: Sequence,
    rotation: Rotation,
    ranks: Sequence[int] = (1, 2, 3),
    spacing: float = 1.0,
    padding: float = 5.0,
    jobs: int = 1,
) -> list[tuple[float | None, ...]]:
    """Per protein, the overlap |M_j ∩ ρ⁻¹ M'_j| / |M_j| for each rank ``j``.

    ``M_j`` is the j-th pocket on the original structure and ``M'_j`` the
    j-th pocket on the rotated one; ``None`` when either is absent.
    """
    if not proteins:
        raise DomainError("need at least one protein")
    ranks = tuple(int(j) for j in ranks)
    if any(j < 1 for j in ranks):
        raise DomainError(f"ranks must be positive, got {ranks}")
    fn = functools.partial(_protein_overlaps, detector, rotation, ranks, spacing, padding)
    return ordered_map(fn, list(proteins), jobs)


def proportions_from_overlaps(
    overlaps: Sequence[Sequence[float | None]],
    tau: float,
    ranks: Sequence[int] = (1, 2, 3),
    method_tag: str = "geneopocket",
    level: float = DEFAULT_LEVEL,
    ddof: int = DEFAULT_DDOF,
) -> list[ProportionEstimate]:
    if not 0.0 < tau <= 1.0:
        raise DomainError(f"tau must be in (0, 1], got {tau}")
    out = []
    for col, j in enumerate(ranks):
        outcomes = [None if row[col] is None else row[col] >= tau for row in overlaps]
        out.append(proportion_estimate(outcomes, tau, j, method_tag, level, ddof))
    return out


def equivariance_proportions(
    detector: Callable,
    proteins: Sequence,
    tau: float,
    rotation: Rotation,
    ranks: Sequence[int] = (1, 2, 3),
    method_tag: str = "geneopocket",
    spacing: float = 1.0,
    padding: float = 5.0,
    jobs: int = 1,
    level: float = DEFAULT_LEVEL,
    ddof: int = DEFAULT_DDOF,
) -> list[ProportionEstimate]:
    """Fraction of proteins whose rank-j pocket survives ``rotation`` with overlap >= tau.

    ``detector(structure, grid)`` must return an object with a
    ``pocket_mask(rank)`` method (e.g. :class:`~geneopocket.geneo.GeneoDetector`).
    """
    if not 0.0 < tau <= 1.0:
        raise DomainError(f"tau must be in (0, 1], got {tau}")
    ov = rotation_overlaps(detector, proteins, rotation, ranks, spacing, padding, jobs)
    return proportions_from_overlaps(ov, tau, ranks, method_tag, level, ddof)


EQUIVARIANCE_COLUMNS = ("method", "pocket", "n_nonmissing", "p_hat", "se", "ci_low", "ci_high", "tau")


def format_equivariance_table(estimates: Sequence[ProportionEstimate]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EQUIVARIANCE_COLUMNS)
    for e in estimates:
        w.writerow(e.row())
    return buf.getvalue()
