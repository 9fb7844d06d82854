"""Frame-to-frame stability of pocket predictions along a trajectory."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from typing import Callable, Sequence

import numpy as np
from scipy.stats import t as student_t

from geneopocket.errors import DomainError
from geneopocket.grid import bounding_grid

MISSING = math.nan


def rmsd(a, b) -> float:
    """Root mean squared deviation of paired coordinates, without superposition."""
    a = np.asarray(getattr(a, "coordinates", a), dtype=np.float64)
    b = np.asarray(getattr(b, "coordinates", b), dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] != 3:
        raise DomainError(f"coordinate arrays differ in shape: {a.shape} vs {b.shape}")
    if a.shape[0] == 0:
        raise DomainError("no atoms to compare")
    sq = ((a - b) ** 2).ravel().tolist()
    return math.sqrt(math.fsum(sq) / a.shape[0])


@dataclasses.dataclass(frozen=True)
class OverlapSeries:
    """``overlaps[t-2]`` and ``rmsds[t-2]`` refer to the frame pair (t-1, t).

    A missing overlap (previous frame predicted nothing) is stored as NaN.
    """

    protein_id: str
    overlaps: tuple[float, ...]
    rmsds: tuple[float, ...]

    def __post_init__(self):
        if len(self.overlaps) != len(self.rmsds):
            raise DomainError("overlap and RMSD series differ in length")

    def nonmissing(self) -> list[float]:
        return [o for o in self.overlaps if not math.isnan(o)]


def trajectory_grid(traj, spacing: float = 1.0, padding: float = 5.0):
    """One grid enclosing every frame, so masks from all frames are comparable."""
    return bounding_grid(np.vstack([f.coordinates for f in traj.frames]), spacing, padding)


def frame_overlap_series(
    detector: Callable,
    traj,
    T: int | None = None,
    spacing: float = 1.0,
    padding: float = 5.0,
) -> OverlapSeries:
    """Overlap of consecutive global masks over the first ``T`` frames."""
    T = len(traj.frames) if T is None else T
    if not 2 <= T <= len(traj.frames):
        raise DomainError(f"T must be in [2, {len(traj.frames)}], got {T}")
    frames = traj.frames[:T]
    n = len(frames[0])
    if any(len(f) != n for f in frames):
        raise DomainError("frames differ in atom count")
    grid = trajectory_grid(traj, spacing, padding)
    masks = [detector(f, grid).global_mask for f in frames]
    overlaps, rmsds = [], []
    for t in range(1, T):
        prev, cur = masks[t - 1], masks[t]
        k = len(prev)
        overlaps.append(MISSING if k == 0 else len(prev & cur) / k)
        rmsds.append(rmsd(frames[t - 1], frames[t]))
    return OverlapSeries(traj.structure_id, tuple(overlaps), tuple(rmsds))


# --- mean comparison ------------------------------------------------------------

CODE_THRESHOLDS = ((0.001, "***"), (0.01, "**"), (0.05, "*"), (0.1, "."))


def significance_code(p: float) -> str:
    for cut, code in CODE_THRESHOLDS:
        if p <= cut:
            return code
    return ""


@dataclasses.dataclass(frozen=True)
class MeanOverlapTest:
    mean_a: float
    mean_b: float
    diff: float
    t_stat: float
    df: float
    p_value: float
    significance_code: str


def _mean_var(x: np.ndarray) -> tuple[float, float]:
    m = math.fsum(x.tolist()) / x.size
    return m, math.fsum(((x - m) ** 2).tolist()) / (x.size - 1)


def mean_overlap_test(series_a: Sequence[float], series_b: Sequence[float]) -> MeanOverlapTest:
    """Welch t test of H0: mean_a = mean_b against H1: mean_a < mean_b.

    Degrees of freedom follow Welch-Satterthwaite. If both samples have zero
    variance the statistic is undefined; the p-value is then 0.5 for equal
    means and 0 or 1 according to the sign of the difference otherwise.
    """
    a = np.asarray(series_a, dtype=np.float64)
    b = np.asarray(series_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise DomainError("each series needs at least two values")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DomainError("series must be finite; drop missing overlaps first")
    ma, va = _mean_var(a)
    mb, vb = _mean_var(b)
    diff = ma - mb
    ea, eb = va / a.size, vb / b.size
    se2 = ea + eb
    if se2 == 0.0:
        t_stat = 0.0 if diff == 0 else math.copysign(math.inf, diff)
        df = math.nan
        p = 0.5 if diff == 0 else (0.0 if diff < 0 else 1.0)
    else:
        t_stat = diff / math.sqrt(se2)
        # scaled so tiny variances do not underflow when squared
        ra, rb = ea / max(ea, eb), eb / max(ea, eb)
        df = (ra + rb) ** 2 / (ra * ra / (a.size - 1) + rb * rb / (b.size - 1))
        p = float(student_t.cdf(t_stat, df))
    return MeanOverlapTest(ma, mb, diff, t_stat, df, p, significance_code(p))


def overlap_rmsd_association(series: OverlapSeries) -> float:
    """Pearson correlation of O_t and RMSD_t over non-missing pairs.

    Returns NaN when fewer than three pairs remain or either side is constant.
    """
    pairs = [(o, r) for o, r in zip(series.overlaps, series.rmsds) if not math.isnan(o)]
    if len(pairs) < 3:
        return math.nan
    x = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    dx = x - math.fsum(x.tolist()) / x.size
    dy = y - math.fsum(y.tolist()) / y.size
    sxx = math.fsum((dx * dx).tolist())
    syy = math.fsum((dy * dy).tolist())
    if sxx == 0.0 or syy == 0.0:
        return math.nan
    r = math.fsum((dx * dy).tolist()) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


# --- CSV ------------------------------------------------------------------------

ROBUSTNESS_COLUMNS = ("protein", "mean_a", "mean_b", "diff", "p_value", "code")


def format_robustness_table(rows: Sequence[tuple[str, MeanOverlapTest]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROBUSTNESS_COLUMNS)
    for protein, res in rows:
        w.writerow([protein, f"{res.mean_a:.6f}", f"{res.mean_b:.6f}", f"{res.diff:.6f}", f"{res.p_value:.6f}", res.significance_code])
    return buf.getvalue()


def format_series_long(series: Sequence[tuple[str, OverlapSeries]]) -> str:
    """Long format for plotting: one row per (label, protein, t)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["series", "protein", "t", "overlap", "rmsd"])
    for label, s in series:
        for t, (o, r) in enumerate(zip(s.overlaps, s.rmsds), 2):
            w.writerow([label, s.protein_id, t, "NA" if math.isnan(o) else repr(o), repr(r)])
    return buf.getvalue()
