"""GENEO layer and the pocket-detection pipeline.

``predict`` runs: potentials -> per-channel normalization -> one GENEO unit
per channel (isotropic Gaussian convolution) -> normalization -> convex
combination ``psi`` -> connected components of ``{psi > theta}`` -> scoring
and ranking.

Every stage commutes exactly with quarter turns of the input:

* potentials are bit-exact permutations (see :mod:`geneopocket.potentials`);
* a unit runs three 1-D passes of a symmetric kernel. scipy evaluates a
  symmetric kernel as ``w0*f[i] + sum_t w_t*(f[i-t] + f[i+t])``, which is
  unchanged by reversing the axis. The order of the three passes is chosen
  from per-axis keys that permute with the field, so a rotated input gets
  the same passes in the same order. When keys tie, every order of the
  tied axes is evaluated and the elementwise minimum is kept;
* normalization, combination and thresholding are voxelwise or use
  min/max, and scores are exactly rounded sums (``math.fsum``).

Ties in score and volume fall back to the smallest voxel index, which is
not rotation invariant; such ties only occur for symmetric inputs.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from geneopocket.errors import DomainError, ParseError
from geneopocket.grid import GridSpec, ScalarField3D, VoxelMask, bounding_grid, cube_grid
from geneopocket.potentials import CHANNELS, Channel, PotentialConfig, PotentialStack, compute_stack

N_CHANNELS = len(CHANNELS)
SIMPLEX_TOL = 1e-12
PARAM_NAMES = tuple(
    [f"sigma.{i}" for i in range(1, 9)] + [f"alpha.{i}" for i in range(1, 9)] + ["theta"]
)


@dataclasses.dataclass(frozen=True)
class GeneoParams:
    """The 17 learnable parameters: 8 kernel widths, 8 weights, 1 threshold."""

    sigma: tuple[float, ...]
    alpha: tuple[float, ...]
    theta: float

    def __post_init__(self):
        sigma = tuple(float(s) for s in self.sigma)
        alpha = tuple(float(a) for a in self.alpha)
        if len(sigma) != N_CHANNELS or len(alpha) != N_CHANNELS:
            raise DomainError(f"need {N_CHANNELS} sigma and alpha values")
        if not all(s > 0 and math.isfinite(s) for s in sigma):
            raise DomainError(f"sigma must be positive, got {sigma}")
        if any(a < 0 or not math.isfinite(a) for a in alpha):
            raise DomainError(f"alpha must be non-negative, got {alpha}")
        if abs(math.fsum(alpha) - 1.0) > SIMPLEX_TOL:
            raise DomainError(f"alpha must sum to 1, sums to {math.fsum(alpha)!r}")
        if not 0.0 < self.theta < 1.0:
            raise DomainError(f"theta must lie in (0, 1), got {self.theta}")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "theta", float(self.theta))

    @classmethod
    def from_rounded(cls, sigma, alpha, theta, slack: float = 0.01) -> "GeneoParams":
        """Build params from published, rounded weights by renormalizing alpha."""
        alpha = np.asarray(alpha, dtype=np.float64)
        total = float(alpha.sum())
        if abs(total - 1.0) > slack:
            raise DomainError(f"alpha sums to {total}, too far from 1 to renormalize")
        if abs(math.fsum(alpha) - 1.0) > SIMPLEX_TOL:
            alpha = alpha / total
        return cls(tuple(sigma), tuple(alpha), theta)

    def as_vector(self) -> np.ndarray:
        return np.array([*self.sigma, *self.alpha, self.theta])

    @classmethod
    def from_vector(cls, v) -> "GeneoParams":
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (2 * N_CHANNELS + 1,):
            raise DomainError(f"expected {2 * N_CHANNELS + 1} values, got {v.shape}")
        return cls(tuple(v[:8]), tuple(v[8:16]), float(v[16]))

    @staticmethod
    def names() -> list[str]:
        return list(PARAM_NAMES)


# Optimal values reported for the trained network (rows in Channel order).
TABLE1_SIGMA = (3.110, 5.197, 2.561, 4.678, 3.545, 6.166, 4.186, 3.908)
TABLE1_ALPHA = (0.362, 0.002, 0.054, 0.338, 0.001, 0.185, 0.056, 0.001)
TABLE1_THETA = 0.756
TABLE1 = GeneoParams.from_rounded(TABLE1_SIGMA, TABLE1_ALPHA, TABLE1_THETA)

INITIAL_GUESS = GeneoParams((4.0,) * 8, (1.0 / 8,) * 8, 0.5)


# --- params files -----------------------------------------------------------------


def format_params(params: GeneoParams) -> str:
    lines = [f"sigma.{i} = {s!r}" for i, s in enumerate(params.sigma, 1)]
    lines += [f"alpha.{i} = {a!r}" for i, a in enumerate(params.alpha, 1)]
    lines.append(f"theta = {params.theta!r}")
    return "\n".join(lines) + "\n"


def parse_params(text: str) -> GeneoParams:
    """Parse ``key = value`` params text; rounded alphas are renormalized."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ParseError(f"expected 'key = value', got {line!r}", lineno)
        try:
            values[key] = float(value)
        except ValueError:
            raise ParseError(f"non-numeric value for {key}", lineno) from None
    expected = PARAM_NAMES
    missing = [k for k in expected if k not in values]
    extra = [k for k in values if k not in expected]
    if missing or extra:
        raise ParseError(f"params keys: missing {missing}, unknown {extra}")
    return GeneoParams.from_rounded(
        [values[f"sigma.{i}"] for i in range(1, 9)],
        [values[f"alpha.{i}"] for i in range(1, 9)],
        values["theta"],
    )


def read_params(path) -> GeneoParams:
    return parse_params(Path(path).read_text(encoding="utf-8"))


def write_params(params: GeneoParams, path) -> None:
    Path(path).write_text(format_params(params), encoding="utf-8")


# --- GENEO units ---------------------------------------------------------------------


def gaussian_taps(sigma: float, spacing: float = 1.0) -> np.ndarray:
    """Symmetric 1-D Gaussian taps of half-width ``ceil(3 sigma / spacing)``.

    The 3-D kernel of a unit is the outer product of these taps on each axis,
    i.e. ``exp(-|d|^2 spacing^2 / (2 sigma^2))`` on a cube, normalized to unit
    mass. Taps are nonnegative, so the unit is 1-Lipschitz in sup-norm.
    """
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    r = math.ceil(3.0 * sigma / spacing)
    t = np.arange(-r, r + 1, dtype=np.float64) * spacing
    w = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return w / w.sum()


@dataclasses.dataclass(frozen=True)
class GeneoUnit:
    channel: Channel
    sigma: float

    def taps(self, spacing: float = 1.0) -> np.ndarray:
        return gaussian_taps(self.sigma, spacing)


def _axis_keys(values: np.ndarray) -> list[tuple]:
    keys = []
    for axis, n in enumerate(values.shape):
        w = (2.0 * np.arange(n) - (n - 1)) ** 2
        shape = [1, 1, 1]
        shape[axis] = n
        w = w.reshape(shape)
        keys.append((n, float(np.max(values * w)), float(np.max(values * (w * w)))))
    return keys


def _pass_orders(values: np.ndarray) -> list[tuple[int, ...]]:
    keys = _axis_keys(values)
    ranked = sorted(range(3), key=lambda a: keys[a])
    groups = [list(g) for _, g in itertools.groupby(ranked, key=lambda a: keys[a])]
    orders = [()]
    for g in groups:
        orders = [o + p for o in orders for p in itertools.permutations(g)]
    return orders


def _separable(values: np.ndarray, taps: np.ndarray, order: Sequence[int], mode: str) -> np.ndarray:
    out = values
    for axis in order:
        out = ndimage.correlate1d(out, taps, axis=axis, mode=mode)
    return out


def apply_unit(unit: GeneoUnit, field: ScalarField3D, mode: str = "nearest") -> ScalarField3D:
    """Convolve ``field`` with the unit's kernel.

    Each output voxel is a convex combination of input voxels, so the result
    stays within the input's range and constants are preserved. ``mode`` is
    the scipy boundary rule; it must be reversal-symmetric ("nearest" or
    "reflect") to keep the unit exactly equivariant.
    """
    taps = unit.taps(field.spec.spacing)
    values = field.values
    out = None
    for order in _pass_orders(values):
        res = _separable(values, taps, order, mode)
        out = res if out is None else np.minimum(out, res)
    if values.size:
        np.clip(out, values.min(), values.max(), out=out)
    return ScalarField3D(field.spec, out)


def normalize_unit(field: ScalarField3D) -> ScalarField3D:
    """Affine rescale to [0, 1]; a constant field maps to all zeros."""
    v = field.values
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return ScalarField3D(field.spec, np.zeros_like(v))
    return ScalarField3D(field.spec, (v - lo) / (hi - lo))


def combine(fields: Sequence[ScalarField3D], alpha: Sequence[float]) -> ScalarField3D:
    """Convex combination ``sum_i alpha_i f_i`` of fields valued in [0, 1]."""
    alpha = [float(a) for a in alpha]
    if len(fields) != len(alpha) or not fields:
        raise DomainError(f"{len(fields)} fields but {len(alpha)} weights")
    if any(a < 0 for a in alpha) or abs(math.fsum(alpha) - 1.0) > SIMPLEX_TOL:
        raise DomainError(f"weights are not on the simplex: {alpha}")
    spec = fields[0].spec
    psi = np.zeros(spec.dims)
    for f, a in zip(fields, alpha):
        if f.spec != spec:
            raise DomainError("fields live on different grids")
        if f.values.min() < 0.0 or f.values.max() > 1.0:
            raise DomainError("combine expects fields valued in [0, 1]")
        if a:
            psi += a * f.values
    np.clip(psi, 0.0, 1.0, out=psi)
    return ScalarField3D(spec, psi)


def _structure_element(connectivity: int) -> np.ndarray:
    if connectivity == 6:
        return ndimage.generate_binary_structure(3, 1)
    if connectivity == 26:
        return ndimage.generate_binary_structure(3, 3)
    raise DomainError(f"connectivity must be 6 or 26, got {connectivity}")


def threshold_components(psi: ScalarField3D, theta: float, connectivity: int = 6) -> list[VoxelMask]:
    """Connected components of ``{psi > theta}``, ordered by first voxel."""
    if not 0.0 < theta < 1.0:
        raise DomainError(f"theta must lie in (0, 1), got {theta}")
    labels, n = ndimage.label(psi.values > theta, structure=_structure_element(connectivity))
    return [VoxelMask(psi.spec, labels == i) for i in range(1, n + 1)]


@dataclasses.dataclass(frozen=True, eq=False)
class Pocket:
    mask: VoxelMask
    score: float

    @property
    def volume(self) -> float:
        return self.mask.volume


@dataclasses.dataclass(frozen=True, eq=False)
class PocketPrediction:
    """Ranked pockets, their union, and the field they were cut from."""

    global_mask: VoxelMask
    pockets: tuple[Pocket, ...]
    psi: ScalarField3D

    def __len__(self) -> int:
        return len(self.pockets)

    def pocket_mask(self, rank: int) -> VoxelMask | None:
        """Mask of the ``rank``-th pocket (1-based), or ``None`` if absent."""
        return self.pockets[rank - 1].mask if rank <= len(self.pockets) else None

    def to_report(self) -> dict:
        spec = self.global_mask.spec
        return {
            "grid": {"origin": list(spec.origin), "spacing": spec.spacing, "dims": list(spec.dims)},
            "global_volume": self.global_mask.volume,
            "n_pockets": len(self.pockets),
            "pockets": [
                {
                    "rank": r,
                    "score": p.score,
                    "n_voxels": len(p.mask),
                    "volume": p.volume,
                    "voxels": p.mask.indices().tolist(),
                }
                for r, p in enumerate(self.pockets, 1)
            ],
        }


def score_and_rank(psi: ScalarField3D, components: Sequence[VoxelMask]) -> PocketPrediction:
    """Score each component by the mean of ``psi`` over it and rank them.

    Ranking is by score, then volume (both descending), then the smallest
    member index. The unweighted mean is a stand-in for the original
    detector's unpublished score weighting.
    """
    union = np.zeros(psi.spec.dims, dtype=bool)
    pockets = []
    for comp in components:
        if comp.spec != psi.spec:
            raise DomainError("component and psi live on different grids")
        n = len(comp)
        if n == 0:
            raise DomainError("cannot score an empty component")
        if np.any(union & comp.array):
            raise DomainError("components overlap")
        union |= comp.array
        pockets.append(Pocket(comp, math.fsum(psi.values[comp.array].tolist()) / n))
    pockets.sort(key=lambda p: (-p.score, -len(p.mask), p.mask.min_index()))
    return PocketPrediction(VoxelMask(psi.spec, union), tuple(pockets), psi)


# --- pipeline ----------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class GridConfig:
    """How ``predict`` builds a grid when none is given."""

    spacing: float = 1.0
    padding: float = 5.0
    cube: bool = False
    size: int | None = None

    def grid_for(self, structure) -> GridSpec:
        spec = bounding_grid(structure, self.spacing, self.padding)
        if self.cube or self.size is not None:
            spec = cube_grid(spec, self.size)
        return spec


def compute_psi(stack: PotentialStack, params: GeneoParams, mode: str = "nearest") -> ScalarField3D:
    outputs = []
    for channel, field in zip(CHANNELS, stack.channels):
        if params.alpha[channel] == 0.0:
            outputs.append(ScalarField3D.zeros(stack.spec))
            continue
        unit = GeneoUnit(channel, params.sigma[channel])
        outputs.append(normalize_unit(apply_unit(unit, normalize_unit(field), mode)))
    return combine(outputs, params.alpha)


def predict_stack(stack: PotentialStack, params: GeneoParams, connectivity: int = 6) -> PocketPrediction:
    """Pipeline from precomputed potentials."""
    psi = compute_psi(stack, params)
    return score_and_rank(psi, threshold_components(psi, params.theta, connectivity))


def predict(
    structure,
    params: GeneoParams = TABLE1,
    grid: GridSpec | None = None,
    grid_config: GridConfig = GridConfig(),
    potential_config: PotentialConfig = PotentialConfig(),
    connectivity: int = 6,
) -> PocketPrediction:
    """Detect pockets on ``structure``.

    ``grid`` fixes the voxel grid; when omitted it is derived from the
    structure by ``grid_config``.
    """
    spec = grid if grid is not None else grid_config.grid_for(structure)
    return predict_stack(compute_stack(structure, spec, potential_config), params, connectivity)


@dataclasses.dataclass(frozen=True)
class GeneoDetector:
    """A picklable ``detector(structure, grid) -> PocketPrediction`` callable."""

    params: GeneoParams = TABLE1
    grid_config: GridConfig = GridConfig()
    potential_config: PotentialConfig = PotentialConfig()
    connectivity: int = 6

    def __call__(self, structure, grid: GridSpec | None = None) -> PocketPrediction:
        return predict(structure, self.params, grid, self.grid_config, self.potential_config, self.connectivity)


def volumetric_accuracy(pred: PocketPrediction, truth) -> float:
    """Jaccard index of the top-ranked pocket against the ground truth.

    ``truth`` is a :class:`VoxelMask` or anything with a ``mask`` attribute.
    An empty prediction scores 0. Jaccard stands in for the original
    detector's accuracy function, which is not published.
    """
    truth = getattr(truth, "mask", truth)
    if truth.spec != pred.global_mask.spec:
        raise DomainError("prediction and ground truth live on different grids")
    if not pred.pockets:
        return 0.0
    top = pred.pockets[0].mask.array
    union = int(np.count_nonzero(top | truth.array))
    if union == 0:
        return 0.0
    return int(np.count_nonzero(top & truth.array)) / union
