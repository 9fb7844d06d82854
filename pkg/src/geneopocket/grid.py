"""Voxel grids, scalar fields, binary masks and quarter-turn rotations.

All grids use a single isotropic spacing. Voxel ``(i, j, k)`` has its center
at ``origin + spacing * (i + 1/2, j + 1/2, k + 1/2)``.

Quarter turns rotate about the geometric center of the grid. The index
convention for a positive quarter turn on an ``n``-wide cross-section is::

    x: (i, j, k) -> (i, n-1-k, j)
    y: (i, j, k) -> (k, j, n-1-i)
    z: (i, j, k) -> (n-1-j, i, k)

which is the right-handed rotation by pi/2 of the voxel centers about the
corresponding axis. Rotating a field or a mask is an exact permutation of
voxels; nothing is interpolated.

Coordinates that feed rotation experiments are snapped to a dyadic lattice
(multiples of ``SNAP`` Angstrom). On that lattice, differences, sign flips and
squared distances are exact in double precision, so a rotated structure is
the exact image of the original and every distance-based quantity computed
from it is a bit-exact permutation.
"""

from __future__ import annotations

import dataclasses
import math
from collections import deque
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from geneopocket.errors import DomainError, ParseError

SNAP = 2.0**-16
AXES = ("x", "y", "z")


def snap(values) -> np.ndarray:
    """Round coordinates to the nearest multiple of ``SNAP``."""
    return np.round(np.asarray(values, dtype=np.float64) / SNAP) * SNAP


@dataclasses.dataclass(frozen=True)
class GridSpec:
    """An axis-aligned voxel grid with isotropic spacing (Angstrom)."""

    origin: tuple[float, float, float]
    spacing: float
    dims: tuple[int, int, int]

    def __post_init__(self):
        origin = tuple(float(v) for v in self.origin)
        dims = tuple(int(d) for d in self.dims)
        if len(origin) != 3 or len(dims) != 3:
            raise DomainError("origin and dims must have three components")
        if not all(math.isfinite(v) for v in origin):
            raise DomainError(f"origin must be finite, got {origin}")
        if not (self.spacing > 0 and math.isfinite(self.spacing)):
            raise DomainError(f"spacing must be positive, got {self.spacing}")
        if min(dims) < 1:
            raise DomainError(f"dims must be >= 1, got {dims}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.dims

    @property
    def size(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def voxel_volume(self) -> float:
        return self.spacing**3

    @property
    def box_center(self) -> np.ndarray:
        """Geometric center of the grid box; the pivot of quarter turns."""
        return np.array(self.origin) + self.spacing * np.array(self.dims) / 2.0

    @property
    def is_cube(self) -> bool:
        return self.dims[0] == self.dims[1] == self.dims[2]

    def axis_centers(self, axis: int) -> np.ndarray:
        """Voxel center coordinates along one axis."""
        return self.origin[axis] + self.spacing * (np.arange(self.dims[axis]) + 0.5)

    def center(self, index) -> np.ndarray:
        """Center of voxel ``index``."""
        index = np.asarray(index)
        if not self.contains_index(index):
            raise DomainError(f"index {tuple(index)} outside dims {self.dims}")
        return np.array(self.origin) + self.spacing * (index + 0.5)

    def index_of(self, point) -> tuple[int, int, int]:
        """Index of the voxel containing ``point``; inverse of :meth:`center`."""
        rel = (np.asarray(point, dtype=np.float64) - np.array(self.origin)) / self.spacing
        index = np.floor(rel).astype(int)
        if not self.contains_index(index):
            raise DomainError(f"point {tuple(point)} lies outside the grid")
        return tuple(int(v) for v in index)

    def contains_index(self, index) -> bool:
        index = np.asarray(index)
        return bool(np.all(index >= 0) and np.all(index < np.array(self.dims)))

    def contains_point(self, point) -> bool:
        """Whether ``point`` lies strictly inside the grid box."""
        p = np.asarray(point, dtype=np.float64)
        lo = np.array(self.origin)
        hi = lo + self.spacing * np.array(self.dims)
        return bool(np.all(p > lo) and np.all(p < hi))


def bounding_grid(structure, spacing: float = 1.0, padding: float = 5.0) -> GridSpec:
    """Smallest grid holding every atom with ``padding`` clearance per face.

    ``structure`` is anything with a ``coordinates`` array of shape (n, 3)
    (an :class:`~geneopocket.ingest.AtomicStructure` or a plain array). The
    grid is centered on the atoms' bounding box and its origin is snapped to
    the dyadic lattice.
    """
    coords = np.asarray(getattr(structure, "coordinates", structure), dtype=np.float64)
    if coords.ndim != 2 or coords.shape[0] == 0:
        raise DomainError("bounding_grid needs at least one atom")
    if not spacing > 0:
        raise DomainError(f"spacing must be positive, got {spacing}")
    if padding < 0:
        raise DomainError(f"padding must be non-negative, got {padding}")

    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    need = hi - lo + 2.0 * padding
    dims = np.maximum(np.ceil(need / spacing).astype(int), 1)
    while True:
        origin = snap((lo + hi) / 2.0 - spacing * dims / 2.0)
        top = origin + spacing * dims
        short = (lo - origin < padding) | (top - hi < padding) | (lo <= origin) | (hi >= top)
        if not short.any():
            break
        dims = dims + short.astype(int)
    return GridSpec(tuple(origin), spacing, tuple(int(d) for d in dims))


def cube_grid(spec: GridSpec, size: int | None = None) -> GridSpec:
    """Pad ``spec`` to a cube of side ``size`` voxels around the same center."""
    n = max(spec.dims) if size is None else int(size)
    if n < max(spec.dims):
        raise DomainError(f"cube size {n} smaller than dims {spec.dims}")
    origin = spec.box_center - spec.spacing * n / 2.0
    return GridSpec(tuple(origin), spec.spacing, (n, n, n))


@dataclasses.dataclass(frozen=True, eq=False)
class ScalarField3D:
    """Real values sampled at the voxel centers of a grid."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != self.spec.dims:
            if values.size != self.spec.size:
                raise DomainError(
                    f"field has {values.size} values, grid needs {self.spec.size}"
                )
            values = values.reshape(self.spec.dims)
        values = values.view()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __eq__(self, other):
        if not isinstance(other, ScalarField3D):
            return NotImplemented
        return self.spec == other.spec and np.array_equal(self.values, other.values)

    __hash__ = None

    @classmethod
    def zeros(cls, spec: GridSpec) -> "ScalarField3D":
        return cls(spec, np.zeros(spec.dims))

    def with_values(self, values) -> "ScalarField3D":
        return ScalarField3D(self.spec, values)


@dataclasses.dataclass(frozen=True, eq=False)
class VoxelMask:
    """A set of voxels of a grid, stored as a boolean occupancy array."""

    spec: GridSpec
    array: np.ndarray

    def __post_init__(self):
        array = np.asarray(self.array, dtype=bool)
        if array.shape != self.spec.dims:
            raise DomainError(f"mask shape {array.shape} != grid dims {self.spec.dims}")
        array = array.view()
        array.flags.writeable = False
        object.__setattr__(self, "array", array)

    @classmethod
    def empty(cls, spec: GridSpec) -> "VoxelMask":
        return cls(spec, np.zeros(spec.dims, dtype=bool))

    @classmethod
    def full(cls, spec: GridSpec) -> "VoxelMask":
        return cls(spec, np.ones(spec.dims, dtype=bool))

    @classmethod
    def from_indices(cls, spec: GridSpec, indices: Iterable[Sequence[int]]) -> "VoxelMask":
        idx = np.asarray(list(indices), dtype=int).reshape(-1, 3)
        if len(idx) and (np.any(idx < 0) or np.any(idx >= np.array(spec.dims))):
            raise DomainError(f"mask index outside dims {spec.dims}")
        array = np.zeros(spec.dims, dtype=bool)
        array[idx[:, 0], idx[:, 1], idx[:, 2]] = True
        return cls(spec, array)

    def __len__(self) -> int:
        return int(np.count_nonzero(self.array))

    @property
    def count(self) -> int:
        return len(self)

    @property
    def volume(self) -> float:
        return len(self) * self.spec.voxel_volume

    def indices(self) -> np.ndarray:
        """Member indices as an (m, 3) array in lexicographic order."""
        return np.argwhere(self.array)

    @property
    def members(self) -> frozenset:
        return frozenset(tuple(int(v) for v in row) for row in self.indices())

    def min_index(self) -> tuple[int, int, int]:
        idx = self.indices()
        if len(idx) == 0:
            raise DomainError("empty mask has no minimal index")
        return tuple(int(v) for v in idx[0])

    def __contains__(self, index) -> bool:
        return self.spec.contains_index(index) and bool(self.array[tuple(index)])

    def _check(self, other: "VoxelMask"):
        if self.spec != other.spec:
            raise DomainError("masks live on different grids")

    def __and__(self, other: "VoxelMask") -> "VoxelMask":
        self._check(other)
        return VoxelMask(self.spec, self.array & other.array)

    def __or__(self, other: "VoxelMask") -> "VoxelMask":
        self._check(other)
        return VoxelMask(self.spec, self.array | other.array)

    def __eq__(self, other):
        if not isinstance(other, VoxelMask):
            return NotImplemented
        return self.spec == other.spec and np.array_equal(self.array, other.array)

    __hash__ = None


# --- quarter turns ---------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class QuarterTurn:
    """Rotation by ``quarter_count * pi/2`` about a coordinate axis."""

    axis: str
    quarter_count: int = 1

    def __post_init__(self):
        if self.axis not in AXES:
            raise DomainError(f"axis must be one of {AXES}, got {self.axis!r}")
        if self.quarter_count not in (0, 1, 2, 3):
            raise DomainError(f"quarter_count must be in 0..3, got {self.quarter_count}")

    def inverse(self) -> "QuarterTurn":
        return QuarterTurn(self.axis, (-self.quarter_count) % 4)

    def then(self, other: "QuarterTurn") -> "QuarterTurn":
        """Same-axis composition: apply ``self`` first, then ``other``."""
        if other.axis != self.axis:
            raise DomainError("only same-axis quarter turns compose into a quarter turn")
        return QuarterTurn(self.axis, (self.quarter_count + other.quarter_count) % 4)

    @property
    def matrix(self) -> np.ndarray:
        return np.linalg.matrix_power(_BASE_MATRIX[self.axis], self.quarter_count)


Rotation = Union[QuarterTurn, Sequence[QuarterTurn]]

_BASE_MATRIX = {
    "x": np.array([[1, 0, 0], [0, 0, -1], [0, 1, 0]]),
    "y": np.array([[0, 0, 1], [0, 1, 0], [-1, 0, 0]]),
    "z": np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1]]),
}
# The two axes that a turn about each axis moves.
_PLANE = {"x": (1, 2), "y": (0, 2), "z": (0, 1)}


def as_word(rotation: Rotation) -> tuple[QuarterTurn, ...]:
    """Normalize a rotation to a tuple of quarter turns applied left to right."""
    if isinstance(rotation, QuarterTurn):
        return (rotation,)
    return tuple(rotation)


def inverse(rotation: Rotation) -> tuple[QuarterTurn, ...]:
    return tuple(q.inverse() for q in reversed(as_word(rotation)))


def rotation_matrix(rotation: Rotation) -> np.ndarray:
    m = np.eye(3, dtype=int)
    for q in as_word(rotation):
        m = q.matrix @ m
    return m


def octahedral_group() -> list[tuple[QuarterTurn, ...]]:
    """The 24 proper rotations of the cube, each as a shortest word of turns.

    The identity is the empty word and comes first.
    """
    gens = (QuarterTurn("x", 1), QuarterTurn("y", 1), QuarterTurn("z", 1))
    seen = {rotation_matrix(()).tobytes(): ()}
    queue = deque([()])
    while queue:
        word = queue.popleft()
        for g in gens:
            nxt = word + (g,)
            key = rotation_matrix(nxt).tobytes()
            if key not in seen:
                seen[key] = nxt
                queue.append(nxt)
    return list(seen.values())


def _turn_array(a: np.ndarray, axis: str) -> np.ndarray:
    # One positive quarter turn under the index convention of the module docstring.
    if axis == "x":
        return a[:, :, ::-1].transpose(0, 2, 1)
    if axis == "y":
        return a[::-1].transpose(2, 1, 0)
    return a[:, ::-1].transpose(1, 0, 2)


def _rotate_array(a: np.ndarray, spec: GridSpec, rotation: Rotation) -> np.ndarray:
    for q in as_word(rotation):
        p, r = _PLANE[q.axis]
        if q.quarter_count and spec.dims[p] != spec.dims[r]:
            raise DomainError(
                f"cross-section {spec.dims[p]}x{spec.dims[r]} orthogonal to "
                f"{q.axis} is not square; pad the grid with cube_grid first"
            )
        for _ in range(q.quarter_count):
            a = _turn_array(a, q.axis)
    return np.ascontiguousarray(a)


def rotate_field(field: ScalarField3D, rotation: Rotation) -> ScalarField3D:
    """Rotate a field about the grid center by an exact voxel permutation."""
    return ScalarField3D(field.spec, _rotate_array(field.values, field.spec, rotation))


def rotate_mask(mask: VoxelMask, rotation: Rotation) -> VoxelMask:
    """Rotate a mask about the grid center; the member count is preserved."""
    return VoxelMask(mask.spec, _rotate_array(mask.array, mask.spec, rotation))


def rotate_points(points, rotation: Rotation, center) -> np.ndarray:
    """Rotate points about ``center``; exact for points on the dyadic lattice."""
    pts = np.asarray(points, dtype=np.float64)
    c = np.asarray(center, dtype=np.float64)
    rel = pts - c
    for q in as_word(rotation):
        for _ in range(q.quarter_count):
            x, y, z = rel[..., 0], rel[..., 1], rel[..., 2]
            if q.axis == "x":
                rel = np.stack([x, -z, y], axis=-1)
            elif q.axis == "y":
                rel = np.stack([z, y, -x], axis=-1)
            else:
                rel = np.stack([-y, x, z], axis=-1)
    return c + rel


def overlap_fraction(a: VoxelMask, b: VoxelMask) -> float:
    """Fraction of ``a`` covered by ``b``: ``|a & b| / |a|``."""
    if a.spec != b.spec:
        raise DomainError("masks live on different grids")
    na = len(a)
    if na == 0:
        raise DomainError("overlap against an empty reference mask is undefined")
    return int(np.count_nonzero(a.array & b.array)) / na


# --- text serialization ------------------------------------------------------

_FIELD_MAGIC = "GENEOFIELD 1"
_MASK_MAGIC = "GENEOMASK 1"


def _header(spec: GridSpec) -> list[str]:
    return [
        "origin " + " ".join(repr(v) for v in spec.origin),
        f"spacing {spec.spacing!r}",
        "dims " + " ".join(str(d) for d in spec.dims),
    ]


def dumps_field(field: ScalarField3D) -> str:
    lines = [_FIELD_MAGIC, *_header(field.spec)]
    nz = field.spec.dims[2]
    flat = field.values.reshape(-1, nz)
    lines.extend(" ".join(repr(float(v)) for v in row) for row in flat)
    return "\n".join(lines) + "\n"


def dumps_mask(mask: VoxelMask) -> str:
    idx = mask.indices()
    lines = [_MASK_MAGIC, *_header(mask.spec), f"count {len(idx)}"]
    lines.extend(f"{i} {j} {k}" for i, j, k in idx)
    return "\n".join(lines) + "\n"


def _parse_header(lines: list[str], magic: str) -> tuple[GridSpec, int]:
    body = [(n, ln) for n, ln in enumerate(lines, 1) if ln.strip() and not ln.startswith("#")]
    if not body or body[0][1].strip() != magic:
        raise ParseError(f"expected header {magic!r}", body[0][0] if body else 1)
    fields = {}
    for n, ln in body[1:4]:
        key, *rest = ln.split()
        fields[key] = (n, rest)
    try:
        origin = tuple(float(v) for v in fields["origin"][1])
        spacing = float(fields["spacing"][1][0])
        dims = tuple(int(v) for v in fields["dims"][1])
        spec = GridSpec(origin, spacing, dims)
    except (KeyError, IndexError, ValueError) as exc:
        raise ParseError(f"bad grid header: {exc}", body[0][0]) from exc
    start = body[3][0] if len(body) > 3 else len(lines)
    return spec, start


def loads_field(text: str) -> ScalarField3D:
    lines = text.splitlines()
    spec, start = _parse_header(lines, _FIELD_MAGIC)
    values = []
    for n, ln in enumerate(lines[start:], start + 1):
        if not ln.strip() or ln.startswith("#"):
            continue
        try:
            values.extend(float(v) for v in ln.split())
        except ValueError as exc:
            raise ParseError(f"non-numeric field value: {exc}", n) from exc
    if len(values) != spec.size:
        raise ParseError(f"expected {spec.size} values, found {len(values)}")
    return ScalarField3D(spec, np.array(values).reshape(spec.dims))


def loads_mask(text: str) -> VoxelMask:
    lines = text.splitlines()
    spec, start = _parse_header(lines, _MASK_MAGIC)
    rows = [(n, ln) for n, ln in enumerate(lines[start:], start + 1) if ln.strip() and not ln.startswith("#")]
    if not rows or rows[0][1].split()[0] != "count":
        raise ParseError("missing count record", rows[0][0] if rows else None)
    count = int(rows[0][1].split()[1])
    idx = []
    for n, ln in rows[1:]:
        parts = ln.split()
        if len(parts) != 3:
            raise ParseError("expected an index triple", n)
        try:
            idx.append(tuple(int(v) for v in parts))
        except ValueError as exc:
            raise ParseError(f"non-integer index: {exc}", n) from exc
    if len(idx) != count:
        raise ParseError(f"count says {count} voxels, found {len(idx)}")
    return VoxelMask.from_indices(spec, idx)


def save_field(field: ScalarField3D, path) -> None:
    Path(path).write_text(dumps_field(field), encoding="utf-8")


def load_field(path) -> ScalarField3D:
    return loads_field(Path(path).read_text(encoding="utf-8"))


def save_mask(mask: VoxelMask, path) -> None:
    Path(path).write_text(dumps_mask(mask), encoding="utf-8")


def load_mask(path) -> VoxelMask:
    return loads_mask(Path(path).read_text(encoding="utf-8"))
