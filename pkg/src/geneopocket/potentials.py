"""The eight potential channels sampled on a voxel grid.

These are desk-scale surrogates, not the calibrated GENEOnet potentials.
Each channel is a function of atom-to-voxel distances and scalar atom
attributes only::

    Distance       max_a exp(-d^2 / (2 r0^2))
    Gravitational  sum_a 1 / (1 + d^2)
    Electrostatic  clip(sum_a q_a / (1 + d), -clip, clip)
    Lipophilic ... HB Donor
                   sum over atoms carrying the flag of exp(-d^2 / (2 r0^2))

Atom coordinates are snapped to the dyadic lattice before evaluation, so on
a grid with a dyadic origin and spacing every squared distance is computed
exactly. A quarter turn of structure and grid together therefore permutes
the channel values bit for bit.
"""

from __future__ import annotations

import dataclasses
import enum
from pathlib import Path

import numba
import numpy as np

from geneopocket.grid import GridSpec, ScalarField3D, load_field, save_field, snap


class Channel(enum.IntEnum):
    DISTANCE = 0
    GRAVITATIONAL = 1
    ELECTROSTATIC = 2
    LIPOPHILIC = 3
    HYDROPHILIC = 4
    POLAR = 5
    HB_ACCEPTOR = 6
    HB_DONOR = 7

    @property
    def label(self) -> str:
        return CHANNEL_LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "Channel":
        return cls(CHANNEL_LABELS.index(label))


CHANNEL_LABELS = (
    "Distance",
    "Gravitational",
    "Electrostatic",
    "Lipophilic",
    "Hydrophilic",
    "Polar",
    "HB Acceptor",
    "HB Donor",
)
CHANNELS = tuple(Channel)


@dataclasses.dataclass(frozen=True)
class PotentialConfig:
    r0: float = 1.7
    clip: float = 10.0


@numba.njit(cache=True)
def _fill_channels(cx, cy, cz, coords, charges, flags, inv2r2, want, out):
    nx, ny, nz = cx.size, cy.size, cz.size
    dx2 = np.empty(nx)
    dy2 = np.empty(ny)
    dz2 = np.empty(nz)
    ex = np.empty(nx)
    ey = np.empty(ny)
    ez = np.empty(nz)
    gauss = np.empty(nz)
    targets = np.empty(5, np.int64)
    for a in range(coords.shape[0]):
        for i in range(nx):
            d = cx[i] - coords[a, 0]
            dx2[i] = d * d
            ex[i] = np.exp(-dx2[i] * inv2r2)
        for j in range(ny):
            d = cy[j] - coords[a, 1]
            dy2[j] = d * d
            ey[j] = np.exp(-dy2[j] * inv2r2)
        for k in range(nz):
            d = cz[k] - coords[a, 2]
            dz2[k] = d * d
            ez[k] = np.exp(-dz2[k] * inv2r2)
        q = charges[a]
        nt = 0
        for c in range(5):
            if (flags[a] >> c) & 1 and want[3 + c]:
                targets[nt] = 3 + c
                nt += 1
        do_max = want[0]
        do_gauss = do_max or nt > 0
        do_grav = want[1]
        do_q = want[2] and q != 0.0
        for i in range(nx):
            for j in range(ny):
                s2 = dx2[i] + dy2[j]
                if do_grav:
                    for k in range(nz):
                        out[1, i, j, k] += 1.0 / (1.0 + (s2 + dz2[k]))
                if do_q:
                    for k in range(nz):
                        out[2, i, j, k] += q / (1.0 + np.sqrt(s2 + dz2[k]))
                if not do_gauss:
                    continue
                for k in range(nz):
                    # Product of three positives, independent of axis order.
                    p, r, t = ex[i], ey[j], ez[k]
                    if p > r:
                        p, r = r, p
                    if r > t:
                        r, t = t, r
                    if p > r:
                        p, r = r, p
                    gauss[k] = (p * r) * t
                if do_max:
                    for k in range(nz):
                        if gauss[k] > out[0, i, j, k]:
                            out[0, i, j, k] = gauss[k]
                for n in range(nt):
                    ch = targets[n]
                    for k in range(nz):
                        out[ch, i, j, k] += gauss[k]


def _channel_arrays(structure, spec: GridSpec, want, config: PotentialConfig) -> np.ndarray:
    out = np.zeros((8,) + spec.dims)
    coords = np.ascontiguousarray(snap(structure.coordinates))
    _fill_channels(
        spec.axis_centers(0),
        spec.axis_centers(1),
        spec.axis_centers(2),
        coords,
        np.ascontiguousarray(structure.charges, dtype=np.float64),
        np.ascontiguousarray(structure.flag_bits, dtype=np.int64),
        1.0 / (2.0 * config.r0 * config.r0),
        np.asarray(want, dtype=np.bool_),
        out,
    )
    np.clip(out[2], -config.clip, config.clip, out=out[2])
    return out


def compute_channel(structure, spec: GridSpec, channel: Channel, config: PotentialConfig = PotentialConfig()) -> ScalarField3D:
    """One potential channel of ``structure`` on ``spec``."""
    channel = Channel(channel)
    want = [c == channel for c in CHANNELS]
    return ScalarField3D(spec, _channel_arrays(structure, spec, want, config)[channel])


@dataclasses.dataclass(frozen=True)
class PotentialStack:
    """All eight channels on a shared grid, in :class:`Channel` order."""

    spec: GridSpec
    channels: tuple[ScalarField3D, ...]

    def __post_init__(self):
        if len(self.channels) != len(CHANNELS):
            raise ValueError(f"expected {len(CHANNELS)} channels, got {len(self.channels)}")
        if any(f.spec != self.spec for f in self.channels):
            raise ValueError("all channels must share the stack's grid")

    def __getitem__(self, channel) -> ScalarField3D:
        return self.channels[Channel(channel)]

    def __iter__(self):
        return iter(self.channels)


def compute_stack(structure, spec: GridSpec, config: PotentialConfig = PotentialConfig()) -> PotentialStack:
    arrays = _channel_arrays(structure, spec, [True] * 8, config)
    return PotentialStack(spec, tuple(ScalarField3D(spec, a) for a in arrays))


def _file_stem(channel: Channel) -> str:
    return channel.label.lower().replace(" ", "_")


def save_stack(stack: PotentialStack, directory) -> list[Path]:
    """Write one grid-format field file per channel into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for channel, field in zip(CHANNELS, stack.channels):
        path = directory / f"{_file_stem(channel)}.field"
        save_field(field, path)
        paths.append(path)
    return paths


def load_stack(directory) -> PotentialStack:
    directory = Path(directory)
    fields = tuple(load_field(directory / f"{_file_stem(c)}.field") for c in CHANNELS)
    return PotentialStack(fields[0].spec, fields)
