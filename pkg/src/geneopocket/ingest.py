"""Atomic structures, trajectories, ligand regions and synthetic fixtures.

Native structure format (UTF-8, one record per line, ``#`` starts a comment)::

    ID 1abc_A
    ATOM <serial> <element> <x> <y> <z> [charge] [flags]

``flags`` is a comma-separated subset of ``lipophilic, hydrophilic, polar,
hb_acceptor, hb_donor`` or ``-`` for none. When it is omitted the flags are
looked up from the element in :data:`CHEM_TABLE`. Trajectories repeat
``FRAME <t>`` followed by the frame's ATOM records, with an optional
``TIMEDELTA <ps>`` header.
"""

from __future__ import annotations

import dataclasses
import functools
import math
from pathlib import Path

import numpy as np

from geneopocket.errors import DomainError, ParseError
from geneopocket.grid import GridSpec, Rotation, VoxelMask, bounding_grid, rotate_points, snap

FLAGS = ("lipophilic", "hydrophilic", "polar", "hb_acceptor", "hb_donor")
FLAG_BITS = {name: 1 << i for i, name in enumerate(FLAGS)}

# Heuristic element -> flags table, refined by residue where the chemistry
# of the side chain differs from the element default.
CHEM_TABLE: dict[str, frozenset] = {
    "C": frozenset({"lipophilic"}),
    "S": frozenset({"lipophilic"}),
    "F": frozenset({"lipophilic"}),
    "CL": frozenset({"lipophilic"}),
    "BR": frozenset({"lipophilic"}),
    "I": frozenset({"lipophilic"}),
    "O": frozenset({"hydrophilic", "polar", "hb_acceptor"}),
    "N": frozenset({"hydrophilic", "polar", "hb_donor"}),
    "P": frozenset({"hydrophilic", "polar"}),
}
RESIDUE_TABLE: dict[tuple[str, str], frozenset] = {
    ("O", "SER"): frozenset({"hydrophilic", "polar", "hb_acceptor", "hb_donor"}),
    ("O", "THR"): frozenset({"hydrophilic", "polar", "hb_acceptor", "hb_donor"}),
    ("O", "TYR"): frozenset({"polar", "hb_acceptor", "hb_donor"}),
    ("O", "HOH"): frozenset({"hydrophilic", "polar", "hb_acceptor", "hb_donor"}),
    ("N", "PRO"): frozenset({"polar"}),
    ("N", "HIS"): frozenset({"hydrophilic", "polar", "hb_acceptor", "hb_donor"}),
    ("C", "ASP"): frozenset(),
    ("C", "GLU"): frozenset(),
    ("C", "LYS"): frozenset(),
    ("C", "ARG"): frozenset(),
}


def chem_flags_for(element: str, residue: str | None = None) -> frozenset:
    """Chemical flags of an atom from its element and optional residue name."""
    element = element.upper()
    if residue is not None and (element, residue.upper()) in RESIDUE_TABLE:
        return RESIDUE_TABLE[(element, residue.upper())]
    return CHEM_TABLE.get(element, frozenset())


@dataclasses.dataclass(frozen=True)
class Atom:
    element: str
    position: tuple[float, float, float]
    partial_charge: float = 0.0
    chem_flags: frozenset = frozenset()

    def __post_init__(self):
        pos = tuple(float(v) for v in self.position)
        if len(pos) != 3 or not all(math.isfinite(v) for v in pos):
            raise DomainError(f"atom position must be three finite numbers, got {self.position}")
        flags = frozenset(self.chem_flags)
        unknown = flags - set(FLAGS)
        if unknown:
            raise DomainError(f"unknown chemical flags {sorted(unknown)}")
        if not math.isfinite(self.partial_charge):
            raise DomainError("partial charge must be finite")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "chem_flags", flags)
        object.__setattr__(self, "partial_charge", float(self.partial_charge))


@dataclasses.dataclass(frozen=True)
class AtomicStructure:
    """An ordered list of atoms. Atom order pairs atoms across frames."""

    id: str
    atoms: tuple[Atom, ...]

    def __post_init__(self):
        atoms = tuple(self.atoms)
        if not atoms:
            raise DomainError(f"structure {self.id!r} has no atoms")
        object.__setattr__(self, "atoms", atoms)

    def __len__(self) -> int:
        return len(self.atoms)

    @functools.cached_property
    def coordinates(self) -> np.ndarray:
        c = np.array([a.position for a in self.atoms], dtype=np.float64)
        c.flags.writeable = False
        return c

    @functools.cached_property
    def charges(self) -> np.ndarray:
        return np.array([a.partial_charge for a in self.atoms], dtype=np.float64)

    @functools.cached_property
    def flag_bits(self) -> np.ndarray:
        return np.array(
            [sum(FLAG_BITS[f] for f in a.chem_flags) for a in self.atoms], dtype=np.int64
        )

    @property
    def elements(self) -> tuple[str, ...]:
        return tuple(a.element for a in self.atoms)

    def with_coordinates(self, coords, id: str | None = None) -> "AtomicStructure":
        """Same atoms and attributes at new positions."""
        coords = np.asarray(coords, dtype=np.float64)
        if coords.shape != (len(self.atoms), 3):
            raise DomainError(f"expected {len(self.atoms)}x3 coordinates, got {coords.shape}")
        atoms = tuple(
            Atom(a.element, tuple(p), a.partial_charge, a.chem_flags)
            for a, p in zip(self.atoms, coords.tolist())
        )
        return AtomicStructure(self.id if id is None else id, atoms)


@dataclasses.dataclass(frozen=True)
class Trajectory:
    structure_id: str
    frames: tuple[AtomicStructure, ...]
    time_delta: float = 1.0

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise DomainError("trajectory has no frames")
        if not self.time_delta > 0:
            raise DomainError(f"time_delta must be positive, got {self.time_delta}")
        ref = frames[0].elements
        for t, f in enumerate(frames[1:], 2):
            if len(f) != len(ref):
                raise DomainError(
                    f"frame {t} has {len(f)} atoms, frame 1 has {len(ref)}"
                )
            if f.elements != ref:
                raise DomainError(f"frame {t} changes the element sequence")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)


@dataclasses.dataclass(frozen=True, eq=False)
class LigandRegion:
    """Ground-truth binding region: voxels within ``radius`` of a ligand atom."""

    mask: VoxelMask
    ligand: np.ndarray
    radius: float = 2.0

    def on(self, spec: GridSpec) -> "LigandRegion":
        return ligand_region(self.ligand, spec, self.radius)


def ligand_region(coords, spec: GridSpec, radius: float = 2.0) -> LigandRegion:
    """Voxelize the union of balls of ``radius`` around the ligand atoms.

    The voxel containing each in-grid ligand atom is always included, so the
    region is nonempty whenever one ligand atom lies inside the grid.
    """
    lig = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    if radius < 0:
        raise DomainError("ligand radius must be non-negative")
    axes = [spec.axis_centers(a) for a in range(3)]
    array = np.zeros(spec.dims, dtype=bool)
    for p in lig:
        d2 = (
            (axes[0] - p[0])[:, None, None] ** 2
            + (axes[1] - p[1])[None, :, None] ** 2
            + (axes[2] - p[2])[None, None, :] ** 2
        )
        array |= d2 <= radius * radius
        if spec.contains_point(p):
            array[spec.index_of(p)] = True
    lig = lig.copy()
    lig.flags.writeable = False
    return LigandRegion(VoxelMask(spec, array), lig, float(radius))


def rotate_structure(structure: AtomicStructure, rotation: Rotation, spec: GridSpec) -> AtomicStructure:
    """Rotate a structure about the center of ``spec``.

    Coordinates are snapped to the dyadic lattice first, which makes the
    result the exact image of the (snapped) input.
    """
    coords = rotate_points(snap(structure.coordinates), rotation, spec.box_center)
    return structure.with_coordinates(coords)


# --- text formats ------------------------------------------------------------


def _format_atom(serial: int, atom: Atom) -> str:
    flags = ",".join(f for f in FLAGS if f in atom.chem_flags) or "-"
    x, y, z = atom.position
    return f"ATOM {serial} {atom.element} {x!r} {y!r} {z!r} {atom.partial_charge!r} {flags}"


def _parse_atom(parts: list[str], lineno: int) -> Atom:
    if len(parts) < 6 or len(parts) > 8:
        raise ParseError("ATOM record needs 6 to 8 fields", lineno)
    try:
        int(parts[1])
    except ValueError:
        raise ParseError(f"serial {parts[1]!r} is not an integer", lineno) from None
    element = parts[2]
    try:
        xyz = tuple(float(v) for v in parts[3:6])
    except ValueError:
        raise ParseError(f"non-numeric coordinate in {parts[3:6]}", lineno) from None
    if not all(math.isfinite(v) for v in xyz):
        raise ParseError("coordinates must be finite", lineno)
    charge = 0.0
    flags = None
    rest = parts[6:]
    if rest:
        try:
            charge = float(rest[0])
            rest = rest[1:]
        except ValueError:
            if len(rest) == 2:
                raise ParseError(f"non-numeric charge {rest[0]!r}", lineno) from None
    if rest:
        token = rest[0]
        names = [] if token == "-" else token.split(",")
        unknown = [n for n in names if n not in FLAG_BITS]
        if unknown:
            raise ParseError(f"unknown chemical flags {unknown}", lineno)
        flags = frozenset(names)
    if flags is None:
        flags = chem_flags_for(element)
    return Atom(element, xyz, charge, flags)


def format_structure(structure: AtomicStructure) -> str:
    lines = [f"ID {structure.id}"]
    lines.extend(_format_atom(n, a) for n, a in enumerate(structure.atoms, 1))
    return "\n".join(lines) + "\n"


def parse_structure(text: str, id: str = "structure") -> AtomicStructure:
    """Parse the native structure format."""
    atoms = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "ID":
            if len(parts) != 2:
                raise ParseError("ID record needs exactly one token", lineno)
            id = parts[1]
        elif parts[0] == "ATOM":
            atoms.append(_parse_atom(parts, lineno))
        else:
            raise ParseError(f"unknown record {parts[0]!r}", lineno)
    if not atoms:
        raise DomainError("structure file contains no atoms")
    return AtomicStructure(id, tuple(atoms))


def format_trajectory(traj: Trajectory) -> str:
    lines = [f"ID {traj.structure_id}", f"TIMEDELTA {traj.time_delta!r}"]
    for t, frame in enumerate(traj.frames, 1):
        lines.append(f"FRAME {t}")
        lines.extend(_format_atom(n, a) for n, a in enumerate(frame.atoms, 1))
    return "\n".join(lines) + "\n"


def parse_trajectory(text: str, id: str = "trajectory") -> Trajectory:
    """Parse ``FRAME``-delimited trajectories; frame numbers must increase."""
    time_delta = 1.0
    frames: list[list[Atom]] = []
    last_t = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key = parts[0]
        if key == "ID" and len(parts) == 2:
            id = parts[1]
        elif key == "TIMEDELTA" and len(parts) == 2:
            try:
                time_delta = float(parts[1])
            except ValueError:
                raise ParseError(f"bad TIMEDELTA {parts[1]!r}", lineno) from None
        elif key == "FRAME" and len(parts) == 2:
            try:
                t = int(parts[1])
            except ValueError:
                raise ParseError(f"bad frame number {parts[1]!r}", lineno) from None
            if last_t is not None and t <= last_t:
                raise ParseError(f"frame {t} does not follow frame {last_t}", lineno)
            last_t = t
            frames.append([])
        elif key == "ATOM":
            if not frames:
                raise ParseError("ATOM record before the first FRAME", lineno)
            frames[-1].append(_parse_atom(parts, lineno))
        else:
            raise ParseError(f"unknown record {line!r}", lineno)
    if not frames:
        raise DomainError("trajectory file contains no frames")
    for t, atoms in enumerate(frames, 1):
        if not atoms:
            raise DomainError(f"frame {t} has no atoms")
    structures = tuple(AtomicStructure(id, tuple(a)) for a in frames)
    return Trajectory(id, structures, time_delta)


def read_structure(path) -> AtomicStructure:
    path = Path(path)
    return parse_structure(path.read_text(encoding="utf-8"), id=path.stem)


def read_trajectory(path) -> Trajectory:
    path = Path(path)
    return parse_trajectory(path.read_text(encoding="utf-8"), id=path.stem)


def write_structure(structure: AtomicStructure, path) -> None:
    Path(path).write_text(format_structure(structure), encoding="utf-8")


def write_trajectory(traj: Trajectory, path) -> None:
    Path(path).write_text(format_trajectory(traj), encoding="utf-8")


def read_pdb(text: str, id: str = "pdb", hetatm: bool = False) -> AtomicStructure:
    """Minimal PDB importer: element, residue-derived flags and coordinates.

    Only the first MODEL is read; altlocs other than blank/``A`` are dropped.
    This is a convenience for real files, not a complete PDB parser.
    """
    kinds = ("ATOM  ", "HETATM") if hetatm else ("ATOM  ",)
    atoms = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if line.startswith("ENDMDL"):
            break
        if not line.startswith(kinds):
            continue
        if line[16:17] not in (" ", "A", ""):
            continue
        try:
            xyz = (float(line[30:38]), float(line[38:46]), float(line[46:54]))
        except ValueError:
            raise ParseError("bad coordinate columns", lineno) from None
        element = line[76:78].strip() or line[12:16].strip().lstrip("0123456789")[:1]
        residue = line[17:20].strip()
        atoms.append(Atom(element.upper(), xyz, 0.0, chem_flags_for(element, residue)))
    if not atoms:
        raise DomainError("PDB text contains no atoms")
    return AtomicStructure(id, tuple(atoms))


# --- synthetic fixtures ----------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class PocketSpec:
    """Geometry of a synthetic protein with one planted surface cavity.

    The protein is a spherical shell of atoms (``body_radius``; derived from the
    atom count when ``None``) indented by a spherical cavity of ``radius``
    whose center sits ``depth`` Angstrom inside the shell surface. A fraction
    ``lining_fraction`` of the atoms lines the cavity wall.

    ``chemistry`` selects how flags and charges are assigned:

    * ``"mixed"``: lining atoms are lipophilic carbons, shell atoms a mix of
      carbons, nitrogens and oxygens with small charges.
    * ``"decoy"``: the cavity carries no chemistry at all; every flag and all
      charges sit on a patch of the shell opposite the cavity, so only the
      geometric channels point at the pocket.
    * ``"single"``: only the lining atoms carry the ``informative`` flag; the
      other flags and small random charges are scattered over all atoms
      independently of position, so exactly one channel marks the pocket.
    """

    radius: float = 4.0
    depth: float = 2.0
    body_radius: float | None = None
    lining_fraction: float = 0.35
    ligand_atoms: int = 5
    chemistry: str = "mixed"
    informative: str = "lipophilic"


def _sphere_points(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def synth_protein(
    seed: int,
    n_atoms: int = 120,
    pocket_spec: PocketSpec = PocketSpec(),
    spacing: float = 1.0,
    padding: float = 5.0,
    ligand_radius: float = 2.0,
) -> tuple[AtomicStructure, LigandRegion]:
    """A deterministic shell-shaped protein with one planted cavity and its ligand.

    Returns the structure and the ligand region voxelized on the structure's
    bounding grid.
    """
    if n_atoms < 10:
        raise DomainError(f"n_atoms must be >= 10, got {n_atoms}")
    ps = pocket_spec
    body = ps.body_radius if ps.body_radius is not None else max(6.0, math.sqrt(n_atoms * 5.0 / (4 * math.pi)))
    if not ps.radius > 0:
        raise DomainError(f"cavity radius must be positive, got {ps.radius}")
    if not 0 < ps.depth < ps.radius or ps.radius >= body:
        raise DomainError("cavity must indent the shell: 0 < depth < radius < body radius")
    if not 0 < ps.lining_fraction < 1 or ps.ligand_atoms < 1:
        raise DomainError("lining_fraction must be in (0, 1) and ligand_atoms >= 1")
    if ps.chemistry not in ("mixed", "decoy", "single"):
        raise DomainError(f"unknown chemistry {ps.chemistry!r}")
    if ps.informative not in FLAG_BITS:
        raise DomainError(f"unknown flag {ps.informative!r}")

    rng = np.random.default_rng(seed)
    axis = _sphere_points(rng, 1)[0]
    cav = axis * (body - ps.depth)

    n_lining = max(3, int(round(ps.lining_fraction * n_atoms)))
    n_shell = n_atoms - n_lining
    lining = np.empty((0, 3))
    while len(lining) < n_lining:
        p = cav + ps.radius * _sphere_points(rng, 4 * n_lining)
        lining = np.vstack([lining, p[np.linalg.norm(p, axis=1) < body]])
    lining = lining[:n_lining]
    shell = np.empty((0, 3))
    while len(shell) < n_shell:
        p = body * _sphere_points(rng, 4 * n_shell)
        shell = np.vstack([shell, p[np.linalg.norm(p - cav, axis=1) > ps.radius]])
    shell = shell[:n_shell]
    coords = np.vstack([lining, shell])
    coords += rng.uniform(-0.25, 0.25, size=coords.shape)
    coords = snap(coords)

    atoms = []
    if ps.chemistry == "mixed":
        for n, p in enumerate(coords):
            if n < n_lining:
                atoms.append(Atom("C", tuple(p), 0.0, CHEM_TABLE["C"]))
                continue
            element = ("C", "N", "O")[rng.integers(3)]
            charge = {"C": 0.0, "N": 0.4, "O": -0.4}[element] * float(rng.uniform(0.5, 1.0))
            atoms.append(Atom(element, tuple(p), charge, CHEM_TABLE[element]))
    elif ps.chemistry == "single":
        others = [f for f in FLAGS if f != ps.informative]
        for n, p in enumerate(coords):
            flags = {f for f in others if rng.random() < 0.3}
            if n < n_lining:
                flags.add(ps.informative)
            atoms.append(Atom("C", tuple(p), float(rng.uniform(-0.3, 0.3)), frozenset(flags)))
    else:
        facing = coords @ -axis / body
        for n, p in enumerate(coords):
            if n >= n_lining and facing[n] > 0.5:
                element = "N" if n % 2 else "O"
                charge = 0.5 if n % 2 else -0.5
                atoms.append(Atom(element, tuple(p), charge, frozenset(FLAGS)))
            else:
                atoms.append(Atom("C", tuple(p), 0.0, frozenset()))
    structure = AtomicStructure(f"synth_{seed}", tuple(atoms))

    lig = cav + rng.uniform(-1.0, 1.0, size=(ps.ligand_atoms, 3)) / math.sqrt(3.0)
    spec = bounding_grid(structure, spacing=spacing, padding=padding)
    return structure, ligand_region(lig, spec, ligand_radius)


def synth_trajectory(
    base: AtomicStructure,
    seed: int,
    frames: int = 250,
    step_scale: float = 0.1,
    time_delta: float = 10.0,
    restoring: float = 0.1,
) -> Trajectory:
    """A random-walk trajectory with bounded per-frame displacements.

    Each coordinate moves by a uniform draw on ``[-step_scale, step_scale]``
    plus a pull of ``restoring`` times its offset from ``base``; the total step
    is clipped to ``[-step_scale, step_scale]`` so the per-atom max-norm
    displacement between consecutive frames never exceeds ``step_scale``.
    """
    if frames < 2:
        raise DomainError(f"frames must be >= 2, got {frames}")
    if step_scale < 0:
        raise DomainError(f"step_scale must be non-negative, got {step_scale}")
    rng = np.random.default_rng(seed)
    x0 = base.coordinates
    x = x0.copy()
    out = [base]
    for _ in range(frames - 1):
        step = rng.uniform(-step_scale, step_scale, size=x.shape) - restoring * (x - x0)
        x = x + np.clip(step, -step_scale, step_scale)
        out.append(base.with_coordinates(x))
    return Trajectory(base.id, tuple(out), time_delta)
