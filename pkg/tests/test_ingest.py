import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geneopocket.errors import DomainError, ParseError
from geneopocket.grid import GridSpec, QuarterTurn, bounding_grid, cube_grid, octahedral_group, rotate_points
from geneopocket.ingest import (
    CHEM_TABLE,
    FLAGS,
    Atom,
    AtomicStructure,
    PocketSpec,
    Trajectory,
    format_structure,
    format_trajectory,
    ligand_region,
    parse_structure,
    parse_trajectory,
    read_pdb,
    read_structure,
    rotate_structure,
    synth_protein,
    synth_trajectory,
    write_structure,
)

PDB_TEXT = """\
HEADER    TEST
ATOM      1  N   ALA A   1      11.104   6.134  -6.504  1.00  0.00           N
ATOM      2  CA  ALA A   1      11.639   6.071  -5.147  1.00  0.00           C
ATOM      3  OG  SER A   2      12.000   7.500  -4.000  1.00  0.00           O
ATOM      4  CB BSER A   2      12.500   7.000  -4.500  1.00  0.00           C
HETATM    5  O   HOH A 101      20.000  20.000  20.000  1.00  0.00           O
ENDMDL
ATOM      6  N   GLY A   3      99.000  99.000  99.000  1.00  0.00           N
"""


coords = st.floats(-50, 50, allow_nan=False).map(lambda v: round(v, 3))


@st.composite
def structures(draw):
    n = draw(st.integers(1, 6))
    atoms = []
    for _ in range(n):
        flags = draw(st.frozensets(st.sampled_from(FLAGS)))
        atoms.append(
            Atom(
                draw(st.sampled_from(["C", "N", "O", "S"])),
                (draw(coords), draw(coords), draw(coords)),
                draw(st.floats(-1, 1, allow_nan=False)),
                flags,
            )
        )
    return AtomicStructure("s1", tuple(atoms))


class TestNativeFormat:
    @given(structures())
    def test_round_trip(self, s):
        assert parse_structure(format_structure(s)) == s

    def test_flags_default_from_element(self):
        s = parse_structure("ATOM 1 O 0 0 0\nATOM 2 C 1 0 0 0.25\n")
        assert s.atoms[0].chem_flags == CHEM_TABLE["O"]
        assert s.atoms[1].partial_charge == 0.25

    def test_explicit_empty_flags(self):
        s = parse_structure("ATOM 1 O 0 0 0 0.0 -\n")
        assert s.atoms[0].chem_flags == frozenset()

    def test_comments_and_id(self):
        s = parse_structure("# header\nID prot7\n\nATOM 1 C 1 2 3  # trailing\n")
        assert s.id == "prot7" and len(s) == 1

    @pytest.mark.parametrize(
        "text,line",
        [
            ("ATOM 1 C 0 0\n", 1),
            ("ATOM 1 C 0 0 0\nATOM x C 0 0 0\n", 2),
            ("ATOM 1 C 0 zero 0\n", 1),
            ("ATOM 1 C 0 0 0 0.0 bogus\n", 1),
            ("\n\nHELLO\n", 3),
            ("ATOM 1 C 0 0 nan\n", 1),
        ],
    )
    def test_parse_errors_carry_line(self, text, line):
        with pytest.raises(ParseError) as err:
            parse_structure(text)
        assert err.value.line == line

    def test_empty_structure(self):
        with pytest.raises(DomainError):
            parse_structure("# nothing\n")

    def test_file_round_trip(self, tmp_path):
        s, _ = synth_protein(4, 40)
        path = tmp_path / "p.atoms"
        write_structure(s, path)
        back = read_structure(path)
        assert back == s


class TestPdb:
    def test_reads_first_model_atoms_only(self):
        s = read_pdb(PDB_TEXT)
        assert s.elements == ("N", "C", "O")
        assert s.atoms[0].position == (11.104, 6.134, -6.504)

    def test_hetatm_optional(self):
        assert len(read_pdb(PDB_TEXT, hetatm=True)) == 4

    def test_residue_refines_flags(self):
        s = read_pdb(PDB_TEXT)
        assert "hb_donor" in s.atoms[2].chem_flags

    def test_bad_columns(self):
        bad = "ATOM      1  N   ALA A   1      11.1x4   6.134  -6.504  1.00  0.00           N\n"
        with pytest.raises(ParseError):
            read_pdb(bad)


class TestTrajectory:
    def test_round_trip(self):
        s, _ = synth_protein(1, 30)
        traj = synth_trajectory(s, 3, frames=4, step_scale=0.2)
        back = parse_trajectory(format_trajectory(traj))
        assert back.frames == traj.frames and back.time_delta == traj.time_delta

    def test_frames_must_increase(self):
        text = "FRAME 2\nATOM 1 C 0 0 0\nFRAME 1\nATOM 1 C 0 0 0\n"
        with pytest.raises(ParseError) as err:
            parse_trajectory(text)
        assert err.value.line == 3

    def test_atom_count_mismatch(self):
        text = "FRAME 1\nATOM 1 C 0 0 0\nFRAME 2\nATOM 1 C 0 0 0\nATOM 2 C 1 0 0\n"
        with pytest.raises(DomainError):
            parse_trajectory(text)

    def test_element_sequence_fixed(self):
        a = AtomicStructure("a", (Atom("C", (0, 0, 0)),))
        b = AtomicStructure("a", (Atom("N", (0, 0, 0)),))
        with pytest.raises(DomainError):
            Trajectory("a", (a, b))

    @given(st.integers(0, 10**6), st.floats(0.0, 1.0))
    def test_synthetic_steps_are_bounded(self, seed, scale):
        s, _ = synth_protein(0, 20)
        traj = synth_trajectory(s, seed, frames=5, step_scale=scale)
        for a, b in zip(traj.frames, traj.frames[1:]):
            assert np.max(np.abs(a.coordinates - b.coordinates)) <= scale + 1e-12

    def test_zero_step_is_static(self):
        s, _ = synth_protein(0, 20)
        traj = synth_trajectory(s, 1, frames=3, step_scale=0.0)
        assert all(f.coordinates.tobytes() == s.coordinates.tobytes() for f in traj.frames)


class TestSynthetic:
    def test_deterministic(self):
        a, la = synth_protein(11, 60)
        b, lb = synth_protein(11, 60)
        assert a == b and la.mask == lb.mask

    def test_ligand_inside_grid_and_nonempty(self):
        for seed in range(5):
            s, lig = synth_protein(seed, 80)
            assert len(lig.mask) > 0
            assert lig.mask.spec == bounding_grid(s)

    @pytest.mark.parametrize(
        "spec",
        [PocketSpec(radius=0.0), PocketSpec(depth=5.0), PocketSpec(chemistry="bogus"), PocketSpec(informative="x")],
    )
    def test_invalid_geometry(self, spec):
        with pytest.raises(DomainError):
            synth_protein(0, 50, spec)

    def test_single_chemistry_marks_only_lining(self):
        s, _ = synth_protein(2, 50, PocketSpec(chemistry="single", informative="polar"))
        n_lining = round(0.35 * 50)
        polar = [i for i, a in enumerate(s.atoms) if "polar" in a.chem_flags]
        assert polar == list(range(n_lining))


class TestLigandRegion:
    def test_matches_voxel_loop(self):
        spec = GridSpec((0.0, 0.0, 0.0), 1.0, (6, 5, 7))
        lig = np.array([[2.2, 2.0, 3.1], [3.9, 1.4, 4.4]])
        region = ligand_region(lig, spec, radius=1.5)
        for idx in np.ndindex(spec.dims):
            c = spec.center(idx)
            near = any(math.dist(c, p) <= 1.5 for p in lig)
            home = any(spec.index_of(p) == idx for p in lig)
            assert region.mask.array[idx] == (near or home)

    def test_zero_radius_keeps_atom_voxels(self):
        spec = GridSpec((0.0, 0.0, 0.0), 1.0, (4, 4, 4))
        region = ligand_region([[1.2, 2.7, 0.1]], spec, radius=0.0)
        assert region.mask.indices().tolist() == [[1, 2, 0]]


class TestRotateStructure:
    def test_exact_and_reversible(self):
        s, lig = synth_protein(5, 60)
        spec = cube_grid(lig.mask.spec)
        for w in octahedral_group():
            r = rotate_structure(s, w, spec)
            expected = rotate_points(s.coordinates, w, spec.box_center)
            assert np.array_equal(r.coordinates, expected)
            assert all(spec.contains_point(p) for p in r.coordinates)

    def test_keeps_attributes(self):
        s, lig = synth_protein(5, 30)
        r = rotate_structure(s, QuarterTurn("y", 3), cube_grid(lig.mask.spec))
        assert r.elements == s.elements
        assert np.array_equal(r.charges, s.charges)
        assert np.array_equal(r.flag_bits, s.flag_bits)
