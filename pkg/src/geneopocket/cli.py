"""Batch front end: ``geneopocket <command> [--config FILE] [--preset NAME] [--key value ...]``.

Settings resolve in increasing priority: command defaults, preset, config
file, command-line flags. Config files hold ``key = value`` lines with ``#``
comments. Every run writes a JSON report holding the tool version, the
resolved settings and SHA-256 digests of its inputs; no timestamps or host
details are recorded, so reruns are byte-identical. The worker count is left
out of the recorded settings because it cannot change any result.

Exit codes: 0 success, 2 usage or unreadable input, 3 parse error,
4 domain error, 5 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import functools
import hashlib
import json
import math
import sys
from importlib import resources
from pathlib import Path

from geneopocket import __version__
from geneopocket._parallel import ordered_map
from geneopocket.errors import DomainError, OptimizationError, ParseError
from geneopocket.geneo import INITIAL_GUESS, GeneoDetector, GridConfig, format_params, parse_params, predict
from geneopocket.grid import QuarterTurn
from geneopocket.ingest import (
    PocketSpec,
    format_structure,
    ligand_region,
    parse_structure,
    read_pdb,
    read_trajectory,
    synth_protein,
    synth_trajectory,
)
from geneopocket.potentials import PotentialConfig
from geneopocket.stats import (
    format_equivariance_table,
    format_robustness_table,
    format_samples_long,
    format_series_long,
    format_summary,
    frame_overlap_series,
    mean_overlap_test,
    overlap_rmsd_association,
    proportions_from_overlaps,
    rotation_overlaps,
    sensitivity,
)
from geneopocket.train import TrainConfig, fit, format_trace

EXECUTION_ONLY = frozenset({"jobs"})
EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_DOMAIN, EXIT_NUMERIC = 0, 2, 3, 4, 5


# --- settings ---------------------------------------------------------------------


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _paths(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _opt_str(text: str) -> str:
    return text.strip()


COMMON = {
    "seed": (int, 0, "master seed"),
    "jobs": (int, 1, "worker processes"),
    "spacing": (float, 1.0, "voxel edge in Angstrom"),
    "padding": (float, 5.0, "clearance around atoms in Angstrom"),
    "connectivity": (int, 6, "voxel adjacency for pockets (6 or 26)"),
    "r0": (float, 1.7, "potential length scale in Angstrom"),
    "clip": (float, 10.0, "electrostatic clip"),
}
SYNTH = {
    "n_proteins": (int, 8, "synthetic proteins when no files are given"),
    "n_atoms": (int, 100, "atoms per synthetic protein"),
    "chemistry": (str, "mixed", "synthetic chemistry: mixed, decoy or single"),
    "informative": (str, "lipophilic", "flag carried by the cavity under chemistry=single"),
}
FIT = {
    "max_iters": (int, 40, "Nelder-Mead iterations"),
    "tolerance": (float, 1e-4, "Nelder-Mead x and f tolerance"),
    "step": (float, 1.0, "initial simplex edge in the search space"),
    "initial": (str, "initial", "starting params: 'initial', 'table1' or a file"),
}

SCHEMAS = {
    "predict": {
        "structure": (str, "", "structure file (native format, or .pdb)"),
        "params": (str, "table1", "params: 'table1', 'initial' or a file"),
        "cube": (_bool, False, "use a cubic grid"),
        **COMMON,
    },
    "train": {
        "data": (_opt_str, "", "directory of <id>.atoms + <id>.ligand.atoms pairs"),
        "ligand_radius": (float, 2.0, "ligand dilation in Angstrom"),
        **FIT,
        **SYNTH,
        **COMMON,
        "chemistry": (str, "single", SYNTH["chemistry"][2]),
        "n_atoms": (int, 80, SYNTH["n_atoms"][2]),
    },
    "sensitivity": {
        "pool_size": (int, 12, "synthetic pool size"),
        "subset_size": (int, 5, "complexes per repetition"),
        "repetitions": (int, 8, "training repetitions"),
        "ligand_radius": (float, 2.0, "ligand dilation in Angstrom"),
        **FIT,
        **SYNTH,
        **COMMON,
        "chemistry": (str, "single", SYNTH["chemistry"][2]),
        "n_atoms": (int, 80, SYNTH["n_atoms"][2]),
    },
    "equivariance": {
        "structures": (_paths, (), "comma-separated structure files"),
        "params": (str, "table1", "params: 'table1', 'initial' or a file"),
        "taus": (_floats, (0.5, 0.75, 0.95, 0.99), "overlap thresholds"),
        "rotation": (str, "x1", "quarter turn as <axis><count>, e.g. y3"),
        "ranks": (_ints, (1, 2, 3), "pocket ranks"),
        "method": (str, "geneopocket", "method tag in the table"),
        **SYNTH,
        **COMMON,
        "n_proteins": (int, 20, SYNTH["n_proteins"][2]),
    },
    "robustness": {
        "trajectories_a": (_paths, (), "trajectory files for setting a"),
        "trajectories_b": (_paths, (), "trajectory files for setting b"),
        "params": (str, "table1", "params: 'table1', 'initial' or a file"),
        "frames": (int, 30, "frames used per trajectory (T)"),
        "step_a": (float, 0.5, "synthetic step scale for setting a"),
        "step_b": (float, 0.05, "synthetic step scale for setting b"),
        **SYNTH,
        **COMMON,
        "n_proteins": (int, 3, SYNTH["n_proteins"][2]),
    },
}

PRESETS = {
    "table1": {"params": "table1", "initial": "table1"},
    "equi-tau95": {"taus": "0.95"},
}


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ParseError(f"expected 'key = value', got {line!r}", lineno)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def resolve(command: str, preset: str | None, file_values: dict[str, str], flags: dict[str, str]) -> dict:
    schema = SCHEMAS[command]
    raw: dict[str, str] = {}
    if preset is not None:
        raw.update({k: v for k, v in PRESETS[preset].items() if k in schema})
    unknown = sorted(set(file_values) - set(schema))
    if unknown:
        raise ParseError(f"unknown settings for '{command}': {', '.join(unknown)}")
    raw.update(file_values)
    raw.update(flags)
    resolved = {}
    for key, (conv, default, _) in schema.items():
        if key in raw:
            try:
                resolved[key] = conv(raw[key])
            except ValueError as exc:
                raise ParseError(f"setting {key}: {exc}") from None
        else:
            resolved[key] = default
    if resolved["jobs"] < 1:
        raise DomainError("jobs must be >= 1")
    return resolved


# --- inputs -------------------------------------------------------------------------


class Inputs:
    """Collects SHA-256 digests of everything a run reads."""

    def __init__(self):
        self.digests: dict[str, str] = {}

    def read_text(self, path) -> str:
        data = Path(path).read_bytes()
        self.digests[str(path)] = hashlib.sha256(data).hexdigest()
        return data.decode("utf-8")

    def note(self, name: str, text: str) -> None:
        self.digests[name] = hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_params(spec: str, inputs: Inputs):
    if spec == "initial":
        inputs.note("params:initial", format_params(INITIAL_GUESS))
        return INITIAL_GUESS
    if spec == "table1":
        text = resources.files("geneopocket").joinpath("data/table1.params").read_text(encoding="utf-8")
        inputs.note("params:table1", text)
        return parse_params(text)
    return parse_params(inputs.read_text(spec))


def load_structure(path: str, inputs: Inputs):
    text = inputs.read_text(path)
    stem = Path(path).stem
    if path.lower().endswith(".pdb"):
        return read_pdb(text, stem)
    return parse_structure(text, stem)


def _pocket_spec(cfg) -> PocketSpec:
    return PocketSpec(chemistry=cfg["chemistry"], informative=cfg["informative"])


def synth_set(cfg, inputs: Inputs, count: int, ligand_radius: float = 2.0):
    out = []
    for k in range(count):
        s, lig = synth_protein(
            cfg["seed"] + k, cfg["n_atoms"], _pocket_spec(cfg), cfg["spacing"], cfg["padding"], ligand_radius
        )
        inputs.note(f"synthetic:{s.id}", format_structure(s))
        out.append((s, lig))
    return out


def load_trainset(cfg, inputs: Inputs):
    if not cfg["data"]:
        return synth_set(cfg, inputs, cfg["n_proteins"], cfg["ligand_radius"])
    root = Path(cfg["data"])
    pairs = []
    for path in sorted(root.glob("*.atoms")):
        if path.name.endswith(".ligand.atoms"):
            continue
        lig_path = path.with_name(path.stem + ".ligand.atoms")
        structure = load_structure(str(path), inputs)
        ligand = load_structure(str(lig_path), inputs)
        spec = GridConfig(cfg["spacing"], cfg["padding"]).grid_for(structure)
        pairs.append((structure, ligand_region(ligand.coordinates, spec, cfg["ligand_radius"])))
    if not pairs:
        raise DomainError(f"no <id>.atoms structures found in {root}")
    return pairs


def detector_for(cfg, params) -> GeneoDetector:
    return GeneoDetector(
        params,
        GridConfig(cfg["spacing"], cfg["padding"], cube=cfg.get("cube", False)),
        PotentialConfig(cfg["r0"], cfg["clip"]),
        cfg["connectivity"],
    )


def parse_rotation(text: str) -> QuarterTurn:
    text = text.strip().lower()
    if len(text) < 2 or text[0] not in "xyz" or not text[1:].isdigit():
        raise ParseError(f"rotation must look like x1 or z3, got {text!r}")
    return QuarterTurn(text[0], int(text[1:]))


# --- reports ------------------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def report_text(command: str, cfg: dict, inputs: Inputs, results: dict) -> str:
    doc = {
        "tool": "geneopocket",
        "version": __version__,
        "command": command,
        "config": {k: v for k, v in cfg.items() if k not in EXECUTION_ONLY},
        "inputs": dict(sorted(inputs.digests.items())),
        "results": results,
    }
    return json.dumps(_clean(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


# --- commands -----------------------------------------------------------------------


def cmd_predict(cfg: dict, out: Path) -> None:
    inputs = Inputs()
    if not cfg["structure"]:
        raise DomainError("predict needs --structure")
    structure = load_structure(cfg["structure"], inputs)
    params = load_params(cfg["params"], inputs)
    det = detector_for(cfg, params)
    pred = predict(structure, params, None, det.grid_config, det.potential_config, det.connectivity)
    _write(out, report_text("predict", cfg, inputs, pred.to_report()))


def _fit_config(cfg, inputs, trainset) -> TrainConfig:
    return TrainConfig(
        trainset=trainset,
        initial_params=load_params(cfg["initial"], inputs),
        max_iters=cfg["max_iters"],
        tolerance=cfg["tolerance"],
        seed=cfg["seed"],
        step=cfg["step"],
        potential_config=PotentialConfig(cfg["r0"], cfg["clip"]),
    )


def cmd_train(cfg: dict, out: Path) -> None:
    inputs = Inputs()
    trainset = load_trainset(cfg, inputs)
    result = fit(_fit_config(cfg, inputs, trainset))
    _write(out / "fitted.params", format_params(result.params))
    _write(out / "trace.csv", format_trace(result))
    results = {
        "initial_objective": result.initial_objective,
        "final_objective": result.final_objective,
        "iterations": result.iterations,
        "evaluations": result.evaluations,
        "params": dict(zip(result.params.names(), result.params.as_vector().tolist())),
    }
    _write(out / "report.json", report_text("train", cfg, inputs, results))


def cmd_sensitivity(cfg: dict, out: Path) -> None:
    inputs = Inputs()
    pool = synth_set(cfg, inputs, cfg["pool_size"], cfg["ligand_radius"])
    base = _fit_config(cfg, inputs, pool)
    rep = sensitivity(base, cfg["repetitions"], pool, cfg["subset_size"], cfg["seed"], cfg["jobs"])
    _write(out / "samples.csv", format_samples_long(rep))
    _write(out / "summary.csv", format_summary(rep))
    results = {
        "repetitions": rep.repetitions,
        "failed": list(rep.failed),
        "subsets": [list(s) for s in rep.subsets],
        "objectives": list(rep.objectives),
        "summaries": {k: dataclasses.asdict(v) for k, v in rep.summaries.items()},
    }
    _write(out / "report.json", report_text("sensitivity", cfg, inputs, results))


def cmd_equivariance(cfg: dict, out: Path) -> None:
    inputs = Inputs()
    if cfg["structures"]:
        proteins = [load_structure(p, inputs) for p in cfg["structures"]]
    else:
        proteins = [s for s, _ in synth_set(cfg, inputs, cfg["n_proteins"])]
    det = detector_for(cfg, load_params(cfg["params"], inputs))
    rotation = parse_rotation(cfg["rotation"])
    ranks = cfg["ranks"]
    overlaps = rotation_overlaps(det, proteins, rotation, ranks, cfg["spacing"], cfg["padding"], cfg["jobs"])
    tables = {}
    for tau in cfg["taus"]:
        est = proportions_from_overlaps(overlaps, tau, ranks, cfg["method"])
        name = f"equivariance_tau{tau!r}.csv"
        _write(out / name, format_equivariance_table(est))
        tables[name] = [dataclasses.asdict(e) for e in est]
    results = {
        "overlaps": {p.id: list(row) for p, row in zip(proteins, overlaps)},
        "tables": tables,
    }
    _write(out / "report.json", report_text("equivariance", cfg, inputs, results))


def _robustness_item(det, frames, traj):
    return frame_overlap_series(det, traj, min(frames, len(traj.frames)))


def cmd_robustness(cfg: dict, out: Path) -> None:
    inputs = Inputs()
    if cfg["trajectories_a"] or cfg["trajectories_b"]:
        if len(cfg["trajectories_a"]) != len(cfg["trajectories_b"]):
            raise DomainError("trajectories_a and trajectories_b must pair up")
        trajs_a = [read_trajectory_digest(p, inputs) for p in cfg["trajectories_a"]]
        trajs_b = [read_trajectory_digest(p, inputs) for p in cfg["trajectories_b"]]
    else:
        bases = [s for s, _ in synth_set(cfg, inputs, cfg["n_proteins"])]
        trajs_a = [synth_trajectory(s, cfg["seed"] + k, cfg["frames"], cfg["step_a"]) for k, s in enumerate(bases)]
        trajs_b = [synth_trajectory(s, cfg["seed"] + k, cfg["frames"], cfg["step_b"]) for k, s in enumerate(bases)]
    det = detector_for(cfg, load_params(cfg["params"], inputs))
    work = trajs_a + trajs_b
    series = ordered_map(functools.partial(_robustness_item, det, cfg["frames"]), work, cfg["jobs"])
    sa, sb = series[: len(trajs_a)], series[len(trajs_a):]

    rows, assoc = [], {}
    for a, b in zip(sa, sb):
        rows.append((a.protein_id, mean_overlap_test(a.nonmissing(), b.nonmissing())))
        assoc[a.protein_id] = {"a": overlap_rmsd_association(a), "b": overlap_rmsd_association(b)}
    _write(out / "robustness.csv", format_robustness_table(rows))
    labelled = [("a", s) for s in sa] + [("b", s) for s in sb]
    _write(out / "series.csv", format_series_long(labelled))
    results = {
        "tests": {pid: dataclasses.asdict(r) for pid, r in rows},
        "association": assoc,
        "missing": {f"{lab}:{s.protein_id}": len(s.overlaps) - len(s.nonmissing()) for lab, s in labelled},
    }
    _write(out / "report.json", report_text("robustness", cfg, inputs, results))


def read_trajectory_digest(path: str, inputs: Inputs):
    inputs.read_text(path)
    return read_trajectory(path)


COMMANDS = {
    "predict": cmd_predict,
    "train": cmd_train,
    "sensitivity": cmd_sensitivity,
    "equivariance": cmd_equivariance,
    "robustness": cmd_robustness,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geneopocket", description="Volumetric pocket detection and its analyses.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, schema in SCHEMAS.items():
        p = sub.add_parser(name, help=COMMANDS[name].__name__.replace("cmd_", ""))
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("--preset", choices=sorted(PRESETS))
        out_help = "report file" if name == "predict" else "output directory"
        p.add_argument("--out", required=True, help=out_help)
        for key, (_, default, help_text) in schema.items():
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None, help=f"{help_text} (default: {default})")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_values = {}
        if args.config:
            file_values = parse_config_text(Path(args.config).read_text(encoding="utf-8"))
        flags = {k: v for k, v in vars(args).items() if k in SCHEMAS[args.command] and v is not None}
        cfg = resolve(args.command, args.preset, file_values, flags)
        COMMANDS[args.command](cfg, Path(args.out))
    except OSError as exc:
        print(f"geneopocket: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"geneopocket: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OptimizationError as exc:
        print(f"geneopocket: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, ValueError) as exc:
        print(f"geneopocket: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
