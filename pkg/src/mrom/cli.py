"""``mrom fom|train|rom|compare --config <path> [--out <dir>] [--workers N] [--deterministic]``.

Exit codes: 0 success, 2 configuration error, 3 numerical abort, 4 I/O or
format error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema

from mrom import archive as ar
from mrom import pipeline as pl
from mrom.errors import AlignmentError, ConfigError, FormatError, HoleError, NumericalError, OutOfDomainError
from mrom.metrics import FIELDS
from mrom.reference import ReferenceSpace
from mrom.rom import ApgConfig, select_local_basis

log = logging.getLogger("mrom")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

_num = {"type": "number"}
_int = {"type": "integer", "minimum": 0}
_pos_int = {"type": "integer", "minimum": 1}
_str = {"type": "string"}


def _obj(props: dict, required: tuple = ()) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False, "required": list(required)}


SCHEMA = _obj({
    "case": {"enum": ["tgv", "ldc", "cavity"]},
    "params": _obj({
        "n": _pos_int, "dx": _num, "Re": _num, "dt": _num, "t_final": _num, "snapshot_interval": _pos_int,
        "h_factor": _num, "ghost_layers": _pos_int, "ramp": {"enum": ["decay", "up"]},
        "pressure": {"enum": ["negative", "balanced"]},
        "band": {"type": "array", "items": _num, "minItems": 4, "maxItems": 4},
        "Ma": _num, "delta": _num, "chi": _num, "xi_shift": _num, "cfl": _num, "relax_steps": _int, "tau": _num,
        "ghost_normal": {"enum": ["mirror", "copy"]}, "wall_continuity": {"type": "boolean"},
    }),
    "out": _str,
    "workers": _pos_int,
    "deterministic": {"type": "boolean"},
    "fom": _obj({"archive": _str, "log": _str, "steps": _int, "include_initial": {"type": "boolean"}}),
    "train": _obj({
        "archives": {"type": "array", "items": _str, "minItems": 1},
        "M": _pos_int, "basis": _str, "spline": _str, "energy_csv": _str, "spline_order": _pos_int,
        "weight": {"enum": ["fixed", "volume"]}, "energy_rows": _pos_int,
    }),
    "rom": _obj({
        "projection": {"enum": ["gpod", "apg"]}, "basis": _str, "spline": _str, "archive": _str,
        "steps": _int, "block_scaling": {"type": "boolean"},
        "include_initial": {"type": "boolean"},
        "apg": _obj({"tau": _num, "eps": _num}),
        "registry": {"type": "array", "minItems": 1, "items": _obj(
            {"lo": _num, "hi": _num, "basis": _str, "spline": _str}, ("lo", "hi", "basis", "spline"))},
    }),
    "compare": _obj({
        "fom": _str,
        "rom": {"type": "object", "additionalProperties": _str, "minProperties": 1},
        "fields": {"type": "array", "items": {"enum": list(FIELDS)}, "minItems": 1},
        "slices": {"type": "array", "items": _obj(
            {"axis": {"enum": [0, 1]}, "coordinate": _num, "probes": _pos_int, "time": _num},
            ("axis", "coordinate"))},
    }),
}, ("case",))


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {where}: {exc.message}") from exc
    return cfg


def _fmt_t(t: float) -> str:
    return f"{t:.6g}"


def cmd_fom(cfg: dict, out: Path, workers: int) -> None:
    spec = pl.make_case(cfg["case"], cfg.get("params"))
    opts = cfg.get("fom", {})
    log.info("fom: case %s, dx=%g, dt=%g, %d steps", spec.name, spec.dx, spec.dt, spec.n_steps)
    run = pl.run_fom(spec, opts.get("steps"), opts.get("include_initial", False))
    ar.write_snapshots(pl.output_path(out, opts.get("archive"), "fom.mrom"), run.to_archive())
    ar.write_csv(pl.output_path(out, opts.get("log"), "fom_log.csv"),
                 ["step", "t", "max_density_deviation", "kinetic_energy", "wall_clock"], run.log_rows)
    if run.flagged_steps:
        log.warning("density guard band exceeded at %d step(s)", len(run.flagged_steps))


def cmd_train(cfg: dict, out: Path, workers: int) -> None:
    spec = pl.make_case(cfg["case"], cfg.get("params"))
    opts = cfg.get("train", {})
    paths = [pl.output_path(out, p, p) for p in opts.get("archives", ["fom.mrom"])]
    archives = [ar.read_snapshots(p) for p in paths]
    tr = pl.train(archives, spec, opts.get("M", 5), opts.get("spline_order", 3), opts.get("weight", "fixed"),
                  workers)
    ar.write_basis(pl.output_path(out, opts.get("basis"), "basis.mrob"), tr.basis, tr.ref.x_G, tr.ref.dx, tr.ref.h)
    ar.save_spline(pl.output_path(out, opts.get("spline"), "spline.npz"), tr.spline)
    ar.write_csv(pl.output_path(out, opts.get("energy_csv"), "energy.csv"),
                 ["M", "energy_reference", "energy_lagrangian"], tr.energy_rows(opts.get("energy_rows", 50)))
    log.info("train: %d snapshots, M=%d, energy(M)=%.10f", tr.reference.n_snapshots, tr.basis.M, tr.basis.energy())


def _load_spline_pair(basis_path: Path, spline_path: Path, spec):
    basis, x_G, dx, h = ar.read_basis(basis_path)
    ref = ReferenceSpace(x_G, spec.geometry, dx, h)
    return ar.load_spline(spline_path, ref, basis)


def cmd_rom(cfg: dict, out: Path, workers: int) -> None:
    spec = pl.make_case(cfg["case"], cfg.get("params"))
    opts = cfg.get("rom", {})
    if "registry" in opts:
        if spec.Re is None:
            raise ConfigError("a basis registry needs a case with a Reynolds number")
        entry = select_local_basis([((r["lo"], r["hi"]), r) for r in opts["registry"]], spec.Re)
        basis_path, spline_path = entry["basis"], entry["spline"]
    else:
        basis_path, spline_path = opts.get("basis", "basis.mrob"), opts.get("spline", "spline.npz")
    spline = _load_spline_pair(pl.output_path(out, basis_path, basis_path),
                               pl.output_path(out, spline_path, spline_path), spec)
    apg_opts = opts.get("apg", {})
    apg = ApgConfig(tau=apg_opts.get("tau", spec.tau), eps=apg_opts.get("eps", 1e-5))
    projection = opts.get("projection", "gpod")
    snaps, x0 = pl.run_rom(spec, spline, projection, apg, opts.get("block_scaling", False), opts.get("steps"),
                           opts.get("include_initial", False))
    ar.write_snapshots(pl.output_path(out, opts.get("archive"), f"rom_{projection}.mrom"),
                       pl.snapshots_archive(snaps, x0, spec))


def cmd_compare(cfg: dict, out: Path, workers: int) -> None:
    spec = pl.make_case(cfg["case"], cfg.get("params"))
    model = spec.model()
    opts = cfg.get("compare", {})
    fom = ar.read_snapshots(pl.output_path(out, opts.get("fom"), "fom.mrom"))
    roms = {label: ar.read_snapshots(pl.output_path(out, p, p))
            for label, p in opts.get("rom", {"gpod": "rom_gpod.mrom"}).items()}
    for label, arc in roms.items():
        pl.check_aligned(fom, arc, label)
    labels = list(roms)
    for field in opts.get("fields", ["velocity_norm", "pressure"]):
        comps = [pl.compare_archives(fom, roms[lb], field, model.rho0, model.c0) for lb in labels]
        rows = [[t] + [c.discrepancy[k] for c in comps] for k, t in enumerate(fom.times)]
        ar.write_csv(out / f"discrepancy_{spec.name}_{field}.csv", ["t"] + labels, rows)
        for sl in opts.get("slices", []):
            t = sl.get("time", float(fom.times[-1]))
            k = int(abs(fom.times - t).argmin())
            args = (field, spec, sl["axis"], sl["coordinate"], sl.get("probes", 50))
            base = pl.archive_slice(fom, k, *args)
            cols = [base[:, 0], base[:, 1]] + [pl.archive_slice(roms[lb], k, *args)[:, 1] for lb in labels]
            ar.write_csv(out / f"slice_{spec.name}_{field}_{_fmt_t(fom.times[k])}.csv",
                         ["coord", "value_fom"] + [f"value_rom_{lb}" for lb in labels], zip(*cols))


COMMANDS = {"fom": cmd_fom, "train": cmd_train, "rom": cmd_rom, "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mrom", description="Meshless SPH solver and reference-space reduced models.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", help="output directory (default: config 'out' or the current directory)")
    p.add_argument("--workers", type=int, help="worker threads (default: $MROM_WORKERS or 1)")
    p.add_argument("--deterministic", action="store_true", help="force serial, bit-reproducible execution")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _workers(args, cfg) -> int:
    if args.deterministic or cfg.get("deterministic"):
        return 1
    if args.workers is not None:
        n = args.workers
    elif "workers" in cfg:
        n = cfg["workers"]
    else:
        env = os.environ.get("MROM_WORKERS", "1")
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError(f"MROM_WORKERS must be an integer, got {env!r}") from exc
    if n < 1:
        raise ConfigError(f"worker count must be >= 1, got {n}")
    return n


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        out = Path(args.out or cfg.get("out", "."))
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out, _workers(args, cfg))
    except ConfigError as exc:
        print(f"mrom: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, HoleError, OutOfDomainError) as exc:
        step = getattr(exc, "step", None)
        where = f" (step {step})" if step is not None else ""
        print(f"mrom: numerical abort{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FormatError, AlignmentError, OSError) as exc:
        print(f"mrom: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except LookupError as exc:
        print(f"mrom: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
