"""Command-line interface.

One executable, eight subcommands: gen, train-teacher, distill, eval,
compare, ablate, diagnose, geo. Configuration comes from defaults, then an
optional JSON config file (flat field names), then command-line flags, in
that order of increasing precedence. Every artifact directory receives a
manifest.json holding the effective configuration, the seed and sha256
checksums of the written files; re-running the same command reproduces the
checksums byte for byte.

Exit codes: 0 success, 1 usage/configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

from . import data as data_mod
from . import diagnostics as diag_mod
from . import distill as distill_mod
from . import geo as geo_mod
from .losses import LossConfig
from .model import forward, load_model, save_model
from .numerics import SeededRng, take_rows

_GEN_FIELDS = {
    "classes": int, "dim": int, "per_class": int, "corruption_rate": float,
    "corruption_amplitude": float, "map_seed": int, "train_fraction": float,
}
_TRAIN_FIELDS = {
    "epochs": int, "batch_size": int, "lr_init": float, "lr_final": float,
    "momentum": float, "weight_decay": float, "seed": int,
    "loss_variant": str, "ablation_mask": str,
}
_LOSS_FIELDS = {"lambda": float, "gamma": float, "tau": float, "sigma": float,
                "eps": float}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse would exit(2); the CLI contract reserves 2 for runtime errors
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def main(argv=None) -> int:
    return run(sys.argv[1:] if argv is None else argv)


def run(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        handler, cfg = _prepare(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"run 'cmkd {argv[0] if argv else ''} --help' for the valid flags",
              file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if not exc.code else 1
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return handler(args, cfg)
    except (_UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


# -- parser ------------------------------------------------------------------------


def _add_config_flags(p, tables):
    p.add_argument("--config", help="JSON config file (flat field names; "
                                    "a manifest.json is accepted too)")
    for table in tables:
        for name, typ in table.items():
            dest = "lam" if name == "lambda" else name
            p.add_argument(f"--{name}", dest=dest, type=typ, default=None)


def _build_parser():
    parser = _Parser(prog="cmkd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[], help="generate a synthetic paired dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    _add_config_flags(p, [{k: v for k, v in _GEN_FIELDS.items()}])

    for name in ("train-teacher", "distill"):
        p = sub.add_parser(name)
        p.add_argument("--data", required=True)
        p.add_argument("--out", required=True)
        if name == "distill":
            p.add_argument("--teacher", required=True)
            p.add_argument("--loss", dest="loss_variant_alias", default=None,
                           help="alias for --loss_variant")
        _add_config_flags(p, [_TRAIN_FIELDS, _LOSS_FIELDS])

    p = sub.add_parser("eval")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--modality", default="m1", choices=("m1", "m2"))

    for name in ("compare", "ablate"):
        p = sub.add_parser(name)
        p.add_argument("--data", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--seeds", type=int, default=5)
        p.add_argument("--jobs", type=int, default=1)
        if name == "compare":
            p.add_argument("--variants",
                           default="ce_only,kd,fitnets,gram,sem,dcm,full")
        p.add_argument("--save-models", action="store_true")
        _add_config_flags(p, [_TRAIN_FIELDS, _LOSS_FIELDS])

    p = sub.add_parser("diagnose")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--modality", default="m1", choices=("m1", "m2"))
    p.add_argument("--sigma", type=float, default=1.0)

    p = sub.add_parser("geo")
    p.add_argument("--out", required=True)
    p.add_argument("--box", help="x,y,w,h in pixels")
    p.add_argument("--batch", help="CSV of detections with columns x,y,w,h")
    p.add_argument("--image", required=True, help="X,Y pixels")
    p.add_argument("--range", required=True, type=float, dest="range_m")
    p.add_argument("--radar", required=True, help="lat,lon degrees")
    p.add_argument("--optics", required=True, help="lat,lon degrees")
    p.add_argument("--north_offset", type=float, default=0.0)
    p.add_argument("--height", type=float, required=True)
    p.add_argument("--ccd", type=float, required=True)
    p.add_argument("--f_min", type=float, required=True)
    p.add_argument("--beam", type=float, default=0.0)
    p.add_argument("--mode", default="tan", choices=("tan", "literal"))
    return parser


def _prepare(args):
    handlers = {
        "gen": _cmd_gen, "train-teacher": _cmd_train_teacher,
        "distill": _cmd_distill, "eval": _cmd_eval, "compare": _cmd_compare,
        "ablate": _cmd_ablate, "diagnose": _cmd_diagnose, "geo": _cmd_geo,
    }
    handler = handlers[args.command]
    cfg = None
    if args.command == "gen":
        cfg = _assemble_gen(args)
    elif args.command in ("train-teacher", "distill", "compare", "ablate"):
        cfg = _assemble_training(args)
    return handler, cfg


def _load_config_file(path):
    if path is None:
        return {}
    if not os.path.exists(path):
        raise _UsageError(f"config file not found: {path}")
    with open(path) as fh:
        doc = json.load(fh)
    if "effective_config" in doc:  # a manifest
        doc = doc["effective_config"]
    return doc


def _assemble_gen(args):
    file_cfg = _load_config_file(args.config)
    values = {}
    for name in _GEN_FIELDS:
        if getattr(args, name, None) is not None:
            values[name] = getattr(args, name)
        elif name in file_cfg and file_cfg[name] is not None:
            values[name] = file_cfg[name]
    spec = data_mod.GenSpec(**values).validate()
    seed = args.seed if args.seed is not None else file_cfg.get("seed", 0)
    return spec, int(seed)


def _assemble_training(args):
    file_cfg = _load_config_file(args.config)

    def pick(name, dest=None):
        dest = dest or name
        v = getattr(args, dest, None)
        if v is not None:
            return v
        return file_cfg.get(name)

    kwargs = {}
    for name in ("epochs", "batch_size", "lr_init", "lr_final", "momentum",
                 "weight_decay", "seed"):
        v = pick(name)
        if v is not None:
            kwargs[name] = v
    variant = getattr(args, "loss_variant_alias", None) or pick("loss_variant")
    if variant is not None:
        kwargs["loss_variant"] = variant
    mask = pick("ablation_mask")
    if mask:
        if isinstance(mask, str):
            mask = [m for m in mask.split(",") if m]
        kwargs["ablation_mask"] = frozenset(mask)

    loss_kwargs = {}
    for name in _LOSS_FIELDS:
        dest = "lam" if name == "lambda" else name
        v = pick(name, dest)
        if v is not None:
            loss_kwargs[dest] = v
    kwargs["loss"] = LossConfig(**loss_kwargs)
    return distill_mod.TrainingConfig(**kwargs).validate()


# -- manifest -----------------------------------------------------------------------


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir, command, effective, seed, unchecksummed=()):
    artifacts = {}
    skipped = []
    for root, _, files in os.walk(out_dir):
        for name in sorted(files):
            path = os.path.join(root, name)
            rel = os.path.relpath(path, out_dir)
            if rel == "manifest.json":
                continue
            if name in unchecksummed:
                skipped.append(rel)
                continue
            artifacts[rel] = _sha256(path)
    doc = {"command": command, "effective_config": effective, "seed": seed,
           "artifacts": artifacts, "unchecksummed": sorted(skipped)}
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _summary(**kv):
    print(" ".join(f"{k}={v}" for k, v in kv.items()))


# -- subcommands ----------------------------------------------------------------------


def _cmd_gen(args, cfg):
    spec, seed = cfg
    ds = data_mod.generate(spec, SeededRng(seed))
    amplitude = spec.corruption_amplitude
    if amplitude is None:
        amplitude = data_mod.resolved_amplitude(spec, seed)
    os.makedirs(args.out, exist_ok=True)
    data_mod.save_dataset(ds, args.out, spec=spec, seed=seed, amplitude=amplitude)
    effective = dict(spec.__dict__)
    effective["seed"] = seed
    _write_manifest(args.out, "gen", effective, seed)
    _summary(status="ok", command="gen", out=args.out, rows=ds.x_m1.rows,
             classes=spec.classes, seed=seed)
    return 0


def _cmd_train_teacher(args, cfg):
    ds = data_mod.load_dataset(args.data)
    t0 = time.perf_counter()
    params, report = distill_mod.train_teacher(ds, cfg)
    wall = time.perf_counter() - t0
    os.makedirs(args.out, exist_ok=True)
    save_model(params, os.path.join(args.out, "teacher.json"))
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        fh.write(report.to_json())
    _write_manifest(args.out, "train-teacher", report.config, cfg.seed)
    _summary(status="ok", command="train-teacher", out=args.out,
             train_acc=report.train_acc, test_acc=report.test_acc,
             seed=cfg.seed, wall_s=round(wall, 3))
    return 0


def _cmd_distill(args, cfg):
    ds = data_mod.load_dataset(args.data)
    teacher = load_model(args.teacher)
    t0 = time.perf_counter()
    params, report = distill_mod.distill_student(ds, teacher, cfg)
    wall = time.perf_counter() - t0
    os.makedirs(args.out, exist_ok=True)
    save_model(params, os.path.join(args.out, "student.json"))
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        fh.write(report.to_json())
    _write_manifest(args.out, "distill", report.config, cfg.seed)
    _summary(status="ok", command="distill", out=args.out,
             variant=cfg.loss_variant, train_acc=report.train_acc,
             test_acc=report.test_acc, seed=cfg.seed, wall_s=round(wall, 3))
    return 0


def _cmd_eval(args, _cfg):
    ds = data_mod.load_dataset(args.data)
    params = load_model(args.model)
    acc = distill_mod.evaluate(params, ds, args.split, args.modality)
    _summary(status="ok", command="eval", split=args.split,
             modality=args.modality, accuracy=acc)
    return 0


def _cmd_compare(args, cfg):
    ds = data_mod.load_dataset(args.data)
    variants = [v for v in args.variants.split(",") if v]
    rows, aggregate = distill_mod.compare(ds, cfg, variants, args.seeds,
                                          jobs=args.jobs, out_dir=args.out)
    _write_manifest(args.out, "compare", cfg.echo(), cfg.seed,
                    unchecksummed=("summary.csv",))
    best = max(aggregate, key=lambda k: aggregate[k]["mean"])
    _summary(status="ok", command="compare", out=args.out, runs=len(rows),
             best=best, best_mean=aggregate[best]["mean"])
    return 0


def _cmd_ablate(args, cfg):
    ds = data_mod.load_dataset(args.data)
    rows, aggregate = distill_mod.ablate(ds, cfg, args.seeds, jobs=args.jobs,
                                         out_dir=args.out)
    _write_manifest(args.out, "ablate", cfg.echo(), cfg.seed,
                    unchecksummed=("summary.csv",))
    _summary(status="ok", command="ablate", out=args.out, runs=len(rows),
             full_mean=aggregate["full"]["mean"])
    return 0


def _cmd_diagnose(args, _cfg):
    ds = data_mod.load_dataset(args.data)
    params = load_model(args.model)
    idx = ds.indices(args.split)
    x = ds.x_m1 if args.modality == "m1" else ds.x_m2
    trace = forward(params, take_rows(x, idx))
    report = diag_mod.diagnose(trace.z, trace.t, sigma=args.sigma, metadata={
        "model": os.path.basename(args.model), "split": args.split,
        "modality": args.modality, "sigma": args.sigma, "rows": len(idx),
        "intermediate": "encoder tap (raw)"})
    os.makedirs(args.out, exist_ok=True)
    diag_mod.write_report(report, args.out)
    _write_manifest(args.out, "diagnose",
                    {"split": args.split, "modality": args.modality,
                     "sigma": args.sigma, "model": args.model}, None)
    _summary(status="ok", command="diagnose", out=args.out,
             offdiag_mass=report.offdiag_mass, uniformity=report.uniformity)
    return 0


def _parse_pair(text, what):
    parts = text.split(",")
    if len(parts) != 2:
        raise _UsageError(f"{what} must be two comma-separated numbers, got {text!r}")
    return float(parts[0]), float(parts[1])


def _cmd_geo(args, _cfg):
    ix, iy = _parse_pair(args.image, "--image")
    spec = geo_mod.RadarImageSpec(int(ix), int(iy), args.range_m)
    radar = geo_mod.LatLon(*_parse_pair(args.radar, "--radar"))
    optics = geo_mod.LatLon(*_parse_pair(args.optics, "--optics"))
    cfg = geo_mod.OpticsConfig(args.north_offset, args.height, args.ccd,
                               args.f_min, args.beam)
    boxes = []
    if args.box:
        parts = args.box.split(",")
        if len(parts) != 4:
            raise _UsageError(f"--box must be x,y,w,h, got {args.box!r}")
        boxes.append(geo_mod.BoundingBox(*(float(p) for p in parts)))
    elif args.batch:
        if not os.path.exists(args.batch):
            raise _UsageError(f"detections file not found: {args.batch}")
        with open(args.batch) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                cells = line.split(",")
                if lineno == 1 and not _is_float(cells[0]):
                    continue
                if len(cells) < 4:
                    raise _UsageError(
                        f"{args.batch}:{lineno}: need 4 columns x,y,w,h")
                boxes.append(geo_mod.BoundingBox(*(float(c) for c in cells[:4])))
    else:
        raise _UsageError("geo needs either --box or --batch")

    columns = ["a1_deg", "d1_m", "target_lat", "target_lon", "a2_deg", "d2_m",
               "pan_deg", "tilt_deg", "width_m", "zoom"]
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "pointing.csv")
    with open(out_path, "w") as fh:
        fh.write("x,y,w,h," + ",".join(columns) + "\n")
        for box in boxes:
            sol = geo_mod.solve_pointing(box, spec, radar, optics, cfg,
                                         width_mode=args.mode)
            row = [box.x, box.y, box.w, box.h]
            row += [sol.intermediates[c] for c in columns]
            fh.write(",".join(repr(v) for v in row) + "\n")
    _write_manifest(args.out, "geo", {
        "image": args.image, "range": args.range_m, "radar": args.radar,
        "optics": args.optics, "north_offset": args.north_offset,
        "height": args.height, "ccd": args.ccd, "f_min": args.f_min,
        "beam": args.beam, "mode": args.mode}, None)
    _summary(status="ok", command="geo", out=out_path, detections=len(boxes))
    return 0


def _is_float(cell):
    try:
        float(cell)
        return True
    except ValueError:
        return False


if __name__ == "__main__":
    sys.exit(main())
