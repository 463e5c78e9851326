"""
Command-line entry point.

    kinepose generate SPEC.json OUT_DIR
    kinepose train --data DIR --out DIR [--config CFG.json] [--set key=value ...]
    kinepose refine CHECKPOINT IN.pose OUT.pose [--stride S]
    kinepose eval PRED.pose GT.pose [--json] [--csv FRAMES.csv]
    kinepose inspect PATH

Exit codes: 0 success, 1 I/O error, 2 validation error, 3 numerical failure.
"""

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import posefile
from .config import apply_overrides, parse_value, to_dict, train_config_from_dict
from .data import SyntheticSpec, generate
from .errors import BoundsError, ConfigError, DimensionError, NumericalError, PoseFileError
from .inference import refine_sequence
from .metrics import PCK_THRESHOLDS, evaluate, format_report, second_difference
from .trainer import load_checkpoint, model_from_checkpoint, train

EXIT_OK, EXIT_IO, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("kinepose")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def _write_json(path, data):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_pose(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    return posefile.load(path)


# generate


def cmd_generate(args):
    data = _read_json(args.spec)
    for item in args.set or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        data[key.strip()] = parse_value(raw)
    spec = SyntheticSpec.from_dict(data)
    pairs = generate(spec)
    os.makedirs(args.out_dir, exist_ok=True)
    entries = []
    for clean, noisy in pairs:
        c_name, n_name = f"{clean.seq_id}.clean.pose", f"{clean.seq_id}.corrupted.pose"
        posefile.save(clean, os.path.join(args.out_dir, c_name))
        posefile.save(noisy, os.path.join(args.out_dir, n_name))
        entries.append({"id": clean.seq_id, "clean": c_name, "corrupted": n_name, "frames": clean.frames})
    manifest = {"version": 1, "kind": "synthetic", "spec": to_dict(spec), "sequences": entries}
    _write_json(os.path.join(args.out_dir, "manifest.json"), manifest)
    frames = sum(e["frames"] for e in entries)
    print(f"wrote {len(entries)} sequence pairs ({2 * len(entries)} files, {frames} frames each side) to {args.out_dir}")
    return EXIT_OK


# train


def load_dataset(data_dir):
    manifest = _read_json(os.path.join(data_dir, "manifest.json"))
    pairs = []
    for e in manifest.get("sequences", []):
        clean = _load_pose(os.path.join(data_dir, e["clean"]))
        noisy = _load_pose(os.path.join(data_dir, e["corrupted"]))
        if clean.coords.shape != noisy.coords.shape:
            raise DimensionError(f"sequence {e['id']}: clean {clean.coords.shape} vs corrupted {noisy.coords.shape}")
        pairs.append((clean, noisy))
    if not pairs:
        raise ConfigError(f"{data_dir}: manifest lists no sequences")
    return pairs


def effective_train_config(config_path, overrides, K=None, D=None):
    data = _read_json(config_path) if config_path else {}
    apply_overrides(data, overrides or [])
    model = data.setdefault("model", {})
    for key, value in (("K", K), ("D", D)):
        if value is None:
            continue
        if key in model and model[key] != value:
            raise ConfigError(f"model.{key}={model[key]} but the data has {key}={value}")
        model[key] = value
    return train_config_from_dict(data).validate()


def cmd_train(args):
    pairs = load_dataset(args.data)
    K, D = pairs[0][0].keypoints, pairs[0][0].dims
    resume = load_checkpoint(args.resume) if args.resume else None
    cfg = resume.train_config if resume else effective_train_config(args.config, args.set, K, D)
    if (cfg.model.K, cfg.model.D) != (K, D):
        raise ConfigError(f"model has K={cfg.model.K}, D={cfg.model.D}; data has K={K}, D={D}")
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "manifest.json"), {"version": 1, "config": to_dict(cfg), "data": os.path.abspath(args.data)})
    history_path = os.path.join(args.out, "history.jsonl")
    mode = "a" if resume else "w"
    with open(history_path, mode, encoding="utf-8") as hist:

        def on_epoch(record):
            line = json.dumps(record, sort_keys=True)
            hist.write(line + "\n")
            hist.flush()
            if not args.quiet:
                print(line, flush=True)

        result = train(cfg, pairs, out_dir=args.out, resume=resume, on_epoch=on_epoch)
    print(f"trained {result.checkpoint.epoch} epochs, {result.checkpoint.step} steps; checkpoint at "
          f"{os.path.join(args.out, 'checkpoint.npz')}")
    return EXIT_OK


# refine


def cmd_refine(args):
    ckpt = load_checkpoint(args.checkpoint)
    model = model_from_checkpoint(ckpt)
    seq = _load_pose(args.input)
    out = refine_sequence(model, seq, stride=args.stride)
    out.source = seq.source
    posefile.save(out, args.output)
    _write_json(
        args.output + ".manifest.json",
        {
            "version": 1,
            "checkpoint": os.path.abspath(args.checkpoint),
            "input": os.path.abspath(args.input),
            "stride": args.stride or max(model.cfg.T // 2, 1),
            "config": ckpt.config,
        },
    )
    print(f"refined {out.frames} frames -> {args.output}")
    return EXIT_OK


# eval


def _check_pair(pred, gt):
    if pred.frames != gt.frames:
        raise DimensionError(f"frame counts differ: prediction has {pred.frames}, ground truth has {gt.frames}")
    if (pred.keypoints, pred.dims) != (gt.keypoints, gt.dims):
        raise DimensionError(
            f"layouts differ: prediction K={pred.keypoints}, D={pred.dims}; ground truth K={gt.keypoints}, D={gt.dims}"
        )


def write_frame_csv(path, pred, gt):
    """Per-frame errors as comma-separated rows (frame, mpjpe, accel)."""
    dist = np.linalg.norm(pred.coords - gt.coords, axis=-1)
    accel = np.full(gt.frames, np.nan)
    if gt.frames >= 3:
        acc = np.linalg.norm(second_difference(pred.coords) - second_difference(gt.coords), axis=-1)
        accel[1:-1] = acc.mean(axis=-1)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "mpjpe", "accel", "visible"])
        for t in range(gt.frames):
            v = gt.visibility[t]
            err = float(dist[t][v].mean()) if v.any() else float("nan")
            w.writerow([t, repr(err), repr(float(accel[t])), int(v.sum())])


def cmd_eval(args):
    pred = _load_pose(args.pred)
    gt = _load_pose(args.gt)
    _check_pair(pred, gt)
    thresholds = tuple(args.thresholds) if args.thresholds else PCK_THRESHOLDS
    groups = gt.joint_groups or None
    report = evaluate(pred.coords, gt.coords, gt.visibility, thresholds=thresholds, groups=groups)
    if args.json:
        print(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    else:
        print(format_report(report, groups=list(gt.joint_groups), title=os.path.basename(args.pred)))
    if args.csv:
        write_frame_csv(args.csv, pred, gt)
    return EXIT_OK


# inspect


def cmd_inspect(args):
    path = args.path
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    if path.endswith(".npz"):
        ckpt = load_checkpoint(path)
        n = sum(int(np.prod(v.shape)) for v in ckpt.params.values())
        print(f"checkpoint v{ckpt.version}: epoch {ckpt.epoch}, step {ckpt.step}, "
              f"{len(ckpt.params)} tensors, {n} parameters")
        print(json.dumps(ckpt.config["model"], sort_keys=True))
        if ckpt.history:
            print(json.dumps(ckpt.history[-1], sort_keys=True))
        return EXIT_OK
    if path.endswith(".json"):
        print(json.dumps(_read_json(path), indent=2, sort_keys=True))
        return EXIT_OK
    seq = posefile.load(path)
    print(json.dumps(posefile.header_of(seq), sort_keys=True))
    print(f"visible joints: {int(seq.visibility.sum())}/{seq.visibility.size} "
          f"({100.0 * seq.visibility.mean():.1f}%)")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="kinepose", description="Kinematic pose-sequence refinement")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write synthetic clean/corrupted sequence pairs")
    g.add_argument("spec", help="JSON file of synthetic-data fields")
    g.add_argument("out_dir")
    g.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a spec field")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a refiner on a generated data directory")
    t.add_argument("--data", required=True, help="directory with manifest.json from 'generate'")
    t.add_argument("--out", required=True)
    t.add_argument("--config", help="JSON training config (model/loss sections nested)")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted-key override, e.g. model.C=8")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("-q", "--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("refine", help="refine a pose file with a trained checkpoint")
    r.add_argument("checkpoint")
    r.add_argument("input")
    r.add_argument("output")
    r.add_argument("--stride", type=int, default=None, help="window stride (default T/2)")
    r.set_defaults(func=cmd_refine)

    e = sub.add_parser("eval", help="score predictions against ground truth")
    e.add_argument("pred")
    e.add_argument("gt")
    e.add_argument("--json", action="store_true", help="print the report as JSON")
    e.add_argument("--csv", help="also write per-frame errors to this CSV file")
    e.add_argument("--thresholds", type=float, nargs="+", help="PCK thresholds (fractions of bbox)")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("inspect", help="summarize a pose file, checkpoint or manifest")
    i.add_argument("path")
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, PoseFileError, DimensionError, BoundsError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
