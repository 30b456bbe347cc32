"""edgepool command line: train, eval, gradcheck, synth-data.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import PRESETS, ConfigError, dumps, model_spec, resolve_config, train_config
from .data import ImageSet, load_image_dir, synth_dataset, write_image_dir
from .gradcheck import DEFAULT_TOL, run_gradchecks
from .models import build_model
from .robustness import (
    EvalReport,
    TransformSpec,
    accuracy_under_transform,
    classification_consistency,
    noise_robustness,
    stability_curve,
    write_reports_csv,
    write_reports_json,
)
from .training import TrainingDiverged, train, write_log_csv

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
PRECISIONS = {"f32": np.float32, "f64": np.float64}

EVAL_HELP = """\
Geometric transforms (rotation, translation) are applied to the [0, 1] images
before normalization; Gaussian noise is added after normalization, so
eval.sigma is in units of the normalized input."""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    p.add_argument("--config", help="TOML (or JSON) config file")
    p.add_argument("--preset", choices=sorted(PRESETS), help="base preset (default classifier-sgd)")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config key")
    p.add_argument("--seed", type=int, help="training seed (model init and shuffling); eval seed for eval")
    p.add_argument("--out", help="output root directory (default ./runs)")
    p.add_argument("--threads", type=int, help="worker threads for evaluation")
    p.add_argument("--precision", choices=sorted(PRECISIONS), help="float precision (default f32)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="edgepool", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    sub.add_parser("train", parents=[common], help="train a model; writes a run directory")

    ev = sub.add_parser("eval", parents=[common], help="robustness evaluation of a checkpoint",
                        description=EVAL_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    ev.add_argument("checkpoint")
    ev.add_argument("--protocol", choices=["accuracy", "consistency", "stability", "noise"])
    ev.add_argument("--data", help="image directory (default: synthetic evaluation set)")

    gc = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient checks (float64)")
    gc.add_argument("--scope", choices=["ops", "layers", "all"], default="all")
    gc.add_argument("--tol", type=float, default=DEFAULT_TOL)

    sd = sub.add_parser("synth-data", parents=[common], help="write a synthetic shapes dataset")
    sd.add_argument("--kind", choices=["shapes2", "shapes4"], default="shapes2")
    sd.add_argument("-n", type=int, default=200)
    sd.add_argument("--size", type=int, default=32)
    return parser


def _arg(args, name, default=None):
    return getattr(args, name, default)


def _config(args, seed_key: str | None = "train") -> dict:
    overrides = list(_arg(args, "set", []) or [])
    if seed_key and _arg(args, "seed") is not None:
        overrides.append(f"{seed_key}.seed={args.seed}")
    return resolve_config(_arg(args, "preset", "classifier-sgd"), _arg(args, "config"), overrides)


def _new_dir(root: Path, stem: str, seed: int) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = root / f"{stem}-{stamp}-s{seed}"
    path, k = base, 1
    while path.exists():
        path = Path(f"{base}-{k}")
        k += 1
    path.mkdir(parents=True)
    return path


def _dataset(cfg: dict, n: int | None = None, seed=None) -> ImageSet:
    d, m = cfg["data"], cfg["model"]
    if d["source"] == "dir":
        data = load_image_dir(d["path"], d["resize"] or None, d["crop"] or None)
    else:
        data = synth_dataset(d["kind"], n if n is not None else d["n"], m["height"], d["seed"] if seed is None else seed)
    if data.shape[1:] != (m["height"], m["width"]):
        raise ConfigError(f"images are {data.shape[1]}x{data.shape[2]} but model.height/width is "
                          f"{m['height']}x{m['width']}")
    if m["kind"] == "classifier" and len(data.classes) != m["num_classes"]:
        raise ConfigError(f"dataset has {len(data.classes)} classes but model.num_classes is {m['num_classes']}")
    return data


def cmd_train(args) -> int:
    cfg = _config(args)
    spec, tcfg = model_spec(cfg), train_config(cfg)
    dtype = PRECISIONS[_arg(args, "precision", "f32")]
    data = _dataset(cfg)
    val = None
    if cfg["data"]["val_n"] and cfg["data"]["source"] == "synthetic":
        val = _dataset(cfg, cfg["data"]["val_n"], [cfg["data"]["seed"], 1])

    run = _new_dir(Path(_arg(args, "out", "runs")), f"{cfg['model']['kind']}-{cfg['pooling']['kind']}", tcfg.seed)
    (run / "config.json").write_text(dumps(cfg))
    model = build_model(spec, seed=tcfg.seed, dtype=dtype)
    print(f"run directory: {run}")
    print(f"model: {spec.kind}, pooling {cfg['pooling']['kind']}, {model.num_parameters()} parameters")

    def show(rec):
        print(f"epoch {rec.epoch:3d} {rec.split:5s} loss {rec.loss:.6g} metric {rec.metric:.6g} lr {rec.lr:.3g}",
              flush=True)

    result = train(model, data, tcfg, val=val, on_epoch=show)
    write_log_csv(result.records, run / "train_log.csv")
    save_checkpoint(model, run / "final.ckpt", step=result.steps)
    save_checkpoint(model, run / "best.ckpt", step=result.steps, params=result.best_params)
    print(f"best epoch {result.best_epoch}; wrote train_log.csv, final.ckpt, best.ckpt")
    return EXIT_OK


def _uses_model_config(args) -> bool:
    sets = _arg(args, "set", []) or []
    return _arg(args, "config") is not None or _arg(args, "preset") is not None or any(
        s.split("=", 1)[0].strip().startswith(("model.", "pooling.")) for s in sets)


def cmd_eval(args) -> int:
    cfg = _config(args, seed_key="eval")
    ev = cfg["eval"]
    protocol = _arg(args, "protocol") or ev["protocol"]
    threads = _arg(args, "threads", 1)
    expect = model_spec(cfg).spec_hash() if _uses_model_config(args) else None
    model, ckpt = load_checkpoint(args.checkpoint, PRECISIONS[_arg(args, "precision", "f32")], expect_hash=expect)
    if ckpt.spec["kind"] != "classifier":
        raise ConfigError("robustness protocols need a classifier checkpoint")

    # image size and classes come from the checkpoint's spec
    cfg["model"].update(height=ckpt.spec["height"], width=ckpt.spec["width"], num_classes=ckpt.spec["num_classes"])
    if _arg(args, "data"):
        cfg["data"].update(source="dir", path=args.data)
    data = _dataset(cfg, ev["n"], ev["data_seed"])

    if protocol == "accuracy":
        kind = ev["transform"]
        spec = TransformSpec(kind, degrees=ev["rotation_degrees"] if kind == "rotation" else 0.0,
                             dx=ev["max_shift"] if kind == "translation" else 0,
                             dy=ev["max_shift"] if kind == "translation" else 0,
                             mean=ev["noise_mean"], sigma=ev["sigma"] if kind == "noise" else 0.0)
        reports = [accuracy_under_transform(model, data, spec, ev["trials"], ev["seed"], threads)]
    elif protocol == "consistency":
        reports = list(classification_consistency(model, data, max_shift=ev["max_shift"],
                                                  full_grid=ev["full_grid"], threads=threads))
    elif protocol == "stability":
        i = ev["image_index"]
        if not 0 <= i < len(data):
            raise ConfigError(f"eval.image_index {i} out of range for {len(data)} images")
        reports = [stability_curve(model, data.images[i], int(data.labels[i]), kind)
                   for kind in ("rotation", "translation")]
    else:
        reports = [noise_robustness(model, data, ev["sigma"], ev["trials"], ev["seed"], ev["noise_mean"], threads)]

    out = _new_dir(Path(_arg(args, "out", None) or Path(args.checkpoint).parent), f"eval-{protocol}", ev["seed"])
    write_reports_csv(reports, out / "report.csv")
    write_reports_json(reports, out / "report.json")
    _print_reports(reports)
    print(f"wrote {out / 'report.csv'} and {out / 'report.json'}")
    return EXIT_OK


def _print_reports(reports: list[EvalReport]) -> None:
    print(f"{'variant':10s} {'metric':12s} {'transform':52s} {'mean':>10s} {'sd':>10s} {'n':>6s}")
    for r in reports:
        print(f"{r.variant:10s} {r.metric:12s} {r.transform:52s} {r.mean:10.6f} {r.sd:10.6f} {r.n:6d}")
        if r.drop is not None:
            print(f"{r.variant:10s} {'drop':12s} {r.transform:52s} {r.drop:10.6f}")


def cmd_gradcheck(args) -> int:
    results = run_gradchecks(args.scope, seed=_arg(args, "seed", 0), tol=args.tol)
    print(f"{'op':24s} {'scope':7s} {'shapes':>6s} {'max rel error':>14s}  result")
    for r in results:
        print(f"{r.name:24s} {r.scope:7s} {r.shapes:6d} {r.max_rel_error:14.3e}  {'pass' if r.passed else 'FAIL'}")
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed (tolerance {args.tol:g})")
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_synth_data(args) -> int:
    if args.n <= 0:
        raise UsageError(f"synth-data: -n must be positive, got {args.n}")
    out = _arg(args, "out")
    if out is None:
        raise UsageError("synth-data: --out is required")
    try:
        data = synth_dataset(args.kind, args.n, args.size, _arg(args, "seed", 0))
    except ValueError as e:
        raise UsageError(f"synth-data: {e}") from e
    root = Path(out)
    if root.exists() and any(root.iterdir()):
        raise FileExistsError(f"{root} exists and is not empty")
    write_image_dir(data, root)
    print(f"wrote {len(data)} images ({', '.join(data.classes)}) to {root}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "gradcheck": cmd_gradcheck, "synth-data": cmd_synth_data}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, CheckpointError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
