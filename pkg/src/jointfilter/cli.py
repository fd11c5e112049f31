"""Command-line entry point: dataset synthesis, training, filtering,
evaluation, and self-test.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Option precedence: flags > config file (key=value lines) > defaults; every
run echoes its resolved configuration.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, checkpoint_digest, load_checkpoint, save_checkpoint
from .evaluate import bicubic_baseline, benchmark, format_report
from .filtering import ConstraintError, iterative_filter
from .imageio import PnmError, read_image, write_image
from .inference import infer, make_filter_fn
from .networks import DknConfig, FdknConfig
from .selftest import FAULTS, run_selftest
from .synthetic import make_synthetic_dataset, make_training_pair, read_manifest, write_manifest
from .tensor import NonFiniteError
from .train import DivergenceError, TrainConfig, train

__all__ = ["main"]


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _bool_flag(value: str) -> bool:
    v = value.lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {value!r}")


def _read_config_file(path) -> dict:
    entries = {}
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise DataError(f"cannot read config file {path}: {err}") from err
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        entries[k.strip().replace("-", "_")] = v.strip()
    return entries


def _resolve(args, parser_defaults: dict) -> dict:
    """defaults <- config file <- explicitly passed flags."""
    resolved = dict(parser_defaults)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        file_entries = _read_config_file(cfg_path)
        unknown = set(file_entries) - set(parser_defaults)
        if unknown:
            raise UsageError(f"unknown config file keys: {sorted(unknown)}")
        for k, raw in file_entries.items():
            default = parser_defaults[k]
            if isinstance(default, bool):
                resolved[k] = _bool_flag(raw)
            elif isinstance(default, int):
                resolved[k] = int(raw)
            elif isinstance(default, float):
                resolved[k] = float(raw)
            else:
                resolved[k] = raw
    for k in parser_defaults:
        v = getattr(args, k, None)
        if v is not None:
            resolved[k] = v
    return resolved


def _echo_config(command: str, resolved: dict):
    print(f"command={command} version={__version__}")
    for k in sorted(resolved):
        print(f"config {k}={resolved[k]}")


def _write_run_meta(out_dir: Path, command: str, resolved: dict):
    lines = [f"version={__version__}", f"command={command}"]
    lines += [f"{k}={resolved[k]}" for k in sorted(resolved)]
    (out_dir / "run.meta").write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

SYNTH_DEFAULTS = {"count": 32, "size": 96, "seed": 0, "out_dir": "dataset"}


def cmd_synth(resolved: dict) -> int:
    out_dir = Path(resolved["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    scenes = make_synthetic_dataset(resolved["count"], resolved["size"], resolved["seed"])
    records = []
    for i, (rgb, depth) in enumerate(scenes):
        name = f"pair_{i:04d}"
        write_image(out_dir / f"{name}.ppm", rgb)
        write_image(out_dir / f"{name}.pfm", depth)
        records.append(
            {
                "name": name,
                "guidance": f"{name}.ppm",
                "depth": f"{name}.pfm",
                "size": resolved["size"],
            }
        )
    write_manifest(out_dir / "manifest.txt", records)
    print(f"wrote {len(records)} pairs to {out_dir}")
    return 0


def _load_pairs(resolved: dict) -> list:
    manifest = Path(resolved["data"])
    if not manifest.exists():
        raise DataError(f"manifest {manifest} does not exist")
    base = manifest.parent
    records = read_manifest(manifest)
    pairs = []
    for i, rec in enumerate(records):
        try:
            rgb = read_image(base / rec["guidance"])
            depth = read_image(base / rec["depth"])
        except KeyError as err:
            raise DataError(f"{manifest}: record {i} missing field {err}") from err
        pairs.append(
            make_training_pair(
                rgb,
                depth,
                protocol=resolved["protocol"],
                scale=resolved["scale"],
                noise_var=resolved["noise_var"],
                seed=resolved["seed"] * 100003 + i,
                name=rec.get("name", f"pair_{i:04d}"),
            )
        )
    if not pairs:
        raise DataError(f"manifest {manifest} lists no pairs")
    return pairs


def _model_config(resolved: dict):
    cls = {"dkn": DknConfig, "fdkn": FdknConfig}[resolved["arch"]]
    return cls(
        kernel_size=resolved["k"],
        window=resolved["window"],
        residual=resolved["residual"],
        streams=resolved["streams"],
        learn_offsets=resolved["offsets"],
    )


TRAIN_DEFAULTS = {
    "arch": "dkn",
    "scale": 4,
    "protocol": "bicubic",
    "k": 3,
    "window": 15,
    "residual": True,
    "streams": "both",
    "offsets": True,
    "iters": 2000,
    "lr": 1e-3,
    "noise_var": 0.0,
    "seed": 0,
    "crop": 0,
    "data": "dataset/manifest.txt",
    "out": "run",
}


def cmd_train(resolved: dict) -> int:
    pairs = _load_pairs(resolved)
    model_config = _model_config(resolved)
    train_config = TrainConfig(
        iterations=resolved["iters"],
        lr=resolved["lr"],
        seed=resolved["seed"],
        crop_size=resolved["crop"] or None,
    )
    out_dir = Path(resolved["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "loss.log"
    with open(log_path, "w") as log:
        def progress(it, value):
            log.write(f"iteration={it} loss={value:.6f}\n")
            log.flush()

        result = train(model_config, pairs, train_config, progress=progress)
    ckpt = out_dir / "model.jfck"
    save_checkpoint(
        ckpt,
        result.model,
        metadata={
            "seed": resolved["seed"],
            "iterations": resolved["iters"],
            "protocol": resolved["protocol"],
            "scale": resolved["scale"],
            "noise_var": resolved["noise_var"],
            "loss_tail": [[i, round(v, 6)] for i, v in result.loss_log[-5:]],
        },
    )
    from .networks import parameter_breakdown

    counts = parameter_breakdown(result.model)
    _write_run_meta(out_dir, "train", resolved)
    print(f"parameters total={counts['total']} features={counts['features']} heads={counts['heads']}")
    print(f"checkpoint={ckpt} sha256={checkpoint_digest(ckpt)}")
    return 0


FILTER_DEFAULTS = {
    "ckpt": "run/model.jfck",
    "guidance": "",
    "target": "",
    "out": "filtered.pfm",
    "iterations": 1,
    "mode": "residual",
}


def cmd_filter(resolved: dict) -> int:
    target = read_image(resolved["target"])
    if resolved["iterations"] == 0:
        write_image(resolved["out"], target)
        print(f"iterations=0: wrote input target to {resolved['out']}")
        return 0
    model, _ = load_checkpoint(resolved["ckpt"])
    want_residual = resolved["mode"] == "residual"
    if model.config.residual != want_residual:
        raise DataError(
            f"checkpoint was trained with residual={model.config.residual}, "
            f"--mode {resolved['mode']} does not match"
        )
    guidance = read_image(resolved["guidance"])
    if guidance.shape[1:] != target.shape[1:]:
        raise DataError(
            f"guidance extents {guidance.shape[1:]} do not match target {target.shape[1:]}"
        )
    if resolved["iterations"] == 1:
        out = infer(model, guidance, target).output
    else:
        before = float(np.var(target))
        out = iterative_filter(target, make_filter_fn(model), resolved["iterations"])
        print(f"variance_in={before:.6f} variance_out={float(np.var(out)):.6f}")
    write_image(resolved["out"], out)
    print(f"wrote {resolved['out']}")
    return 0


EVAL_DEFAULTS = {
    "ckpt": "run/model.jfck",
    "data": "dataset/manifest.txt",
    "scale": 4,
    "protocol": "bicubic",
    "scaling": "range255",
    "noise_var": 0.0,
    "seed": 0,
    "out": "",
}


def cmd_eval(resolved: dict) -> int:
    model, _ = load_checkpoint(resolved["ckpt"])
    pairs = _load_pairs(resolved)
    report = benchmark(model, pairs, scaling=resolved["scaling"])
    report.notes["bicubic_baseline_rmse"] = f"{bicubic_baseline(pairs, resolved['scaling']):.6f}"
    text = format_report(report)
    sys.stdout.write(text)
    if resolved["out"]:
        out_dir = Path(resolved["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.txt").write_text(text)
        _write_run_meta(out_dir, "eval", resolved)
        print(f"report written to {out_dir / 'report.txt'}")
    return 0


SELFTEST_DEFAULTS = {"inject_fault": ""}


def cmd_selftest(resolved: dict) -> int:
    fault = resolved["inject_fault"] or None
    checks = run_selftest(fault)
    failed = [c for c in checks if not c.passed]
    for c in checks:
        status = "ok" if c.passed else "FAIL"
        print(f"check={c.name!r} max_err={c.max_err:.3e} tolerance={c.tolerance:.0e} {status}")
    if failed:
        print(f"selftest FAILED: {', '.join(c.name for c in failed)}")
        return 3
    print("selftest passed")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="jointfilter", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic RGB-D dataset")
    p.add_argument("--count", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--config")

    p = sub.add_parser("train", help="train a model on a dataset manifest")
    p.add_argument("--arch", choices=("dkn", "fdkn"))
    p.add_argument("--scale", type=int, choices=(1, 4, 8, 16))
    p.add_argument("--protocol", choices=("bicubic", "nearest_rb"))
    p.add_argument("--k", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--residual", type=_bool_flag)
    p.add_argument("--streams", choices=("both", "guidance", "target"))
    p.add_argument("--offsets", type=_bool_flag, help="learn sampling offsets (false: regular grid)")
    p.add_argument("--iters", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--noise-var", dest="noise_var", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--crop", type=int, help="training crop size (0: automatic)")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--config")

    p = sub.add_parser("filter", help="filter one image pair with a checkpoint")
    p.add_argument("--ckpt")
    p.add_argument("--guidance")
    p.add_argument("--target")
    p.add_argument("--out")
    p.add_argument("--iterations", type=int)
    p.add_argument("--mode", choices=("residual", "plain"))
    p.add_argument("--config")

    p = sub.add_parser("eval", help="benchmark a checkpoint on a manifest")
    p.add_argument("--ckpt")
    p.add_argument("--data")
    p.add_argument("--scale", type=int, choices=(1, 4, 8, 16))
    p.add_argument("--protocol", choices=("bicubic", "nearest_rb"))
    p.add_argument("--scaling", choices=("range255", "centimeters"))
    p.add_argument("--noise-var", dest="noise_var", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--config")

    p = sub.add_parser("selftest", help="run the numerical self-checks")
    p.add_argument("--inject-fault", dest="inject_fault", choices=FAULTS,
                   help="test hook: corrupt a named invariant to prove detection")
    p.add_argument("--config")

    return parser


_DEFAULTS = {
    "synth": SYNTH_DEFAULTS,
    "train": TRAIN_DEFAULTS,
    "filter": FILTER_DEFAULTS,
    "eval": EVAL_DEFAULTS,
    "selftest": SELFTEST_DEFAULTS,
}

_HANDLERS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "filter": cmd_filter,
    "eval": cmd_eval,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        resolved = _resolve(args, _DEFAULTS[args.command])
        _echo_config(args.command, resolved)
        return _HANDLERS[args.command](resolved)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    except (NonFiniteError, ConstraintError, DivergenceError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3
    except (DataError, PnmError, CheckpointError, FileNotFoundError, ValueError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
