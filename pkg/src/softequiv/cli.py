"""Experiment harness: train the toy task, sweep frequencies, probe, render.

Every run writes its configuration verbatim, an environment stamp, and its
outputs into one directory.  Exit codes: 0 success, 2 configuration error,
3 data error, 4 numeric failure (non-finite loss).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from .data import (
    DataError,
    build_mnist6_180,
    downsample,
    load_idx_pair,
    split_set,
    synth_glyph_set,
)
from .groups import GroupKind, identity, sample_rotations, se2_element, translation2
from .kernels import render_filter_bank, save_filter_bank
from .models import (
    TABLE1_ROWS,
    Model,
    ModelSpec,
    NumericError,
    build_model,
    evaluate_accuracy,
    load_model_weights,
    save_model,
    train_classifier,
)
from .operator import GroupSignal, OperatorConfig, SoftConvLayer
from .probes import rotation_equivariance_error, translation_equivariance_error


class ConfigError(ValueError):
    pass


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as e:
        raise ConfigError(f"cannot parse float list {text!r}") from e


def _parse_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip() != "")
    except ValueError as e:
        raise ConfigError(f"cannot parse int list {text!r}") from e


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="softequiv", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--out", required=True, help="output directory for this run")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--model", default="se2-soft-so2", choices=sorted(TABLE1_ROWS))
        sp.add_argument("--widths", default="8,16")
        sp.add_argument("--n-rotations", type=int, default=4)
        sp.add_argument("--rotation-mode", default="cyclic-deterministic",
                        choices=["cyclic-deterministic", "uniform-random"])
        sp.add_argument("--radius", type=float, default=2.5)
        sp.add_argument("--padding", default="zero", choices=["zero", "circular"])
        sp.add_argument("--omega", type=float, default=0.5, help="filter-space translation frequency")
        sp.add_argument("--omega-rotation", type=int, default=1, help="filter-space rotation frequency")
        sp.add_argument("--omega-prime", type=float, default=1.0,
                        help="domain-space frequency, applied to the row's soft axes")
        sp.add_argument("--feature-pairs", type=int, default=64)
        sp.add_argument("--kernel-hidden", default="32,32")
        sp.add_argument("--projection", default="mean", choices=["mean", "max"])
        sp.add_argument("--precision", default="float32", choices=["float32", "float64"])

    def add_data(sp):
        sp.add_argument("--synth-data", action="store_true", help="use the synthetic glyph task")
        sp.add_argument("--mnist-images", help="IDX image file for the digit source")
        sp.add_argument("--mnist-labels", help="IDX label file for the digit source")
        sp.add_argument("--train-size", type=int, default=2000)
        sp.add_argument("--val-size", type=int, default=500)
        sp.add_argument("--test-size", type=int, default=2000)
        sp.add_argument("--downsample", type=int, default=2)

    def add_train(sp):
        sp.add_argument("--epochs", type=int, default=12)
        sp.add_argument("--batch-size", type=int, default=64)
        sp.add_argument("--lr", type=float, default=2e-3)
        sp.add_argument("--early-stop-val-acc", type=float, default=0.998)
        sp.add_argument("--patience", type=int, default=3,
                        help="stop after this many epochs without validation improvement")

    t = sub.add_parser("train", help="train one model on the rotated-glyph task")
    add_common(t), add_data(t), add_train(t)

    s = sub.add_parser("sweep", help="train one model per domain-space frequency")
    add_common(s), add_data(s), add_train(s)
    s.add_argument("--omega-prime-grid", default="0,1,2,4")

    pr = sub.add_parser("probe", help="measure equivariance errors of a model")
    add_common(pr)
    pr.add_argument("--checkpoint", help="run directory holding spec.json and model.ckpt")
    pr.add_argument("--fresh-init", action="store_true", help="probe a freshly initialized model")
    pr.add_argument("--image-size", type=int, default=14)

    r = sub.add_parser("render", help="rasterize filter banks to pgm images")
    add_common(r)
    r.add_argument("--checkpoint", help="run directory holding spec.json and model.ckpt")
    r.add_argument("--fresh-init", action="store_true")
    r.add_argument("--image-size", type=int, default=14)
    return p


def spec_from_args(args, image_size: int) -> ModelSpec:
    _, soft_axes = TABLE1_ROWS[args.model]
    w = args.omega_prime
    omp_t = w if "t" in soft_axes else 0.0
    omp_r = 0
    if "r" in soft_axes:
        if w != int(w):
            raise ConfigError("rotation-axis domain-space frequency must be an integer")
        omp_r = int(w)
    try:
        return ModelSpec(
            row=args.model,
            image_size=image_size,
            widths=_parse_ints(args.widths),
            n_rotations=args.n_rotations,
            rotation_mode=args.rotation_mode,
            radius=args.radius,
            padding=args.padding,
            omega_translation=args.omega,
            omega_rotation=args.omega_rotation,
            omega_prime_translation=omp_t,
            omega_prime_rotation=omp_r,
            n_feature_pairs=args.feature_pairs,
            kernel_hidden=_parse_ints(args.kernel_hidden),
            projection=args.projection,
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e


def load_task_data(args):
    """(train, val, test) arrays for the rotated-glyph task."""
    sizes = {"train": args.train_size, "val": args.val_size, "test": args.test_size}
    total = sum(sizes.values())
    if args.synth_data:
        base = synth_glyph_set(total, seed=args.seed)
    elif args.mnist_images and args.mnist_labels:
        source = load_idx_pair(args.mnist_images, args.mnist_labels)
        base = build_mnist6_180(source, seed=args.seed)
        if len(base) < total:
            raise DataError(f"only {len(base)} sixes available, need {total}")
    else:
        raise ConfigError("provide --synth-data or both --mnist-images and --mnist-labels")
    splits = split_set(base, sizes, seed=args.seed)
    dtype = np.float32 if args.precision == "float32" else np.float64

    def prep(part):
        return downsample(part.images, args.downsample).astype(dtype), part.labels

    return prep(splits["train"]), prep(splits["val"]), prep(splits["test"])


def _write_run_stamp(outdir, args) -> None:
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "config.json"), "w") as f:
        json.dump({k: v for k, v in vars(args).items() if k != "func"}, f, indent=2, default=str)
    with open(os.path.join(outdir, "env.txt"), "w") as f:
        f.write(f"softequiv {__version__}\nnumpy {np.__version__}\nprecision {args.precision}\n")


def _train_one(args, outdir, omega_prime_override=None, log=print):
    if omega_prime_override is not None:
        args = argparse.Namespace(**{**vars(args), "omega_prime": omega_prime_override})
    train, val, test = load_task_data(args)
    image_size = train[0].shape[1]
    spec = spec_from_args(args, image_size)
    dtype = np.float32 if args.precision == "float32" else np.float64
    model = build_model(spec, seed=args.seed, dtype=dtype)

    history = []
    if args.epochs > 0:
        history = train_classifier(
            model,
            train,
            val,
            epochs=args.epochs,
            batch_size=args.batch_size,
            lr=args.lr,
            seed=args.seed,
            early_stop_val_acc=None if args.early_stop_val_acc <= 0 else args.early_stop_val_acc,
            patience=args.patience if args.patience > 0 else None,
            log=log,
        )

    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "metrics.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "train_loss", "val_acc"])
        w.writerows(history)
    test_acc = evaluate_accuracy(model, test[0], test[1])
    val_acc = history[-1][2] if history else evaluate_accuracy(model, val[0], val[1])
    result = {
        "row": spec.row,
        "seed": args.seed,
        "omega_prime": args.omega_prime,
        "epochs_ran": len(history),
        "val_acc": val_acc,
        "test_acc": test_acc,
    }
    with open(os.path.join(outdir, "result.json"), "w") as f:
        json.dump(result, f, indent=2)
    with open(os.path.join(outdir, "spec.json"), "w") as f:
        f.write(spec.to_json())
    save_model(os.path.join(outdir, "model.ckpt"), model)
    return result


def cmd_train(args) -> int:
    _write_run_stamp(args.out, args)
    result = _train_one(args, args.out)
    print(f"test_acc={result['test_acc']:.4f}")
    return 0


def cmd_sweep(args) -> int:
    grid = _parse_floats(args.omega_prime_grid)
    if not grid:
        raise ConfigError("empty frequency grid")
    if 0.0 not in grid:
        raise ConfigError("the frequency grid must include 0")
    _write_run_stamp(args.out, args)
    results = []
    for w in grid:
        sub = os.path.join(args.out, f"omega_prime_{w:g}")
        _write_run_stamp(sub, args)
        results.append(_train_one(args, sub, omega_prime_override=w))
    with open(os.path.join(args.out, "sweep.csv"), "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["omega_prime", "val_acc", "test_acc", "seed"])
        for r in results:
            wr.writerow([r["omega_prime"], r["val_acc"], r["test_acc"], r["seed"]])
    selected = max(results, key=lambda r: r["val_acc"])
    with open(os.path.join(args.out, "selection.json"), "w") as f:
        json.dump(selected, f, indent=2)
    print(f"selected omega_prime={selected['omega_prime']:g} test_acc={selected['test_acc']:.4f}")
    return 0


def _restore_model(args, image_size: int) -> Model:
    dtype = np.float32 if args.precision == "float32" else np.float64
    if args.checkpoint:
        with open(os.path.join(args.checkpoint, "spec.json")) as f:
            spec = ModelSpec.from_json(f.read())
        model = build_model(spec, seed=args.seed, dtype=dtype)
        try:
            load_model_weights(os.path.join(args.checkpoint, "model.ckpt"), model)
        except ValueError as e:
            raise ConfigError(f"checkpoint does not fit its spec: {e}") from e
        return model
    if not args.fresh_init:
        raise ConfigError("provide --checkpoint or --fresh-init")
    return build_model(spec_from_args(args, image_size), seed=args.seed, dtype=dtype)


def cmd_probe(args) -> int:
    _write_run_stamp(args.out, args)
    model = _restore_model(args, args.image_size)
    spec = model.spec
    kind = spec.kind
    rng = np.random.default_rng(args.seed)
    reports = []
    for i, layer in enumerate(model.layers):
        # probes need exactness: rebuild the block's operator with circular
        # padding and cyclic rotations, sharing its kernel field
        cyclic = None
        if kind is GroupKind.SE2:
            cyclic = np.array([r.theta for r in sample_rotations(spec.n_rotations, "cyclic-deterministic")])
        probe_layer = SoftConvLayer(
            layer.field, OperatorConfig(padding="circular"), layer.grid, cyclic, dtype=np.float64
        )
        f = GroupSignal(
            kind,
            rng.normal(size=(probe_layer.n_in, layer.c_in)),
            grid=probe_layer.grid if kind is not GroupKind.SO2 else None,
            thetas=cyclic,
        )
        if kind is GroupKind.SE2:
            reports.append((f"block{i}", rotation_equivariance_error(probe_layer, f)))
        H, W = probe_layer.grid
        shifts = [(1, 0), (0, 1), (W // 2, H // 2)]
        reports.append((f"block{i}", translation_equivariance_error(probe_layer, f, shifts)))

    with open(os.path.join(args.out, "probes.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["action", "error"])
        for block, rep in reports:
            for action, err in rep.rows():
                w.writerow([f"{block}/{rep.probe}/{action}", err])
    blob = {
        "model": spec.row,
        "seed": args.seed,
        "reports": [{**rep.to_json_dict(), "block": block} for block, rep in reports],
    }
    with open(os.path.join(args.out, "probes.json"), "w") as f:
        json.dump(blob, f, indent=2)
    worst = max(rep.max_error for _, rep in reports)
    print(f"max probe error: {worst:.3e}")
    return 0


def cmd_render(args) -> int:
    _write_run_stamp(args.out, args)
    model = _restore_model(args, args.image_size)
    spec = model.spec
    reach = int(np.ceil(spec.radius))
    coords = np.arange(-reach, reach + 1, dtype=float)
    if spec.kind is GroupKind.SE2:
        rotations = [se2_element(0, 0, t) for t in model.thetas]
        probes = [se2_element(0, 0, t) for t in model.thetas]
    else:
        rotations = [identity(GroupKind.T2)]
        probes = [translation2(0, 0), translation2(float(spec.image_size) / 2, 0.0)]
    for i, layer in enumerate(model.layers):
        stack = render_filter_bank(layer.field, coords, rotations, probes)
        save_filter_bank(os.path.join(args.out, f"block{i}"), stack, prefix=f"block{i}")
    print(f"rendered {len(model.layers)} filter banks to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"train": cmd_train, "sweep": cmd_sweep, "probe": cmd_probe, "render": cmd_render}
    try:
        return handlers[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4


def entrypoint() -> None:
    raise SystemExit(main())
