"""Command-line driver: train, eval, denoise, ablate, report.

Every command writes its artifacts into one directory containing exactly one
manifest.json. The manifest is written before any long work starts and
finalized (end timestamp) afterwards; it echoes the argv, the fully resolved
configuration, and the artifact paths, so any run can be replayed from the
manifest alone. Timestamps live only in the manifest — CSV and checkpoint
artifacts are byte-identical across reruns of the same command.
"""

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .data_noise import (
    ImageSet,
    add_awgn,
    default_data_root,
    load_cifar10,
    load_folder,
    load_image,
    save_image,
)
from .engine import NumericError, Tensor, pad_reflect
from .layers import make_sigma_channel
from .metrics import evaluate
from .models import ARCH_NAMES, SIGMA_AWARE_ARCHS, IdentityModel, ModelSpec, build
from .report import build_grid, merge_results, read_results, results_markdown, write_results
from .rng import Rng
from .tiled_inference import denoise_full
from .training import (
    LOSS_MODES,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    split_history,
    train,
    write_history,
)

ABLATION_ARCHS = ("wipunet1", "wipunet2", "wipunet3", "wipunet4", "wipunet")

# store_true destinations, for config-file expansion
_BOOL_KEYS = frozenset({"sigma-map", "grid"})


# ---------------------------------------------------------------- config file


def _config_tokens(path) -> list:
    """Read a flat key=value file as a flag token list (flags later win)."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    tokens = []
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip().replace("_", "-")
        value = value.strip()
        if key in _BOOL_KEYS:
            if value.lower() in ("1", "true", "yes"):
                tokens.append(f"--{key}")
            elif value.lower() not in ("0", "false", "no"):
                raise ValueError(f"{path}: boolean key {key} got {value!r}")
        else:
            tokens.extend([f"--{key}", value])
    return tokens


def _expand_config(argv: list) -> list:
    """Splice --config file contents in right after the subcommand.

    Config entries become ordinary flags placed before the user's own flags,
    so explicit command-line flags always override the file.
    """
    out, config_path = [], None
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok == "--config":
            if i + 1 >= len(argv):
                raise ValueError("--config needs a file path")
            config_path = argv[i + 1]
            i += 2
        elif tok.startswith("--config="):
            config_path = tok.split("=", 1)[1]
            i += 1
        else:
            out.append(tok)
            i += 1
    if config_path is None:
        return out
    if not out:
        raise ValueError("--config requires a subcommand")
    return out[:1] + _config_tokens(config_path) + out[1:]


# ------------------------------------------------------------------ manifest


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_manifest(out_dir: Path, argv, args, artifacts, extra=None,
                    started=None, finished=None) -> None:
    config = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    payload = {
        "schema": "wipunet-manifest-v1",
        "version": __version__,
        "command": ["wipunet"] + list(argv),
        "config": config,
        "seed": args.seed,
        "started": started,
        "finished": finished,
        "artifacts": artifacts,
    }
    if extra:
        payload.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(payload, indent=2) + "\n")


def read_manifest(out_dir):
    return json.loads((Path(out_dir) / "manifest.json").read_text())


def replay_argv(manifest: dict) -> list:
    """Rebuild the equivalent argv from a manifest's resolved config."""
    config = manifest["config"]
    tokens = [config["cmd"]]
    for key, value in config.items():
        if key in ("cmd", "config", "csvs") or value is None:
            continue
        flag = "--" + key.replace("_", "-")
        if isinstance(value, bool):
            if value:
                tokens.append(flag)
        else:
            tokens.extend([flag, str(value)])
    tokens.extend(str(c) for c in config.get("csvs") or ())
    return tokens


# ----------------------------------------------------------------- utilities


def _parse_sigmas(text: str) -> list:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ValueError(f"--sigmas expects comma-separated numbers, got {text!r}") from None
    if not vals:
        raise ValueError("--sigmas list is empty")
    if any(v < 0 for v in vals):
        raise ValueError("noise levels must be non-negative")
    return vals


def _data_root(args) -> str:
    return args.data_root if args.data_root else default_data_root()


def _out_dir(args, default_name: str) -> Path:
    name = args.name if args.name else default_name
    out = Path(args.out) / name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _check_sigma_map(args, spec: ModelSpec) -> None:
    if getattr(args, "sigma_map", False) and not spec.sigma_aware:
        raise ValueError(
            f"arch {spec.arch!r} is not sigma-aware; --sigma-map requires one of: "
            + ", ".join(sorted(SIGMA_AWARE_ARCHS))
        )


def _load_model(args):
    """Model from --ckpt, or a fresh build from --arch (identity needs no ckpt)."""
    if args.ckpt:
        model, step = load_checkpoint(args.ckpt)
        if args.arch and args.arch != model.spec.arch:
            raise ValueError(
                f"checkpoint holds arch {model.spec.arch!r} but --arch says {args.arch!r}")
        if args.width and args.width != model.spec.base_width:
            raise ValueError(
                f"checkpoint width {model.spec.base_width} but --width says {args.width}")
        return model
    if not args.arch:
        raise ValueError("need --ckpt or --arch")
    if args.arch == "identity":
        return IdentityModel()
    return build(ModelSpec(arch=args.arch, base_width=args.width or 32, seed=args.seed))


def _denoise_one(model, image: Tensor, sigma: float, tile: int, stride: int) -> Tensor:
    """Route small inputs through a direct forward, large ones through tiling."""
    h, w = image.shape[2], image.shape[3]
    if h > tile or w > tile:
        return denoise_full(model, image, sigma, tile=tile, stride=stride)
    div = getattr(model, "divisor", 1)
    ph, pw = (-h) % div, (-w) % div
    x = pad_reflect(image, (0, ph, 0, pw)) if (ph or pw) else image
    smap = None
    if model.sigma_aware:
        smap = make_sigma_channel(1, x.shape[2], x.shape[3], sigma)
    out = model(x, sigma_map=smap).s_hat
    return Tensor(np.clip(out.data[:, :, :h, :w], 0.0, 1.0).astype(np.float32))


def _load_inputs(path_text: str) -> ImageSet:
    path = Path(path_text)
    if path.is_dir():
        return load_folder(path)
    img = load_image(path)
    return ImageSet(images=[img], names=[path.stem], source="file")


def _perm_digest(seed: int, n: int) -> str:
    """Fingerprint of the epoch-0 shuffle shared by every run with this seed."""
    perm = Rng(seed).split(0).permutation(n)
    return hashlib.blake2b(np.asarray(perm, dtype="<i8").tobytes(), digest_size=8).hexdigest()


# ------------------------------------------------------------------ commands


def cmd_train(args, argv) -> int:
    spec = ModelSpec(arch=args.arch, base_width=args.width, seed=args.seed)
    _check_sigma_map(args, spec)
    config = TrainConfig(
        model_spec=spec,
        sigma=args.sigma,
        epochs=args.epochs,
        batch_size=args.batch,
        lr=args.lr,
        weight_decay=args.wd,
        clip_norm=args.clip,
        seed=args.seed,
        loss_mode=args.loss_mode,
        lambda_img=args.lambda_img,
        lambda_res=args.lambda_res,
    )
    train_set, test_set = load_cifar10(
        _data_root(args), limit_train=args.subset, limit_test=args.eval_images)
    out_dir = _out_dir(args, f"{args.arch}-s{args.sigma:g}-w{args.width}")
    artifacts = {"history": "history.csv", "checkpoint": "model.ckpt"}
    started = _utc_now()
    _write_manifest(out_dir, argv, args, artifacts, started=started)

    eval_set = test_set if args.eval_images > 0 else None
    model, history = train(config, train_set, eval_set=eval_set, eval_images=args.eval_images)
    write_history(history, out_dir / "history.csv")
    save_checkpoint(model, out_dir / "model.ckpt", step=history[-1].step)
    _write_manifest(out_dir, argv, args, artifacts, started=started, finished=_utc_now())

    steps, epochs_rows = split_history(history)
    last = epochs_rows[-1]
    line = f"trained {args.arch}: {len(steps)} steps, final epoch loss {last.loss:.6f}"
    if last.psnr is not None:
        line += f", eval psnr {last.psnr:.2f} dB"
    print(line)
    print(f"artifacts in {out_dir}")
    return 0


def cmd_eval(args, argv) -> int:
    model = _load_model(args)
    sigmas = [args.sigma] if args.sigma is not None else _parse_sigmas(args.sigmas)
    _, test_set = load_cifar10(_data_root(args), limit_train=0, limit_test=args.eval_images)
    if len(test_set) == 0:
        raise ValueError("--eval-images must be positive")
    out_dir = _out_dir(args, "eval")
    artifacts = {"results": "results.csv"}
    started = _utc_now()
    _write_manifest(out_dir, argv, args, artifacts, started=started)

    # the identity arch is a noise-calibration probe: report its raw noisy-input
    # PSNR (clamping the unbounded noisy signal would bias it upward at high sigma)
    clamp = getattr(model, "arch", model.spec.arch) != "identity"
    rows = []
    for s in sigmas:
        row = evaluate(model, test_set, s, Rng(args.seed),
                       clamp_outputs=clamp, max_images=args.eval_images)
        rows.append(row)
        print(f"{row.model} sigma={s:g}: psnr {row.psnr_db:.2f} dB, "
              f"ssim {row.ssim:.4f} ({row.n_images} images)")
    write_results(rows, out_dir / "results.csv")
    _write_manifest(out_dir, argv, args, artifacts, started=started, finished=_utc_now())
    print(f"artifacts in {out_dir}")
    return 0


def cmd_denoise(args, argv) -> int:
    model = _load_model(args)
    inputs = _load_inputs(args.input)
    out_dir = _out_dir(args, "denoise")
    started = _utc_now()
    artifacts = {}
    _write_manifest(out_dir, argv, args, artifacts, started=started)

    if args.grid:
        sigmas = _parse_sigmas(args.sigmas)
        rows = [list(inputs.images)]
        for s in sigmas:
            noisy_row, den_row = [], []
            for i, (img, name) in enumerate(zip(inputs.images, inputs.names)):
                pair = add_awgn(img, s, Rng(args.seed).split(i))
                den = _denoise_one(model, pair.noisy, s, args.tile, args.stride)
                noisy_row.append(Tensor(np.clip(pair.noisy.data, 0.0, 1.0)))
                den_row.append(den)
                fname = f"{name}_s{s:g}_denoised.png"
                save_image(den, out_dir / fname)
                artifacts[fname] = fname
            rows.extend([noisy_row, den_row])
        grid = build_grid(rows)
        save_image(grid, out_dir / "grid.png")
        artifacts["grid"] = "grid.png"
        print(f"grid: {len(rows)} rows x {len(inputs)} images -> {out_dir / 'grid.png'}")
    else:
        sigma = args.sigma if args.sigma is not None else 25.0
        for img, name in zip(inputs.images, inputs.names):
            den = _denoise_one(model, img, sigma, args.tile, args.stride)
            fname = f"{name}_denoised.png"
            save_image(den, out_dir / fname)
            artifacts[fname] = fname
        print(f"denoised {len(inputs)} image(s) at sigma={sigma:g}")

    _write_manifest(out_dir, argv, args, artifacts, started=started, finished=_utc_now())
    print(f"artifacts in {out_dir}")
    return 0


def cmd_ablate(args, argv) -> int:
    sigmas = _parse_sigmas(args.sigmas)
    train_set, test_set = load_cifar10(
        _data_root(args), limit_train=args.subset, limit_test=args.eval_images)
    out_dir = _out_dir(args, "ablate")
    artifacts = {"results": "results.csv", "table": "table.md"}
    extra = {
        "variants": list(ABLATION_ARCHS),
        "shared_seed": args.seed,
        "data_order": _perm_digest(args.seed, len(train_set)),
    }
    started = _utc_now()
    _write_manifest(out_dir, argv, args, artifacts, extra=extra, started=started)

    rows = []
    for arch in ABLATION_ARCHS:
        for s in sigmas:
            spec = ModelSpec(arch=arch, base_width=args.width, seed=args.seed)
            config = TrainConfig(
                model_spec=spec, sigma=s, epochs=args.epochs, batch_size=args.batch,
                lr=args.lr, weight_decay=args.wd, clip_norm=args.clip, seed=args.seed,
                loss_mode=args.loss_mode, lambda_img=args.lambda_img,
                lambda_res=args.lambda_res,
            )
            model, _ = train(config, train_set)
            row = evaluate(model, test_set, s, Rng(args.seed), max_images=args.eval_images)
            rows.append(row)
            print(f"{arch} sigma={s:g}: psnr {row.psnr_db:.2f} dB, ssim {row.ssim:.4f}")
    write_results(rows, out_dir / "results.csv")
    (out_dir / "table.md").write_text(results_markdown(rows))
    _write_manifest(out_dir, argv, args, artifacts, extra=extra,
                    started=started, finished=_utc_now())

    top = max(sigmas)
    full = next(r.psnr_db for r in rows if r.model == "wipunet" and r.sigma == top)
    best_variant = max(r.psnr_db for r in rows
                       if r.model != "wipunet" and r.sigma == top)
    print(f"sigma={top:g}: full wipunet {full:.2f} dB vs best variant {best_variant:.2f} dB")
    print(f"artifacts in {out_dir}")
    return 0


def cmd_report(args, argv) -> int:
    merged = merge_results(*[read_results(p) for p in args.csvs])
    out_dir = _out_dir(args, "report")
    artifacts = {"results": "results.csv", "table": "table.md"}
    started = _utc_now()
    _write_manifest(out_dir, argv, args, artifacts, started=started)
    write_results(merged, out_dir / "results.csv")
    table = results_markdown(merged)
    (out_dir / "table.md").write_text(table)
    _write_manifest(out_dir, argv, args, artifacts, started=started, finished=_utc_now())
    print(table, end="")
    print(f"artifacts in {out_dir}")
    return 0


# -------------------------------------------------------------------- parser


def _add_shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value file merged before flags")
    p.add_argument("--seed", type=int, default=1234)
    p.add_argument("--data-root", default=None,
                   help="dataset directory (default: $WIPUNET_DATA_ROOT or data/cifar-10-batches-bin)")
    p.add_argument("--out", default="runs", help="parent directory for artifacts")
    p.add_argument("--name", default=None, help="artifact directory name")


def _add_training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--subset", type=int, default=2048, help="number of training images")
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--wd", type=float, default=1e-2)
    p.add_argument("--clip", type=float, default=1.0)
    p.add_argument("--loss-mode", choices=LOSS_MODES, default="l2_only")
    p.add_argument("--lambda-img", type=float, default=1.0)
    p.add_argument("--lambda-res", type=float, default=0.1)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wipunet", description="Physics-inspired image denoisers, from scratch.")
    parser.add_argument("--version", action="version", version=f"wipunet {__version__}")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("train", help="train one model, write checkpoint + history")
    p.add_argument("--arch", required=True, choices=ARCH_NAMES)
    p.add_argument("--sigma", type=float, default=25.0)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--sigma-map", action="store_true",
                   help="require sigma-map conditioning (errors on sigma-blind archs)")
    p.add_argument("--eval-images", type=int, default=0,
                   help="per-epoch eval on this many test images (0 = off)")
    _add_training_flags(p)
    _add_shared(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a model across noise levels")
    p.add_argument("--ckpt", default=None)
    p.add_argument("--arch", default=None, choices=ARCH_NAMES + ("identity",))
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--sigma", type=float, default=None, help="single noise level")
    p.add_argument("--sigmas", default="15,25,50,75,100")
    p.add_argument("--eval-images", type=int, default=512)
    _add_shared(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("denoise", help="denoise images (tiled when larger than one tile)")
    p.add_argument("--ckpt", default=None)
    p.add_argument("--arch", default=None, choices=ARCH_NAMES + ("identity",))
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--input", required=True, help="image file or directory")
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--sigmas", default="15,25,50")
    p.add_argument("--tile", type=int, default=128)
    p.add_argument("--stride", type=int, default=64)
    p.add_argument("--grid", action="store_true",
                   help="treat inputs as clean; write clean/noisy/denoised montage")
    _add_shared(p)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("ablate", help="train wipunet1-4 + full under one config")
    p.add_argument("--sigmas", default="15,50,100")
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--eval-images", type=int, default=512)
    _add_training_flags(p)
    _add_shared(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="merge results CSVs into a pivot table")
    p.add_argument("csvs", nargs="+", help="results.csv files to merge")
    _add_shared(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        argv = _expand_config(argv)
        args = _build_parser().parse_args(argv)
        return args.func(args, argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    except (ValueError, FileNotFoundError, NotADirectoryError, NumericError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
