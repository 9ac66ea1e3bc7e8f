"""Subcommands: train, eval, sample, reconstruct, diag, ablate and check."""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .. import autodiff as F
from ..data import Dataset, SyntheticConfig, load_checkpoint, load_dataset, write_png_grid, write_ppm_grid
from ..diagnostics import (
    DEFAULT_PRIOR_TEMPERATURE,
    depth_ablation,
    kl_per_layer,
    layer_distribution_ablation,
    partial_reconstruct,
    plot_rate_profile,
    reconstruct,
    residual_scaling_ablation,
    sample,
)
from ..dist import LN2, normalization_error
from ..errors import BlockSpecError, ConfigError, VDVAEError
from ..model import VeryDeepVAE
from ..theory import prop1_equivalence_check, prop2_jacobian_check, random_ar_model
from ..training import TrainState, evaluate, train
from .runconfig import checkpoint_values, load_run_config

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _checkpoint_dataset(args, state: TrainState) -> Dataset:
    """Dataset for a checkpoint: real data from --data, or the synthetic set it was trained on."""
    mc = state.model_config
    synthetic = SyntheticConfig(size=mc.image_size, channels=mc.image_channels, seed=state.train_config.seed)
    return load_dataset(args.dataset, args.data, seed=state.train_config.seed, synthetic=synthetic)


def _weights(state: TrainState, use_ema: bool):
    return state.ema if use_ema else state.params


def _images(args, state: TrainState) -> np.ndarray:
    images = _checkpoint_dataset(args, state).split(args.split)
    return images[:args.n] if getattr(args, "n", None) else images


# train

def cmd_train(args) -> int:
    resumed = load_checkpoint(args.resume) if args.resume else None
    base = checkpoint_values(resumed.model_config, resumed.train_config) if resumed else None
    rc = load_run_config(args.config, args.override, base=base)
    if resumed is not None and rc.to_model_config() != resumed.model_config:
        raise ConfigError(f"{args.resume}: model settings cannot change when resuming")
    dataset = load_dataset(rc.dataset, rc.data_path, seed=rc.seed, synthetic=rc.to_synthetic_config())
    out = _out_dir(args.out)
    train_config = rc.to_train_config(resumed.train_config if resumed else None)
    trainer, result = train(train_config, rc.to_model_config(), dataset, out_dir=out, resume=resumed)
    state = trainer.state
    print(f"trained {state.step} steps ({state.applied_count} applied, {state.skip_count} skipped)")
    if result is not None:
        print(f"EMA val: {result.nats:.6f} nats/subpixel, {result.bits_per_dim:.6f} bits/dim")
    print(f"outputs in {out}")
    return EXIT_OK


# eval

def cmd_eval(args) -> int:
    state = load_checkpoint(args.ckpt)
    images = _images(args, state)
    model = VeryDeepVAE(state.model_config)
    result = evaluate(model, _weights(state, args.use_ema), images, state.stats,
                      batch_size=state.train_config.eval_batch_size, seed=args.seed)
    if not math.isclose(result.bits_per_dim, result.nats / LN2, rel_tol=1e-12):
        raise VDVAEError("bits/dim and nats disagree")
    print(f"split {args.split}, {result.n_images} images, {'EMA' if args.use_ema else 'raw'} weights")
    print(f"ELBO: {result.nats:.6f} nats/subpixel = {result.bits_per_dim:.6f} bits/dim")
    print(f"KL: {result.kl_nats:.6f} nats/subpixel over {len(result.kl_per_layer)} layers")
    for res in model.dec_spec.resolutions:
        layers = [kl for kl, r in zip(result.kl_per_layer, model.dec_spec.layer_resolutions) if r == res]
        print(f"  {res}x{res}: {len(layers)} layers, {sum(layers):.6f} nats/subpixel")
    return EXIT_OK


# sample / reconstruct

def _write_grid(out: Path, name: str, images: np.ndarray, png: bool, columns: int | None = None) -> None:
    write_ppm_grid(out / f"{name}.ppm", images, columns=columns)
    if png:
        write_png_grid(out / f"{name}.png", images, columns=columns)
    print(f"wrote {out / name}.ppm")


def cmd_sample(args) -> int:
    state = load_checkpoint(args.ckpt)
    model = VeryDeepVAE(state.model_config)
    images = sample(model, _weights(state, args.use_ema), args.n, np.random.default_rng(args.seed),
                    temperature=args.temperature, use_mean=args.use_mean)
    _write_grid(_out_dir(args.out), f"samples-t{args.temperature:g}", images, args.png)
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    state = load_checkpoint(args.ckpt)
    model = VeryDeepVAE(state.model_config)
    params = _weights(state, args.use_ema)
    originals = _images(args, state)
    rng = np.random.default_rng(args.seed)
    if args.up_to is None:
        recon = reconstruct(model, params, originals, state.stats, rng, use_mean=args.use_mean)
        name = "reconstructions"
    else:
        recon = partial_reconstruct(model, params, originals, state.stats, args.up_to, rng,
                                    temperature=args.temperature, use_mean=args.use_mean)
        name = f"reconstructions-upto{args.up_to}"
    _write_grid(_out_dir(args.out), name, np.concatenate([originals, recon]), args.png, columns=len(originals))
    return EXIT_OK


# diagnostics

def cmd_diag_kl(args) -> int:
    state = load_checkpoint(args.ckpt)
    model = VeryDeepVAE(state.model_config)
    profile = kl_per_layer(model, _weights(state, args.use_ema), _images(args, state), state.stats,
                           batch_size=state.train_config.eval_batch_size, seed=args.seed,
                           label=Path(args.ckpt).stem)
    out = _out_dir(args.out)
    profile.write_csv(out / "rates.csv")
    if args.plot:
        plot_rate_profile([profile], out / "rates.png")
    print(f"total KL {profile.total:.6f} bits/dim over {len(profile.kl_bpd)} layers")
    collapsed = profile.collapsed_layers()
    print(f"{len(collapsed)} layers below {profile.threshold:g} bits/dim: {collapsed}")
    return EXIT_OK


def _ablation_inputs(args):
    rc = load_run_config(args.config, args.override)
    dataset = load_dataset(rc.dataset, rc.data_path, seed=rc.seed, synthetic=rc.to_synthetic_config())
    return rc.to_model_config(), rc.to_train_config(), dataset


def _finish_ablation(args, result) -> int:
    out = _out_dir(args.out)
    result.write_csv(out / f"ablation-{result.kind}.csv")
    for config, loss in result.mean_loss().items():
        print(f"{config}: {loss:.6f} bits/dim")
    return EXIT_OK


def cmd_ablate_depth(args) -> int:
    mc, tc, dataset = _ablation_inputs(args)
    return _finish_ablation(args, depth_ablation(mc, args.groups, args.seeds, tc, dataset))


def cmd_ablate_layers(args) -> int:
    if not args.spec:
        raise ConfigError("ablate layers needs at least one --spec")
    mc, tc, dataset = _ablation_inputs(args)
    return _finish_ablation(args, layer_distribution_ablation(mc, args.spec, args.seeds, tc, dataset))


def cmd_ablate_scaling(args) -> int:
    mc, tc, dataset = _ablation_inputs(args)
    result = residual_scaling_ablation(mc, args.depths, args.seeds, tc, dataset)
    for cell in result.cells:
        print(f"{cell.config} seed {cell.seed}: skipped {cell.skipped}, diverged {cell.diverged}")
    return _finish_ablation(args, result)


# checks

def cmd_check_grads(args) -> int:
    results = F.run_gradcheck_suite(shapes_per_op=args.shapes, seed=args.seed)
    failed = [r for r in results if not r.passed]
    by_op: dict[str, float] = {}
    for r in results:
        by_op[r.name] = max(by_op.get(r.name, 0.0), r.max_rel_error)
    for name, err in sorted(by_op.items()):
        print(f"{name:16s} max rel error {err:.3e}")
    print(f"{len(results) - len(failed)}/{len(results)} gradient checks passed")
    return EXIT_FAILURE if failed else EXIT_OK


def cmd_check_props(args) -> int:
    rng = np.random.default_rng(args.seed)
    reports = [prop1_equivalence_check(random_ar_model(n, rng)) for n in range(1, args.n + 1)]
    reports.append(prop2_jacobian_check(rng=rng))
    for report in reports:
        print(report.summary())
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAILURE


def cmd_check_dmol(args) -> int:
    rng = np.random.default_rng(args.seed)
    means = np.concatenate([[-1.0, 0.0, 1.0], rng.uniform(-1.0, 1.0, args.trials)])
    log_scales = np.concatenate([[-7.0, -2.0, 0.0], rng.uniform(-7.0, 1.0, args.trials)])
    worst = 0.0
    with F.precision(np.float64):
        for mean in means:
            for log_scale in log_scales:
                worst = max(worst, normalization_error(float(mean), float(log_scale)))
    passed = worst < args.tolerance
    print(f"[{'PASS' if passed else 'FAIL'}] DMoL normalization over {len(means) * len(log_scales)} "
          f"components: max |sum p - 1| = {worst:.3e}")
    return EXIT_OK if passed else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    verbosity = argparse.ArgumentParser(add_help=False)
    verbosity.add_argument("--verbose", action="store_true", help="Log at DEBUG level")

    common = argparse.ArgumentParser(add_help=False, parents=[verbosity])
    common.add_argument("--seed", type=int, default=0, help="Seed for every random draw of the command")

    ckpt = argparse.ArgumentParser(add_help=False)
    ckpt.add_argument("--ckpt", required=True, help="Checkpoint file (.vdvc)")
    ckpt.add_argument("--use-ema", action="store_true", help="Use the EMA weights")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", default=None, help="Dataset path (not needed for synthetic)")
    data.add_argument("--dataset", default="cifar10", choices=["cifar10", "raw", "synthetic"])
    data.add_argument("--split", default="val", choices=["train", "val", "test"])

    images = argparse.ArgumentParser(add_help=False)
    images.add_argument("--out", required=True, help="Output directory")
    images.add_argument("--png", action="store_true", help="Also write a PNG grid")
    images.add_argument("--use-mean", action="store_true", help="Decode pixels with the mixture mean")

    runconfig = argparse.ArgumentParser(add_help=False)
    runconfig.add_argument("--config", default=None, help="key = value run-config file")
    runconfig.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    runconfig.add_argument("--out", required=True, help="Output directory")

    parser = argparse.ArgumentParser(prog="vdvae", description="Very deep hierarchical VAE toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[verbosity, runconfig], help="Train a model")
    p.add_argument("--resume", default=None, help="Checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common, ckpt, data], help="ELBO on a split, one posterior sample")
    p.add_argument("--n", type=int, default=None, help="Evaluate only the first N images")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", parents=[common, ckpt, images], help="Unconditional samples")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--temperature", type=float, default=1.0)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("reconstruct", parents=[common, ckpt, data, images], help="Full or partial reconstructions")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--up-to", type=int, default=None, help="Use posterior latents up to this resolution")
    p.add_argument("--temperature", type=float, default=DEFAULT_PRIOR_TEMPERATURE)
    p.set_defaults(func=cmd_reconstruct)

    diag = sub.add_parser("diag", help="Diagnostics").add_subparsers(dest="diag", required=True)
    p = diag.add_parser("kl", parents=[common, ckpt, data], help="Per-layer KL profile")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--plot", action="store_true", help="Also plot the cumulative rate")
    p.set_defaults(func=cmd_diag_kl)

    ablate = sub.add_parser("ablate", help="Ablation studies").add_subparsers(dest="ablate", required=True)
    p = ablate.add_parser("depth", parents=[verbosity, runconfig], help="Vary effective stochastic depth")
    p.add_argument("--groups", type=_int_list, default=[1, 2, 4], help="Independent group sizes K")
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.set_defaults(func=cmd_ablate_depth)
    p = ablate.add_parser("layers", parents=[verbosity, runconfig], help="Vary layers per resolution")
    p.add_argument("--spec", action="append", default=[], help="Decoder block spec (repeat)")
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.set_defaults(func=cmd_ablate_layers)
    p = ablate.add_parser("scaling", parents=[verbosity, runconfig], help="With and without residual scaling")
    p.add_argument("--depths", type=_int_list, default=[8, 16])
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.set_defaults(func=cmd_ablate_scaling)

    check = sub.add_parser("check", help="Verification suites").add_subparsers(dest="check", required=True)
    p = check.add_parser("grads", parents=[common], help="Finite-difference gradient checks")
    p.add_argument("--shapes", type=int, default=20, help="Random shapes per op and dtype")
    p.set_defaults(func=cmd_check_grads)
    p = check.add_parser("props", parents=[common], help="AR equivalence and triangular Jacobian")
    p.add_argument("--n", type=int, default=6, help="Largest AR model size")
    p.set_defaults(func=cmd_check_props)
    p = check.add_parser("dmol", parents=[common], help="DMoL bins sum to one")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.set_defaults(func=cmd_check_dmol)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    try:
        return args.func(args)
    except (ConfigError, BlockSpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VDVAEError as exc:
        logger.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
