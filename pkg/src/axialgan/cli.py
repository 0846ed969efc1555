"""Command line: synth-data, train, eval, infer, gradcheck, bench."""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ContractError, FormatError, IntegrityError, TrainingDiverged


def _config(args, **extra):
    from .train import TrainConfig

    overrides = {"seed": args.seed, "steps": getattr(args, "steps", None), "resolution": args.resolution,
                 "attention": args.attention}
    overrides.update(extra)
    if args.config:
        return TrainConfig.from_file(args.config, **overrides)
    return TrainConfig.from_dict({k: v for k, v in overrides.items() if v is not None})


def cmd_synth_data(args) -> int:
    from .data import build_dataset

    seed = 7 if args.seed is None else args.seed
    man = build_dataset(args.identities, args.variants, seed, out_dir=args.out, channels=args.channels)
    counts = {s: sum(r["split"] == s for r in man.rows) for s in ("train", "val", "test")}
    print(f"wrote {len(man.rows)} pairs to {args.out} (seed {seed}; " +
          ", ".join(f"{k} {v}" for k, v in counts.items()) + ")")
    return 0


def _load_data(cfg, data_dir, splits):
    from .data import build_dataset, load_split

    source = data_dir if data_dir else build_dataset(cfg.identities, cfg.variants, cfg.data_seed,
                                                     channels=cfg.in_channels)
    return [load_split(source, s, cfg.resolution) for s in splits]


def cmd_train(args) -> int:
    from .train import Trainer, train

    cfg = _config(args)
    out = Path(args.out or "runs/train")
    train_split, val_split = _load_data(cfg, args.data, ("train", "val"))
    trainer = Trainer(cfg, train_split, val_split)
    if args.checkpoint:
        trainer.load(args.checkpoint)
        print(f"resumed from {args.checkpoint} at step {trainer.step}")
    every = max(1, cfg.steps // 20)

    def progress(log):
        if log.step % every == 0:
            print(f"step {log.step:5d}  L_D {log.l_d:.4f}  L_G {log.l_g:.4f}  L_H {log.l_h:.5f}  "
                  f"L_P {log.l_p:.4f}  L_FM {log.l_fm:.4f}  total {log.total:.4f}", flush=True)

    try:
        _, res = train(cfg, train_split, val_split, out_dir=out, trainer=trainer, progress=progress)
    except TrainingDiverged as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 3
    print(f"done: {res.steps} steps in {res.seconds:.1f}s; train PSNR {res.train_psnr:.3f} dB "
          f"(bicubic {res.baseline_psnr:.3f}); val PSNR {res.val_psnr:.3f} dB; checkpoint {out / 'checkpoint.axgn'}")
    return 0


def cmd_eval(args) -> int:
    from .metrics import VerificationEmbedder, run_verification
    from .train import load_generator

    gen = None
    if args.checkpoint:
        gen, cfg = load_generator(args.checkpoint)
    else:
        cfg = _config(args)
    (test,) = _load_data(cfg, args.data, (args.split,))
    out = Path(args.out or "runs/eval")
    report = run_verification(gen, test, VerificationEmbedder() if gen is not None else None, out_dir=out,
                              svg=args.svg)
    label = "generator" if gen is not None else "bicubic baseline"
    for k, v in report.metrics.items():
        print(f"{k}\t{v:.6f}")
    print(f"({label}; report in {out / 'report.tsv'})")
    return 0


def cmd_infer(args) -> int:
    from .data import bicubic_resample, load_png, save_png
    from .metrics import synthesize
    from .train import load_generator

    if not args.checkpoint:
        raise ContractError("infer needs --checkpoint")
    gen, cfg = load_generator(args.checkpoint)
    img = load_png(args.input)
    r = cfg.resolution
    if img.shape[0] != cfg.in_channels:
        img = np.repeat(img.mean(axis=0, keepdims=True), cfg.in_channels, axis=0)
    if img.shape[-2:] != (r, r):
        img = bicubic_resample(img, r, r)
    out = synthesize(gen, img[None].astype(np.float32))[0]
    path = Path(args.out or "synth.png")
    path.parent.mkdir(parents=True, exist_ok=True)
    save_png(path, out)
    print(f"wrote {path} ({out.shape[1]}x{out.shape[2]})")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_suite

    t0 = time.perf_counter()
    results = run_suite(seed=0 if args.seed is None else args.seed)
    worst = 0.0
    for name, err in results:
        worst = max(worst, err)
        print(f"{name:<40s} {err:.3e}  {'ok' if err < 1e-3 else 'FAIL'}")
    print(f"max relative error {worst:.3e} in {time.perf_counter() - t0:.1f}s")
    return 0 if worst < 1e-3 else 1


def cmd_bench(args) -> int:
    from .attention import AxialAttentionLayer, count_attention_ops
    from .tensor import Tensor, no_grad

    rng = np.random.default_rng(0 if args.seed is None else args.seed)
    print("h\tw\tops\tformula\tratio\tseconds")
    for h, w in ((8, 8), (16, 8), (32, 8), (16, 16), (32, 32), (64, 64)):
        x = Tensor(rng.standard_normal((1, 16, h, w)).astype(np.float32))
        hl = AxialAttentionLayer("height", 16, 2, max_length=64, rng=rng)
        wl = AxialAttentionLayer("width", 16, 2, max_length=64, rng=rng)
        t0 = time.perf_counter()
        with no_grad(), count_attention_ops() as c:
            wl(hl(x))
        sec = time.perf_counter() - t0
        formula = h * w * (h + w)
        print(f"{h}\t{w}\t{c.total}\t{formula}\t{c.total / formula:.3f}\t{sec:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="axialgan", description="Axial-attention GAN for LR thermal-to-visible synthesis")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, steps=False):
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--seed", type=int)
        if steps:
            sp.add_argument("--steps", type=int)
        sp.add_argument("--resolution", type=int, choices=(8, 16, 24))
        sp.add_argument("--attention", choices=("axial", "none", "full2d"))
        sp.add_argument("--checkpoint")
        sp.add_argument("--out")

    sp = sub.add_parser("synth-data", help="build the synthetic paired dataset")
    sp.add_argument("--identities", type=int, default=10)
    sp.add_argument("--variants", type=int, default=8)
    sp.add_argument("--channels", type=int, choices=(1, 3), default=1)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synth_data)

    sp = sub.add_parser("train", help="train generator and discriminator")
    common(sp, steps=True)
    sp.add_argument("--data", help="dataset directory (default: generate in memory)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="gallery/probe verification and image quality on a split")
    common(sp)
    sp.add_argument("--data", help="dataset directory (default: generate in memory)")
    sp.add_argument("--split", default="test", choices=("train", "val", "test"))
    sp.add_argument("--svg", action="store_true", help="also write roc.svg")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("infer", help="LR thermal PNG -> HR visible PNG")
    common(sp)
    sp.add_argument("input")
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("gradcheck", help="finite-difference check of every layer and loss")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("bench", help="axial attention cost against h*w*(h+w)")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ContractError, FormatError, IntegrityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
