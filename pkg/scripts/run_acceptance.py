"""Long desk-scale training runs backing the training acceptance criteria.

Writes one JSON summary per run under ``--out`` (default results/acceptance):

    huber.json   Huber-only, 16 training samples, stops at baseline + 2 dB
    axial.json   full four-term GAN objective, one file per attention mode
    full2d.json
    none.json

tests/test_acceptance.py reads these files. Each GAN run takes roughly
75 minutes on one core; use ``--runs`` to pick a subset.
"""

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from axialgan.data import build_dataset, load_split
from axialgan.nn import SpectralNorm, _as_matrix
from axialgan.train import TrainConfig, Trainer, train

HUBER = dict(lambda_g=0.0, lambda_p=0.0, lambda_fm=0.0, learning_rate=1e-3, train_samples=16,
             target_gain_db=2.0, eval_every=25)
SIGMA_WINDOW = 500


def effective_sigmas(*models, iterations: int = 1) -> list[float]:
    """True spectral norm of each wrapped layer's weight as the next forward pass will see it.

    The trainer refreshes u, v before every forward, so that refresh is
    applied here too and then undone; training is unaffected.
    """
    out = []
    for model in models:
        if model is None:
            continue
        for m in model.modules():
            if isinstance(m, SpectralNorm):
                u, v = m.u.copy(), m.v.copy()
                m.power_iteration(iterations)
                w = _as_matrix(m.effective_weight().data, m.dim).astype(np.float64)
                out.append(float(np.linalg.norm(w, 2)))
                m.u, m.v = u, v
    return out


def run(name: str, cfg: TrainConfig, out: Path, log) -> dict:
    man = build_dataset(cfg.identities, cfg.variants, cfg.data_seed)
    tr, va = load_split(man, "train", cfg.resolution), load_split(man, "val", cfg.resolution)
    sig = {"max": 0.0, "steps": 0}
    t0 = time.perf_counter()
    holder = {}

    def progress(step_log):
        trainer = holder.get("trainer")
        if trainer is not None and step_log.step < SIGMA_WINDOW:
            s = effective_sigmas(trainer.generator, trainer.discriminator, iterations=cfg.sn_iterations)
            if s:
                sig["max"] = max(sig["max"], max(s))
                sig["steps"] += 1
        if step_log.step % 50 == 0:
            print(f"[{name}] step {step_log.step:5d}  " + "  ".join(step_log.row()[1:]) +
                  f"  {time.perf_counter() - t0:.0f}s", file=log, flush=True)

    trainer = Trainer(cfg, tr, va)
    holder["trainer"] = trainer
    trainer, res = train(cfg, tr, va, out_dir=out / name, trainer=trainer, progress=progress)
    ld = [h.l_d for h in trainer.history]
    finite = all(math.isfinite(v) for h in trainer.history for v in (h.l_d, h.l_g, h.l_h, h.l_p, h.l_fm, h.total))
    summary = {
        "name": name, "attention": cfg.attention, "steps": res.steps, "seconds": res.seconds,
        "finite": finite, "max_l_d": max(ld) if ld else 0.0, "min_l_d": min(ld) if ld else 0.0,
        "baseline_psnr": res.baseline_psnr, "train_psnr": res.train_psnr,
        "val_psnr": res.val_psnr, "val_baseline_psnr": res.val_baseline_psnr,
        "reached_target": res.reached_target, "evals": res.evals,
        "max_effective_sigma": sig["max"] if sig["steps"] else None, "sigma_steps": sig["steps"],
        "config": cfg.to_text(),
    }
    (out / f"{name}.json").write_text(json.dumps(summary, indent=1), encoding="utf-8")
    print(f"[{name}] done: {json.dumps({k: v for k, v in summary.items() if k not in ('evals', 'config')})}",
          file=log, flush=True)
    return summary


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/acceptance")
    ap.add_argument("--runs", nargs="+", default=["huber", "axial", "full2d", "none"],
                    choices=["huber", "axial", "full2d", "none"])
    ap.add_argument("--steps", type=int, default=2000)
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.runs:
        cfg = TrainConfig(steps=args.steps, **HUBER) if name == "huber" else TrainConfig(steps=args.steps, attention=name)
        run(name, cfg, out, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
