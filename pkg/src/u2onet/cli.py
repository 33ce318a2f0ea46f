"""Command-line harness: train, eval, infer, profile, synth-data, ablate.

Every command exits 0 on success; invalid paths or configuration exit 2
with a one-line diagnostic, unexpected failures exit 1.
"""

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml
from PIL import Image

from .data import (SpriteSpec, SyntheticConfig, generate_synthetic,
                   list_sequences, load_sequence, save_sequence)
from .estimator import MovingInstanceSegmenter
from .metrics import binary_prf_iou, multi_object_eval, write_metrics_csv
from .model import default_network_spec
from .postprocess import MovingInstanceResult, save_instance_png
from .profiler import compare, profile_block, profile_network
from .validation import ConfigError, InputError

DEFAULT_CONFIG = {
    "network": {"preset": "motion", "alpha": 0.5, "h_levels": 6, "attention": True,
                "height_offset": 0, "channel_div": 1, "flow_encoding": "color"},
    "loss": {"levels": None, "mode": "bk", "w_bce": 1.0, "w_kl": 1.0, "reduction": "mean"},
    "optim": {"lr": 4e-2, "momentum": 0.9, "weight_decay": 1e-4},
    "run": {"epochs": 20, "batch_size": 4, "seed": 0, "max_steps": None},
    "postprocess": {"threshold": 0.5, "contour_min_length": 200, "overlap": 0.8},
}


def load_config(path=None) -> dict:
    cfg = {k: dict(v) for k, v in DEFAULT_CONFIG.items()}
    if path is not None:
        with open(path) as fh:
            user = yaml.safe_load(fh) or {}
        for section, values in user.items():
            if section == "stages":
                cfg["stages"] = values
            elif section in cfg and isinstance(values, dict):
                cfg[section].update(values)
            else:
                raise ConfigError(f"unknown config section {section!r}")
    return cfg


def make_estimator(cfg: dict, args) -> MovingInstanceSegmenter:
    net, loss, optim, run, post = (cfg["network"], cfg["loss"], cfg["optim"],
                                   cfg["run"], cfg["postprocess"])
    overrides = {
        "alpha": getattr(args, "alpha", None),
        "preset": getattr(args, "preset", None),
        "levels": getattr(args, "levels", None),
        "loss": getattr(args, "loss", None),
        "seed": getattr(args, "seed", None),
        "epochs": getattr(args, "epochs", None),
        "batch_size": getattr(args, "batch_size", None),
        "max_steps": getattr(args, "max_steps", None),
        "threshold": getattr(args, "threshold", None),
        "contour_min_length": getattr(args, "contour_min_length", None),
    }
    pick = lambda o, d: d if overrides.get(o) is None else overrides[o]
    # an explicit stage table pins the network; alpha/preset flags re-derive it
    stages = cfg.get("stages")
    if overrides.get("alpha") is not None or overrides.get("preset") is not None:
        stages = None
    return MovingInstanceSegmenter(
        network_spec=stages,
        preset=pick("preset", net["preset"]),
        alpha=pick("alpha", net["alpha"]),
        h_levels=net["h_levels"],
        attention=net["attention"],
        height_offset=net["height_offset"],
        channel_div=net["channel_div"],
        flow_encoding=net["flow_encoding"],
        loss=pick("loss", loss["mode"]),
        loss_levels=pick("levels", loss["levels"]),
        w_bce=loss["w_bce"], w_kl=loss["w_kl"], loss_reduction=loss["reduction"],
        lr=optim["lr"], momentum=optim["momentum"], weight_decay=optim["weight_decay"],
        epochs=pick("epochs", run["epochs"]),
        batch_size=pick("batch_size", run["batch_size"]),
        max_steps=pick("max_steps", run["max_steps"]),
        seed=pick("seed", run["seed"]),
        threshold=pick("threshold", post["threshold"]),
        contour_min_length=pick("contour_min_length", post["contour_min_length"]),
        overlap=post["overlap"],
    )


def load_dataset(root) -> dict:
    """All sequences under a dataset root -> {sequence: [FrameSample]}."""
    return {seq: load_sequence(root, seq) for seq in list_sequences(root)}


# --- synthetic scene presets -------------------------------------------------

def preset_scene(name: str, size: int = 64, n_frames: int = 8) -> SyntheticConfig:
    q = size / 64.0
    mover = SpriteSpec(shape="circle", size=9 * q, start=(20 * q, 18 * q),
                       velocity=(1.5 * q, 2.5 * q), color=(0.9, 0.25, 0.2),
                       labeled=True, moving=True)
    second = SpriteSpec(shape="rect", size=7 * q, start=(44 * q, 40 * q),
                        velocity=(-1.0 * q, -2.0 * q), color=(0.2, 0.4, 0.9),
                        labeled=True, moving=True)
    static = SpriteSpec(shape="rect", size=6 * q, start=(48 * q, 14 * q),
                        velocity=(0.0, 0.0), color=(0.2, 0.8, 0.3),
                        labeled=True, moving=False)
    unlabeled = SpriteSpec(shape="circle", size=9 * q, start=(24 * q, 20 * q),
                           velocity=(2.0 * q, 1.5 * q), color=(0.85, 0.75, 0.1),
                           labeled=False, moving=True)
    scenes = {
        "basic": (mover, second),
        "distractor": (mover, static),
        "novel": (unlabeled, static),
    }
    if name not in scenes:
        raise ConfigError(f"unknown scene {name!r} (choose from {sorted(scenes)})")
    return SyntheticConfig(height=size, width=size, n_frames=n_frames,
                           sprites=scenes[name], sequence=f"synth_{name}")


# --- commands ---------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = load_config(args.config)
    est = make_estimator(cfg, args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.data is not None:
        samples = [s for seq in load_dataset(args.data).values() for s in seq]
    else:
        samples = generate_synthetic(preset_scene(args.scene, args.size, args.frames),
                                     seed=est.seed)
    log_path = out / "train.log"
    with open(log_path, "a") as log:
        est.fit(samples, checkpoint_dir=str(out),
                resume_from=args.resume, log_fn=lambda line: print(line, file=log))
    est.save(out / "final.ckpt", epoch=est.epochs)
    print(f"trained {est.n_steps_} steps; checkpoint at {out / 'final.ckpt'}")
    return 0


def _oracle_results(samples, kind):
    """Testing stubs: predictions equal to ground truth or empty."""
    fg, inst = [], []
    for s in samples:
        if kind == "perfect":
            fg.append(s.gt_foreground)
            inst.append([m.copy() for m in s.gt_masks])
        else:
            fg.append(np.zeros(s.rgb.shape[:2], dtype=bool))
            inst.append([])
    return fg, inst


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    est = make_estimator(cfg, args)
    dataset = load_dataset(args.data)
    oracle = None
    if args.checkpoint.startswith("oracle:"):
        oracle = args.checkpoint.split(":", 1)[1]
        if oracle not in ("perfect", "empty"):
            raise ConfigError(f"unknown oracle stub {oracle!r}")
    else:
        est.load(args.checkpoint)
    per_sequence = {}
    for seq, samples in dataset.items():
        frames = []
        if oracle is not None:
            fg_maps, inst_masks = _oracle_results(samples, oracle)
        else:
            fg_maps = est.predict_foreground(samples)
            inst_masks = [[inst.mask for inst in r.instances]
                          for r in est.predict(samples)]
        for s, fg, instances in zip(samples, fg_maps, inst_masks):
            if args.task == "foreground":
                ev = binary_prf_iou(fg, s.gt_foreground)
            else:
                ev = multi_object_eval(instances, s.gt_masks)
            frames.append(ev)
        per_sequence[seq] = frames
    write_metrics_csv(args.out, per_sequence)
    print(f"metrics written to {args.out}")
    return 0


def _overlay(rgb, result: MovingInstanceResult) -> np.ndarray:
    out = (np.clip(rgb, 0, 1) * 255).astype(np.uint8).copy()
    rng = np.random.default_rng(5)
    for inst in result.instances:
        color = rng.integers(64, 255, size=3)
        out[inst.mask] = (0.45 * out[inst.mask] + 0.55 * color).astype(np.uint8)
    return out


def cmd_infer(args) -> int:
    cfg = load_config(args.config)
    est = make_estimator(cfg, args)
    est.load(args.checkpoint)
    samples = load_sequence(args.data, args.seq)
    out = Path(args.out)
    for sub in ("motion", "instances") + (("overlay",) if args.overlay else ()):
        (out / sub).mkdir(parents=True, exist_ok=True)
    results = est.predict(samples)
    fgs = est.predict_foreground(samples)
    for s, fg, res in zip(samples, fgs, results):
        stem = f"{s.index:05d}"
        Image.fromarray((fg * 255).astype(np.uint8)).save(out / "motion" / f"{stem}.png")
        save_instance_png(out / "instances" / f"{stem}.png", res, shape=fg.shape)
        if args.overlay:
            Image.fromarray(_overlay(s.rgb, res)).save(out / "overlay" / f"{stem}.png")
    total = sum(r.count for r in results)
    print(f"{len(samples)} frames, {total} moving instances; output in {out}")
    return 0


def cmd_profile(args) -> int:
    h, w = (int(v) for v in args.shape.split("x"))
    alpha = args.alpha
    rows = []
    print(f"== blocks on {h}x{w} (merge={args.merge}) ==")
    dense_spec = default_network_spec(alpha=0.0, attention=False)
    oct_spec = default_network_spec(alpha=alpha, attention=True)
    en1_dense, en1_oct = dense_spec.encoder[0], oct_spec.encoder[0]
    rb = profile_block(en1_dense, (h, w), args.merge)
    ob = profile_block(en1_oct, (h, w), args.merge)
    rb.name, ob.name = f"RSU-7(3,32,64)", f"ORSU-7(3,32,64) a={alpha}"
    print(compare(rb, ob).format())
    rows += [rb, ob]
    print(f"\n== networks on {h}x{w} ==")
    rn = profile_network(dense_spec, (h, w), args.merge)
    on = profile_network(oct_spec, (h, w), args.merge)
    rn.name, on.name = "dense network (a=0)", f"octave network (a={alpha})"
    print(compare(rn, on).format())
    rows += [rn, on]
    print("\n== alpha sweep (network GFLOPS) ==")
    for a in (0.0, 0.25, 0.5, 0.75):
        try:
            spec = default_network_spec(alpha=a, attention=True)
            rep = profile_network(spec, (h, w), args.merge)
            print(f"  alpha={a:<5} {rep.flops * 1e-9:8.2f}")
        except ConfigError as exc:
            print(f"  alpha={a:<5} skipped ({exc})")
    if args.csv:
        import csv as _csv

        with open(args.csv, "w", newline="") as fh:
            wtr = _csv.writer(fh)
            wtr.writerow(["name", "flops", "madd", "memory_bytes", "params"])
            for rep in rows:
                wtr.writerow([rep.name, f"{rep.flops:.0f}", f"{rep.madd:.0f}",
                              f"{rep.memory:.0f}", rep.params])
        print(f"profile CSV written to {args.csv}")
    return 0


def cmd_synth_data(args) -> int:
    samples = generate_synthetic(preset_scene(args.scene, args.size, args.frames),
                                 seed=args.seed)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    save_sequence(args.out, samples)
    print(f"wrote {len(samples)} frames of scene {args.scene!r} to {args.out}")
    return 0


def cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.data is not None:
        samples = [s for seq in load_dataset(args.data).values() for s in seq]
    else:
        samples = generate_synthetic(preset_scene("basic", args.size, args.frames),
                                     seed=cfg["run"]["seed"])
    rows = []
    for levels in range(1, 7):
        for mode in ("b", "bk"):
            tag = f"{levels}{mode}"
            est = make_estimator(cfg, args)
            est.set_params(loss=mode, loss_levels=levels)
            est.fit(samples)
            score = est.score(samples)
            rows.append((tag, score))
            est.save(out / f"run_{tag}.ckpt", epoch=est.epochs)
            print(f"run {tag}: train IoU {score:.4f}")
    with open(out / "ablation.csv", "w") as fh:
        fh.write("config,train_iou\n")
        for tag, score in rows:
            fh.write(f"{tag},{score:.6f}\n")
    print(f"12 runs complete; summary in {out / 'ablation.csv'}")
    return 0


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="u2onet",
                                description="moving-instance segmentation pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None, help="YAML run configuration")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--levels", type=int, choices=range(1, 7), default=None,
                        help="supervised levels (1..6)")
        sp.add_argument("--loss", choices=("b", "bk"), default=None)
        sp.add_argument("--alpha", type=float, default=None)
        sp.add_argument("--preset", choices=("motion", "image"), default=None)
        sp.add_argument("--threshold", type=float, default=None)
        sp.add_argument("--contour-min-length", type=int, default=None,
                        help="minimum contour length for NEW instances (default 200)")

    t = sub.add_parser("train", help="train a network")
    common(t)
    t.add_argument("--data", default=None, help="dataset root; omit to use a synthetic scene")
    t.add_argument("--scene", default="basic", help="synthetic scene when --data is omitted")
    t.add_argument("--size", type=int, default=64)
    t.add_argument("--frames", type=int, default=8)
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--batch-size", type=int, default=None)
    t.add_argument("--max-steps", type=int, default=None)
    t.add_argument("--resume", default=None, help="checkpoint to resume from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    common(e)
    e.add_argument("--checkpoint", required=True,
                   help="checkpoint path, or oracle:perfect / oracle:empty stubs")
    e.add_argument("--data", required=True)
    e.add_argument("--task", choices=("foreground", "multi"), default="foreground")
    e.add_argument("--out", required=True, help="metrics CSV path")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("infer", help="segment a sequence")
    common(i)
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--data", required=True)
    i.add_argument("--seq", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--overlay", action="store_true")
    i.set_defaults(func=cmd_infer)

    pr = sub.add_parser("profile", help="analytical block/network cost comparison")
    pr.add_argument("--alpha", type=float, default=0.5)
    pr.add_argument("--shape", default="256x256")
    pr.add_argument("--merge", choices=("conv", "concat"), default="conv")
    pr.add_argument("--csv", default=None)
    pr.set_defaults(func=cmd_profile)

    sd = sub.add_parser("synth-data", help="generate a synthetic sequence")
    sd.add_argument("--out", required=True)
    sd.add_argument("--scene", default="basic", choices=("basic", "distractor", "novel"))
    sd.add_argument("--size", type=int, default=64)
    sd.add_argument("--frames", type=int, default=8)
    sd.add_argument("--seed", type=int, default=0)
    sd.set_defaults(func=cmd_synth_data)

    ab = sub.add_parser("ablate", help="run the 12-configuration supervision grid")
    common(ab)
    ab.add_argument("--data", default=None)
    ab.add_argument("--size", type=int, default=32)
    ab.add_argument("--frames", type=int, default=6)
    ab.add_argument("--out", required=True)
    ab.add_argument("--epochs", type=int, default=None)
    ab.add_argument("--batch-size", type=int, default=None)
    ab.add_argument("--max-steps", type=int, default=None)
    ab.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ConfigError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - single-line diagnostic contract
        print(f"unexpected error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
