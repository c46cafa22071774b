"""``rsdf`` command line: synth, segment, train, infer, refine, eval."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import metrics, pipeline, synth
from .errors import NumericalError, RsdfError
from .imageio import binarize_mask, load_rgbd, read_gray, read_saliency_png, write_saliency_png
from .nn.serialize import load_model, save_model
from .nn.train import read_loss_log, train, write_loss_log
from .propagate import DegenerateSaliencyWarning, refine_external
from .superpixel import slic_segment, region_stats, write_label_png, write_stats_csv

EXIT_OK, EXIT_INPUT, EXIT_MODEL, EXIT_NUMERICAL = 0, 2, 3, 4
MODEL_FILE = "model.rsdf"
LOSS_LOG = "loss_log.csv"
CONFIG_ECHO = "config.json"

log = logging.getLogger("rsdf")


class InputError(RsdfError):
    pass


class ModelError(RsdfError):
    pass


def _setup_logging():
    level = os.environ.get("RSDF_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        level = "error"
    logging.basicConfig(level=levels[level], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _pngs(folder):
    return {p.stem: p for p in sorted(Path(folder).glob("*.png"))} if Path(folder).is_dir() else {}


def scan_dataset(root, need_gt=True):
    """Return ``[(name, rgb, depth, gt)]`` or raise InputError listing every problem file."""
    root = Path(root)
    subs = ("rgb", "depth", "gt") if need_gt else ("rgb", "depth")
    found = {s: _pngs(root / s) for s in subs}
    problems = [f"missing directory {root / s}" for s in subs if not (root / s).is_dir()]
    names = sorted(set().union(*found.values()))
    for name in names:
        for s in subs:
            if name not in found[s]:
                problems.append(f"{name}: no {s}/{name}.png")
    if not names and not problems:
        problems.append(f"{root}: no images")
    if problems:
        raise InputError("dataset problems:\n  " + "\n  ".join(problems))
    return [(n, found["rgb"][n], found["depth"][n], found["gt"][n] if need_gt else None) for n in names]


def _load_config(args):
    cfg = pipeline.PipelineConfig.load(args.config) if getattr(args, "config", None) else pipeline.PipelineConfig()
    d = cfg.to_dict()
    for key in ("n_superpixels", "alpha", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            d[key] = val
    for key in ("epochs", "lr_start", "lr_end", "patches_per_image", "init_gain", "batch_size"):
        val = getattr(args, key, None)
        if val is not None:
            d["train"][key] = val
    if getattr(args, "seed", None) is not None:
        d["train"]["seed"] = args.seed
    return pipeline.PipelineConfig.from_dict(d)


def _echo_config(cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    cfg.dump(os.path.join(out_dir, CONFIG_ECHO))


def _load_net(path):
    try:
        return load_model(path)
    except (OSError, RsdfError) as exc:
        raise ModelError(f"cannot use model {path}: {exc}") from exc


def cmd_synth(args):
    names = synth.write_dataset(args.out, args.n, seed=args.seed or 0, height=args.height, width=args.width)
    log.info("wrote %d scenes to %s", len(names), args.out)


def cmd_segment(args):
    img = load_rgbd(args.rgb, args.depth)
    seg = slic_segment(img, args.n_superpixels or 1024, args.compactness)
    os.makedirs(args.out, exist_ok=True)
    write_label_png(seg, os.path.join(args.out, img.name + "_labels.png"))
    write_stats_csv(region_stats(seg, img), os.path.join(args.out, img.name + "_regions.csv"))


def cmd_train(args):
    cfg = _load_config(args)
    cfg.train_root = args.train_root or cfg.train_root
    cfg.output_dir = args.out
    if not cfg.train_root:
        raise InputError("no training root given")
    cfg.require_cnn_layout()
    items = scan_dataset(cfg.train_root, need_gt=True)
    dataset = [load_rgbd(r, d, g) for _, r, d, g in items]
    _echo_config(cfg, args.out)
    model_path = os.path.join(args.out, MODEL_FILE)
    log_path = os.path.join(args.out, LOSS_LOG)
    net, offset = None, 0
    if args.resume and os.path.exists(model_path):
        net = _load_net(model_path)
        if os.path.exists(log_path):
            rows = read_loss_log(log_path)
            offset = rows[-1]["epoch"] + 1 if rows else 0
    net, history = train(dataset, cfg.train, pipeline.PatchMaker(cfg), net=net, epoch_offset=offset, jobs=args.jobs)
    save_model(net, model_path)
    write_loss_log(history, log_path, append=bool(args.resume and offset))


def _input_items(args):
    if args.root:
        return [(n, r, d) for n, r, d, _ in scan_dataset(args.root, need_gt=False)]
    if not args.rgb or not args.depth or len(args.rgb) != len(args.depth):
        raise InputError("give --root, or matching numbers of --rgb and --depth files")
    return [(Path(r).stem, r, d) for r, d in zip(args.rgb, args.depth)]


def _infer_one(job):
    net, cfg, name, rgb, depth, out, propagate, save_initial = job
    img = load_rgbd(rgb, depth)
    pred = pipeline.predict(net, img, cfg, propagate=propagate)
    if propagate:
        write_saliency_png(pred.refined.pixels, os.path.join(out, name + ".png"))
        if save_initial:
            write_saliency_png(pred.initial, os.path.join(out, "initial", name + ".png"))
    else:
        write_saliency_png(pred.initial, os.path.join(out, name + ".png"))
    return name


def _run(fn, jobs, work):
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(fn, work))
    return [fn(w) for w in work]


def cmd_infer(args):
    cfg = _load_config(args)
    cfg.require_cnn_layout()
    net = _load_net(args.model)
    items = _input_items(args)
    os.makedirs(args.out, exist_ok=True)
    if args.save_initial and not args.no_propagation:
        os.makedirs(os.path.join(args.out, "initial"), exist_ok=True)
    _echo_config(cfg, args.out)
    work = [(net, cfg, n, r, d, args.out, not args.no_propagation, args.save_initial) for n, r, d in items]
    _run(_infer_one, args.jobs, work)


def cmd_refine(args):
    cfg = _load_config(args)
    img = load_rgbd(args.rgb, args.depth)
    smap = read_saliency_png(args.map)
    if smap.max() > 0:
        smap = smap / smap.max()
    out = refine_external(smap, img, cfg.n_superpixels, cfg.compactness, **cfg.propagation_params())
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_saliency_png(out.pixels, args.out)


def _load_pair(job):
    pred_path, gt_path = job
    pred = read_saliency_png(pred_path)
    return pred, binarize_mask(read_gray(gt_path)).astype(bool)


def cmd_eval(args):
    preds, gts = _pngs(args.pred), _pngs(args.gt)
    if not preds and not gts:
        raise InputError(f"no PNG files in {args.pred} or {args.gt}")
    only_pred, only_gt = sorted(set(preds) - set(gts)), sorted(set(gts) - set(preds))
    if only_pred or only_gt:
        lines = [f"{n}: prediction without ground truth" for n in only_pred]
        lines += [f"{n}: ground truth without prediction" for n in only_gt]
        raise InputError("file name mismatch:\n  " + "\n  ".join(lines))
    names = sorted(preds)
    pairs = _run(_load_pair, args.jobs, [(preds[n], gts[n]) for n in names])
    maps, masks = [p for p, _ in pairs], [g for _, g in pairs]
    os.makedirs(args.out, exist_ok=True)
    metrics.write_curve_csv(metrics.pr_curve(maps, masks), os.path.join(args.out, "pr_curve.csv"))
    scores = metrics.adaptive_scores(maps, masks)
    metrics.write_summary_csv(os.path.join(args.out, "summary.csv"), args.dataset, len(names), scores)
    print(f"{args.dataset}: F={scores.f_measure:.4f} P={scores.precision:.4f} R={scores.recall:.4f} ({len(names)} images)")


def build_parser():
    ap = argparse.ArgumentParser(prog="rsdf", description="RGBD salient object detection")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, jobs=True):
        p.add_argument("--config", help="JSON pipeline config; flags below override it")
        p.add_argument("--seed", type=int)
        if jobs:
            p.add_argument("--jobs", type=int, default=1, help="worker processes (output does not depend on it)")

    p = sub.add_parser("synth", help="write a synthetic RGBD dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("segment", help="superpixel labels and region statistics for one image")
    p.add_argument("--rgb", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-superpixels", dest="n_superpixels", type=int)
    p.add_argument("--compactness", type=float, default=10.0)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("train", help="train the CNN on a dataset with rgb/, depth/, gt/")
    common(p)
    p.add_argument("--train-root", dest="train_root")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr-start", dest="lr_start", type=float)
    p.add_argument("--lr-end", dest="lr_end", type=float)
    p.add_argument("--init-gain", dest="init_gain", type=float)
    p.add_argument("--patches-per-image", dest="patches_per_image", type=int)
    p.add_argument("--resume", action="store_true", help="continue from OUT/model.rsdf and append to the loss log")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="saliency maps from a trained model")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--root", help="directory with rgb/ and depth/")
    p.add_argument("--rgb", nargs="*")
    p.add_argument("--depth", nargs="*")
    p.add_argument("--out", required=True)
    p.add_argument("--no-propagation", action="store_true", help="write the raw CNN probability map only")
    p.add_argument("--save-initial", action="store_true", help="also write pre-propagation maps to OUT/initial/")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("refine", help="propagate an external saliency map over an RGBD image")
    common(p, jobs=False)
    p.add_argument("--map", required=True)
    p.add_argument("--rgb", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("eval", help="PR curve and F-measure of predicted maps against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dataset", default="dataset")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_eval)
    return ap


def _report_warnings(caught):
    seen = set()
    for w in caught:
        text = str(w.message)
        if issubclass(w.category, DegenerateSaliencyWarning):
            if text not in seen:
                seen.add(text)
                print(f"rsdf: warning: {text}", file=sys.stderr)
        else:
            warnings.showwarning(w.message, w.category, w.filename, w.lineno)


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DegenerateSaliencyWarning)
            args.func(args)
        _report_warnings(caught)
    except ModelError as exc:
        print(f"rsdf: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except NumericalError as exc:
        print(f"rsdf: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (RsdfError, OSError, json.JSONDecodeError) as exc:
        print(f"rsdf: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
