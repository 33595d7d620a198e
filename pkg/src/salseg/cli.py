"""Command line entry point.

Exit status is 0 on success, 1 for validation/domain errors and 2 for I/O
errors.  Reports go to stdout unless ``--out`` is given.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io as sio
from .masks import IGNORE_LABEL, VOC, DomainError
from .metrics import ConfusionMatrix, MetricConfig, confusion, dataset_saliency_scores, segmentation_scores
from .ranking import RankConfig, semantic_rank
from .stats import case_study, case_study_csv, cooccurrence, distribution, plot_distribution

log = logging.getLogger("salseg")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def _emit(text: str, out):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _pmap(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))
    return [fn(i) for i in items]


def _rank_one(job):
    rec_id, sem_path, sal_path, cfg = job
    sem = sio.load_semantic_mask(sem_path)
    sal = sio.load_saliency_map(sal_path)
    return semantic_rank(sem, sal, cfg, image=rec_id), sem


def rank_manifest(m: sio.DatasetManifest, cfg: RankConfig, jobs: int = 1):
    """Rank every record; returns ``(tables, semantic masks)`` in manifest order."""
    jobs_in = []
    for r in m.records:
        if r.semantic is None or r.saliency is None:
            raise DomainError(f"record {r.id!r} needs both semantic and saliency paths")
        jobs_in.append((r.id, m.resolve(r.semantic), m.resolve(r.saliency), cfg))
    pairs = _pmap(_rank_one, jobs_in, jobs)
    return [t for t, _ in pairs], [s for _, s in pairs]


def _rank_cfg(args) -> RankConfig:
    return RankConfig(tau=args.tau, saliency_floor=args.saliency_floor)


def cmd_rank(args):
    cfg = _rank_cfg(args)
    target = Path(args.target)
    if target.suffix == ".json" and target.exists():
        m = sio.load_manifest(target)
        tables, _ = rank_manifest(m, cfg, args.jobs)
        _emit(_dump([t.to_json() for t in tables]), args.out)
        return 0
    m = sio.load_manifest(args.manifest)
    r = m.get(args.target)
    table, _ = _rank_one((r.id, m.resolve(r.semantic), m.resolve(r.saliency), cfg))
    _emit(_dump(table.to_json()), args.out)
    return 0


def cmd_stats(args):
    m = sio.load_manifest(args.manifest)
    tables, sems = rank_manifest(m, _rank_cfg(args), args.jobs)
    d = distribution(tables, sems, len(VOC))
    text = _dump(d.to_json()) if args.format == "json" else d.to_csv()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"distribution.{args.format}").write_text(text)
        plot_distribution(d, out / "distribution.svg")
        (out / "ranks.json").write_text(_dump([t.to_json() for t in tables]))
    else:
        sys.stdout.write(text)
    return 0


def cmd_cooccur(args):
    m = sio.load_manifest(args.manifest)
    tables, _ = rank_manifest(m, _rank_cfg(args), args.jobs)
    if args.focus:
        focus = VOC.index(args.focus) if not args.focus.isdigit() else int(args.focus)
        rows = case_study(tables, focus, args.top)
        if args.format == "json":
            text = _dump({"focus": VOC.name(focus), "rows": [
                {"category": VOC.name(r.category), "count": r.count,
                 "focus_higher": r.focus_higher, "other_higher": r.other_higher} for r in rows]})
        else:
            text = case_study_csv(rows, focus)
    else:
        c = cooccurrence(tables)
        text = _dump(c.to_json()) if args.format == "json" else c.to_csv()
    _emit(text, args.out)
    return 0


def _paired(pred_m, gt_m, kind):
    gt_by_id = {r.id: r for r in gt_m.records}
    missing = [r.id for r in pred_m.records if r.id not in gt_by_id]
    if missing:
        raise DomainError(f"predictions without ground truth: {missing}")
    for r in pred_m.records:
        g = gt_by_id[r.id]
        if getattr(r, kind) is None or getattr(g, kind) is None:
            raise DomainError(f"record {r.id!r} lacks a {kind} path")
        yield pred_m.resolve(getattr(r, kind)), gt_m.resolve(getattr(g, kind))


def cmd_eval_sal(args):
    cfg = MetricConfig(beta_squared=args.beta2, num_thresholds=args.thresholds)
    preds, gts = [], []
    for p, g in _paired(sio.load_manifest(args.pred), sio.load_manifest(args.gt), "saliency"):
        preds.append(sio.load_saliency_map(p))
        gts.append(sio.binarize(sio.load_saliency_map(g), args.gt_threshold))
    s = dataset_saliency_scores(preds, gts, cfg, args.auc_mode)
    if args.format == "json":
        text = _dump(s.to_json())
    else:
        text = f"Fm,AUC,MAE\n{s.f_measure_max:.3f},{s.auc:.3f},{s.mae:.3f}\n"
    _emit(text, args.out)
    return 0


def cmd_eval_sem(args):
    cm = ConfusionMatrix.zeros(len(VOC) + 1)
    for p, g in _paired(sio.load_manifest(args.pred), sio.load_manifest(args.gt), "semantic"):
        cm = cm + confusion(sio.load_semantic_mask(p), sio.load_semantic_mask(g),
                            ignore_label=255, num_classes=len(VOC) + 1)
    s = segmentation_scores(cm)
    _emit(_dump(s.to_json()) if args.format == "json" else s.to_csv(), args.out)
    return 0


def _net_config(kv: dict, variant=None):
    from .net import make_config

    return make_config(
        variant or kv.get("variant", "v2"),
        num_sem_classes=int(kv.get("num_sem_classes", 4)),
        in_channels=int(kv.get("in_channels", 3)),
        width=int(kv.get("width", 16)),
        branch_depth=int(kv.get("branch_depth", 2)),
    )


def _training_data(kv: dict, root: Path, seed: int):
    """Manifest images when ``manifest`` is configured, else one synthetic scene."""
    if "manifest" in kv:
        m = sio.load_manifest(root / kv["manifest"])
        if kv.get("split"):
            m = m.split(kv["split"])
        thr = float(kv.get("gt_threshold", 0.5))
        return [(sio.load_image(m.resolve(r.image)), sio.load_semantic_mask(m.resolve(r.semantic)),
                 sio.binarize(sio.load_saliency_map(m.resolve(r.saliency)), thr)) for r in m.records]
    return [sio.synthetic_training_scene(int(kv.get("size", 32)), int(kv.get("num_sem_classes", 4)) - 1, seed)]


def cmd_train(args):
    from .net import train

    kv = sio.read_config(args.config)
    seed = args.seed if args.seed is not None else int(kv.get("seed", 0))
    cfg = _net_config(kv, args.variant)
    data = _training_data(kv, Path(args.config).parent, seed)
    params, trace = train(cfg, data, lr=float(kv.get("lr", 0.1)), steps=int(kv.get("steps", 500)), seed=seed,
                          ignore_label=IGNORE_LABEL)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    sio.save_checkpoint(params, out / "params.bin", {"config": kv, "variant": cfg.variant.value, "seed": seed})
    sio.write_loss_trace(trace, out / "loss.csv")
    print(f"variant={cfg.variant.value} steps={len(trace)} initial_loss={trace[0]:.6f} final_loss={trace[-1]:.6f}")
    return 0


def cmd_gradcheck(args):
    from .net import gradcheck, init_params

    kv = sio.read_config(args.config) if args.config else {"width": "8"}
    seed = args.seed if args.seed is not None else int(kv.get("seed", 0))
    variants = [args.variant] if args.variant else ["v0", "v1", "v2", "v3", "v4"]
    size = int(kv.get("size", 16))
    ok = True
    for v in variants:
        cfg = _net_config(kv, v)
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(1, cfg.in_channels, size, size))
        sem = rng.integers(0, cfg.num_sem_classes, size=(size, size))
        sal = rng.integers(0, 2, size=(size, size))
        res = gradcheck(cfg, init_params(cfg, seed), x, sem, sal, step=args.step, tolerance=args.tolerance)
        print(f"{cfg.variant.value} {res.report()}")
        ok &= res.passed
    return 0 if ok else 1


def cmd_synth(args):
    out = Path(args.out or "synth")
    args.seed = args.seed or 0
    if args.spec:
        d = json.loads(Path(args.spec).read_text())
        spec = sio.SyntheticSceneSpec(
            int(d["height"]), int(d["width"]),
            tuple(sio.Region(int(r["category"]), tuple(r["rect"]), float(r["level"]), float(r.get("coverage", 1.0)))
                  for r in d.get("regions", [])),
            int(d.get("seed", args.seed)), int(d.get("num_categories", len(VOC))), bool(d.get("allow_ties", False)),
        )
        out.mkdir(parents=True, exist_ok=True)
        iid = d.get("id", "scene")
        sem, sal, table = sio.generate_synthetic(spec, args.tau, iid)
        sio.save_semantic_mask(sem, out / f"{iid}_sem.png")
        sio.save_saliency_map(sal, out / f"{iid}_sal.png")
        sio.save_image(sio.render_image(sem, spec.seed), out / f"{iid}.png")
        sio.DatasetManifest([sio.ManifestRecord(iid, f"{iid}_sem.png", f"{iid}_sal.png", f"{iid}.png")],
                            out).save(out / "manifest.json")
        (out / "expected_ranks.json").write_text(_dump([table.to_json()]))
    else:
        m = sio.write_synthetic_dataset(out, args.count, args.size, args.seed, tau=args.tau)
        if args.train_count is not None:
            sio.random_split(m, args.train_count, args.seed).save(out / "manifest.json")
    print(f"wrote {out / 'manifest.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="salseg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output file (directory for stats/train/synth)")
    common.add_argument("--format", choices=("json", "csv"), help="report format (default differs per command)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--jobs", type=int, default=1, help="worker processes for per-image work")

    ranking = argparse.ArgumentParser(add_help=False)
    ranking.add_argument("--tau", type=float, default=0.5, help="coverage threshold")
    ranking.add_argument("--saliency-floor", type=float, default=0.0)

    metric = argparse.ArgumentParser(add_help=False)
    metric.add_argument("--beta2", type=float, default=0.3)
    metric.add_argument("--thresholds", type=int, default=256)

    s = sub.add_parser("rank", parents=[common, ranking], help="rank categories of one image or a manifest")
    s.add_argument("target", help="manifest .json, or an image id looked up in --manifest")
    s.add_argument("--manifest", default="manifest.json")
    s.set_defaults(func=cmd_rank)

    s = sub.add_parser("stats", parents=[common, ranking], help="category distribution table and chart")
    s.add_argument("manifest")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("cooccur", parents=[common, ranking], help="co-occurrence / precedence matrices")
    s.add_argument("manifest")
    s.add_argument("--focus", help="category name or index for a case study")
    s.add_argument("--top", type=int, default=7)
    s.set_defaults(func=cmd_cooccur)

    s = sub.add_parser("eval-sal", parents=[common, metric], help="saliency metrics")
    s.add_argument("pred", help="manifest of predicted saliency maps")
    s.add_argument("gt", help="manifest of ground-truth saliency maps")
    s.add_argument("--gt-threshold", type=float, default=0.5)
    s.add_argument("--auc-mode", choices=("per_image", "pooled"), default="per_image")
    s.set_defaults(func=cmd_eval_sal, default_format="json")

    s = sub.add_parser("eval-sem", parents=[common], help="segmentation metrics")
    s.add_argument("pred", help="manifest of predicted label masks")
    s.add_argument("gt", help="manifest of ground-truth label masks")
    s.set_defaults(func=cmd_eval_sem, default_format="json")

    s = sub.add_parser("train", parents=[common], help="train a toy network from a key=value config")
    s.add_argument("config")
    s.add_argument("--variant")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("gradcheck", parents=[common], help="backprop vs central finite differences")
    s.add_argument("config", nargs="?")
    s.add_argument("--variant")
    s.add_argument("--step", type=float, default=1e-5)
    s.add_argument("--tolerance", type=float, default=1e-4)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("synth", parents=[common, ranking], help="write a synthetic dataset")
    s.add_argument("spec", nargs="?", help="optional scene spec JSON (single scene)")
    s.add_argument("--count", type=int, default=10)
    s.add_argument("--size", type=int, default=32)
    s.add_argument("--train-count", type=int, default=None, help="materialise a seeded train/test split")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.format is None:
        args.format = getattr(args, "default_format", "csv")
    try:
        return args.func(args)
    except (DomainError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
