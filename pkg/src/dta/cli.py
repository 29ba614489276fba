"""Command-line front end: ``dta generate | align | eval | sweep``.

Exit codes
----------
0  success
1  other input or solver error (bad file, degenerate data, solver failure)
2  usage error (unknown dataset, bad flag or config value)
3  a point cannot reach any correspondence within ``t`` diffusion steps
4  infeasible transport mass
5  labels required but missing
"""
from __future__ import annotations

import argparse
import csv
import sys
import warnings
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import datasets, evaluation, io
from .datasets import PairedDataset
from .diffusion_bridge import CorrespondenceSet
from .errors import BadLabels, DTAError, InfeasibleMass, UnreachablePoint
from .kernel_graph import KernelConfig
from .pipeline import AlignmentResult, align

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_UNREACHABLE, EXIT_MASS, EXIT_LABELS = 0, 1, 2, 3, 4, 5

DATASETS = ("swiss-scurve", "helix", "blobs", "blob-chain", "mi-features", "mnist")
EVAL_TASKS = ("da", "reg", "concat", "mi", "match")
SWEEP_PARAMS = ("t", "k", "alpha", "fraction")

# every key a config file may set, with its default
DEFAULTS: Dict[str, object] = {
    "k": 10, "alpha": 10.0, "t": 10, "mu": 0.5,
    "mode": "exact", "mass": None, "mass_grid": None, "epsilon": None,
    "labels": False, "label_col": "label", "embed_dim": 0,
    "seed": 0, "repeats": 1, "out": "dta_out",
    # generate
    "dataset": None, "n": None, "n_per_class": None, "n_classes": None, "noise": None,
    "variance": None, "n_features": None, "fraction": 0.05, "keep1": None, "keep2": None,
    "images": None, "image_labels": None, "rotation": None, "blur": None,
    # inputs
    "data": None, "domain1": None, "domain2": None, "corr": None, "truth": None, "align_dir": None,
    # eval / sweep
    "task": None, "knn_k": None, "target": "domain2", "lam": 1e-2, "test_fraction": None,
    "top_k": 25, "bins": 16, "param": None, "values": None,
}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- config


def _int_list(text: str) -> List[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text: str) -> List[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _mass_value(text: str):
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--mass takes a number or 'auto', got {text!r}") from None


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the JSON config file, then explicitly given flags."""
    cfg = dict(DEFAULTS)
    if args.config is not None:
        loaded = io.read_json(args.config)
        if not isinstance(loaded, dict):
            raise UsageError(f"{args.config}: config must be a JSON object")
        unknown = sorted(set(loaded) - set(DEFAULTS) - {"command"})
        if unknown:
            raise UsageError(f"{args.config}: unknown config keys {unknown}")
        cfg.update({k: v for k, v in loaded.items() if k != "command"})
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            cfg[key] = value
    cfg["command"] = args.command
    if isinstance(cfg["mass"], str) and cfg["mass"] != "auto":
        cfg["mass"] = _mass_value(cfg["mass"])
    return cfg


def kernel_config(cfg: dict) -> KernelConfig:
    try:
        return KernelConfig(int(cfg["k"]), float(cfg["alpha"]), int(cfg["t"]), float(cfg["mu"]))
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- inputs


def _input_paths(cfg: dict) -> dict:
    data = Path(cfg["data"]) if cfg["data"] else None
    paths = {}
    for key, fname in (("domain1", "domain1.csv"), ("domain2", "domain2.csv"),
                       ("corr", "known.csv"), ("truth", "truth.csv")):
        if cfg[key]:
            paths[key] = Path(cfg[key])
        elif data is not None and (data / fname).exists():
            paths[key] = data / fname
    for key in ("domain1", "domain2"):
        if key not in paths:
            raise UsageError(f"missing input: give --data DIR or --{key}")
    return paths


def _label_col(path: Path, name: str) -> Optional[str]:
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), [])
    return name if name in [h.strip() for h in header] else None


def load_inputs(cfg: dict):
    """``(PairedDataset, CorrespondenceSet or None)`` from ``--data`` or explicit paths."""
    paths = _input_paths(cfg)
    name = cfg["label_col"]
    d1 = datasets.load_domain_csv(paths["domain1"], _label_col(paths["domain1"], name), "domain1")
    d2 = datasets.load_domain_csv(paths["domain2"], _label_col(paths["domain2"], name), "domain2")
    truth = datasets.load_pairs_csv(paths["truth"], d1.n, d2.n) if "truth" in paths else None
    corr = None
    if "corr" in paths:
        corr = CorrespondenceSet(datasets.load_pairs_csv(paths["corr"], d1.n, d2.n), d1.n, d2.n)
    return PairedDataset(d1, d2, truth), corr


def run_alignment(cfg: dict, pair: PairedDataset, corr: Optional[CorrespondenceSet]) -> AlignmentResult:
    if corr is None:
        raise UsageError("alignment needs a correspondence file (--corr or DIR/known.csv)")
    grid = cfg["mass_grid"]
    mass = cfg["mass"]
    if grid is not None and mass is None:
        mass = "auto"
    return align(
        pair.domain1, pair.domain2, corr, kernel_config(cfg),
        mass=mass, mode=cfg["mode"], epsilon=cfg["epsilon"],
        use_labels=bool(cfg["labels"]), mass_grid=grid,
    )


# ---------------------------------------------------------------- generate


def _generate(cfg: dict) -> PairedDataset:
    name, seed = cfg["dataset"], int(cfg["seed"])

    def opt(key, default):
        return default if cfg[key] is None else cfg[key]

    if name == "swiss-scurve":
        return datasets.gen_swiss_scurve(int(opt("n", 1000)), float(opt("noise", 0.0)), seed)
    if name == "helix":
        return datasets.gen_double_helix(int(opt("n", 1000)), float(opt("noise", 0.0)), seed)
    if name == "blobs":
        return datasets.gen_gaussian_blobs(int(opt("n_per_class", 200)), seed, float(opt("variance", 0.5)))
    if name == "blob-chain":
        base = datasets.gen_blob_chain(int(opt("n_per_class", 100)), int(opt("n_classes", 7)), seed)
        if cfg["keep1"] is None and cfg["keep2"] is None:
            return base
        classes = list(range(int(opt("n_classes", 7))))
        return datasets.gen_partial_overlap(base, opt("keep1", classes), opt("keep2", classes), seed)
    if name == "mi-features":
        return datasets.gen_mi_features(
            int(opt("n", 1000)), int(opt("n_features", 10)), seed, float(opt("noise", 0.05))
        )
    if name == "mnist":
        if cfg["images"] is None:
            raise UsageError("mnist needs --images (IDX file)")
        return datasets.gen_mnist_double(
            cfg["images"], cfg["image_labels"], seed,
            float(opt("rotation", 45.0)), float(opt("blur", 1.0)), cfg["n"],
        )
    raise UsageError(f"unknown dataset {name!r}; choose from {', '.join(DATASETS)}")


def cmd_generate(cfg: dict) -> int:
    pair = _generate(cfg)
    out = _out_dir(cfg)
    datasets.save_domain_csv(pair.domain1, out / "domain1.csv")
    datasets.save_domain_csv(pair.domain2, out / "domain2.csv")
    datasets.save_pairs_csv(pair.ground_truth, out / "truth.csv")
    corr = datasets.sample_correspondences(pair, float(cfg["fraction"]), seed=int(cfg["seed"]))
    datasets.save_pairs_csv(corr.pairs, out / "known.csv")
    files = ["domain1.csv", "domain2.csv", "truth.csv", "known.csv"]
    if pair.latent is not None and len(pair.latent) == pair.domain1.n:
        lat = pair.latent.reshape(pair.domain1.n, -1)
        names = [f"z{c}" for c in range(lat.shape[1])]
        datasets.save_domain_csv(datasets.DomainData(lat, feature_names=names), out / "latent.csv")
        files.append("latent.csv")
    io.write_json(dict(cfg, meta=pair.meta, files=files), out / "config.json")
    print(f"{cfg['dataset']}: n={pair.domain1.n} m={pair.domain2.n} "
          f"known={len(corr)} -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------- align


def write_alignment(res: AlignmentResult, pair: PairedDataset, cfg: dict, out: Path) -> dict:
    io.save_plan_csv(res.plan, out / "plan.csv")
    pairs = res.pairs()
    datasets.save_pairs_csv(pairs, out / "pairs.csv")
    proj, empty = res.project(pair.domain2)
    names = pair.domain2.feature_names or [f"x{c}" for c in range(pair.domain2.dim)]
    io.save_projection_csv(proj, empty, names, out / "projection.csv")
    files = ["plan.csv", "pairs.csv", "projection.csv"]
    if int(cfg["embed_dim"]) > 0:
        io.save_embedding_csv(res.embed(int(cfg["embed_dim"])), out / "embedding.csv")
        files.append("embedding.csv")
    run = {
        "n": res.n, "m": res.m, "n_correspondences": res.info["n_correspondences"],
        "mode": res.info["mode"], "method": res.plan.info.get("method"),
        "mass": res.plan.mass, "objective": res.plan.objective,
        "n_pairs": len(pairs), "label_augmented": res.label_augmented,
    }
    if res.mass_selection is not None:
        io.save_curve_csv(res.mass_selection.curve, out / "ntc.csv")
        files.append("ntc.csv")
        run.update(selected_mass=res.mass_selection.M_star, flat_curve=res.mass_selection.flat)
    run["files"] = files
    io.write_json(run, out / "run.json")
    return run


def cmd_align(cfg: dict) -> int:
    pair, corr = load_inputs(cfg)
    out = _out_dir(cfg)
    io.write_json(cfg, out / "config.json")
    res = run_alignment(cfg, pair, corr)
    run = write_alignment(res, pair, cfg, out)
    if "selected_mass" in run:
        print(f"selected mass M* = {run['selected_mass']!r}")
    print(f"mass {run['mass']!r}  objective {run['objective']!r}  pairs {run['n_pairs']}  -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------- eval


def _alignment_for_eval(cfg: dict, pair: PairedDataset, corr):
    """Plan and pairs from ``--align-dir`` if given, otherwise a fresh alignment."""
    if cfg["align_dir"]:
        d = Path(cfg["align_dir"])
        plan = io.load_plan_csv(d / "plan.csv", pair.domain1.n, pair.domain2.n)
        pairs = datasets.load_pairs_csv(d / "pairs.csv", pair.domain1.n, pair.domain2.n)
        return plan, pairs
    res = run_alignment(cfg, pair, corr)
    return res.plan, np.array(res.pairs(), dtype=int).reshape(-1, 2)


def _need_truth(pair: PairedDataset, task: str):
    if pair.ground_truth is None:
        raise UsageError(f"eval {task} needs a ground-truth pairing (--truth or DIR/truth.csv)")


def evaluate(cfg: dict, pair: PairedDataset, corr, plan, pairs) -> List[evaluation.EvalReport]:
    task = cfg["task"]
    ks = cfg["knn_k"] or [1]
    seeds = [int(cfg["seed"]) + r for r in range(int(cfg["repeats"]))]
    reports: List[evaluation.EvalReport] = []
    if task in ("da", "concat") and (pair.domain1.labels is None or pair.domain2.labels is None):
        raise BadLabels(f"eval {task} needs a '{cfg['label_col']}' column in both domain files")
    for seed in seeds:
        if task == "da":
            for k in ks:
                reports.append(evaluation.eval_domain_adaptation(plan, pair, int(k), seed))
        elif task == "concat":
            tf = 0.3 if cfg["test_fraction"] is None else float(cfg["test_fraction"])
            for k in ks:
                reports.extend(evaluation.eval_concat(pairs, pair, int(k), tf, seed).values())
        elif task == "reg":
            _need_truth(pair, task)
            if corr is None:
                raise UsageError("eval reg needs the known correspondences for the PriorInfo baseline")
            tf = 0.2 if cfg["test_fraction"] is None else float(cfg["test_fraction"])
            reports.extend(evaluation.eval_regression(
                pairs, pair, corr, cfg["target"], float(cfg["lam"]), None, tf, seed
            ).values())
        elif task == "match":
            _need_truth(pair, task)
            score = evaluation.match_accuracy(pairs, pair.ground_truth, pair.domain1.labels, pair.domain2.labels)
            reports.append(evaluation.EvalReport("match_exact", score.exact, {"n_pairs": len(pairs)}, seed))
            if score.label is not None:
                reports.append(evaluation.EvalReport("match_label", score.label, {"n_pairs": len(pairs)}, seed))
        elif task == "mi":
            _need_truth(pair, task)
            if corr is None:
                raise UsageError("eval mi needs the known correspondences")
            recs = evaluation.eval_mi_recovery(pairs, pair, corr, int(cfg["top_k"]), int(cfg["bins"]))
            for r in recs:
                params = {"feature1": r.feature1, "feature2": r.feature2, "bins": int(cfg["bins"])}
                tag = f"{r.feature1}:{r.feature2}"
                reports.append(evaluation.EvalReport(f"mi_reference[{tag}]", r.reference, params, seed))
                reports.append(evaluation.EvalReport(f"mi_known[{tag}]", r.known, params, seed))
                reports.append(evaluation.EvalReport(f"mi_recovered[{tag}]", r.recovered, params, seed))
        else:
            raise UsageError(f"unknown eval task {task!r}")
    return reports


def _write_reports(reports, out: Path):
    io.save_reports_csv(reports, out / "report.csv")
    summary = io.summarize(reports)
    io.save_summary_csv(summary, out / "summary.csv")
    return summary


def cmd_eval(cfg: dict) -> int:
    pair, corr = load_inputs(cfg)
    out = _out_dir(cfg)
    io.write_json(cfg, out / "config.json")
    if cfg["task"] in ("da", "concat") and (pair.domain1.labels is None or pair.domain2.labels is None):
        raise BadLabels(f"eval {cfg['task']} needs a '{cfg['label_col']}' column in both domain files")
    plan, pairs = _alignment_for_eval(cfg, pair, corr)
    summary = _write_reports(evaluate(cfg, pair, corr, plan, pairs), out)
    print(io.format_table(summary))
    return EXIT_OK


# ---------------------------------------------------------------- sweep


def _fmt_value(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def cmd_sweep(cfg: dict) -> int:
    param, values = cfg["param"], cfg["values"]
    if param not in SWEEP_PARAMS:
        raise UsageError(f"--param must be one of {', '.join(SWEEP_PARAMS)}")
    if not values:
        raise UsageError("--values needs at least one grid value")
    if cfg["task"] not in EVAL_TASKS:
        raise UsageError(f"--task must be one of {', '.join(EVAL_TASKS)}")
    pair, corr = load_inputs(cfg)
    out = _out_dir(cfg)
    io.write_json(cfg, out / "config.json")
    rows, metrics = [], []
    for value in values:
        point = dict(cfg, command="sweep-point", values=None)
        point[param] = int(value) if param in ("t", "k") else float(value)
        sub = out / f"{param}={_fmt_value(point[param])}"
        sub.mkdir(parents=True, exist_ok=True)
        point["out"] = str(sub)
        # sidecars differ only in the swept parameter
        io.write_json({k: v for k, v in point.items() if k != "out"}, sub / "config.json")
        row = {"value": point[param], "failed": 0, "error": ""}
        try:
            pc = corr
            if param == "fraction":
                if pair.ground_truth is None:
                    raise UsageError("sweeping fraction needs a ground-truth pairing")
                pc = datasets.sample_correspondences(pair, point["fraction"], seed=int(cfg["seed"]))
                datasets.save_pairs_csv(pc.pairs, sub / "known.csv")
            res = run_alignment(point, pair, pc)
            write_alignment(res, pair, point, sub)
            plan, pairs = res.plan, np.array(res.pairs(), dtype=int).reshape(-1, 2)
            summary = _write_reports(evaluate(point, pair, pc, plan, pairs), sub)
            for name, mean, std, _ in summary:
                row[f"{name}_mean"], row[f"{name}_std"] = mean, std
                if name not in metrics:
                    metrics.append(name)
        except (DTAError, UsageError) as exc:
            row.update(failed=1, error=f"{type(exc).__name__}: {exc}")
            print(f"{param}={_fmt_value(point[param])} failed: {exc}", file=sys.stderr)
        rows.append(row)
    columns = ["param", "value", "failed", "error"]
    for name in metrics:
        columns += [f"{name}_mean", f"{name}_std"]
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for row in rows:
            line = [param, _fmt_value(row["value"]), row["failed"], row["error"]]
            for c in columns[4:]:
                line.append(repr(float(row[c])) if c in row else "")
            wr.writerow(line)
    n_failed = sum(r["failed"] for r in rows)
    print(f"sweep {param}: {len(rows)} points, {n_failed} failed -> {out / 'sweep.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_common(p: argparse.ArgumentParser):
    g = p.add_argument_group("run")
    g.add_argument("--config", help="JSON file with defaults; flags override its values")
    g.add_argument("--out", help="output directory (default dta_out)")
    g.add_argument("--seed", type=int)
    g.add_argument("--repeats", type=int, help="number of consecutive seeds to evaluate")


def _add_inputs(p: argparse.ArgumentParser):
    g = p.add_argument_group("inputs")
    g.add_argument("--data", help="directory written by 'generate'")
    g.add_argument("--domain1")
    g.add_argument("--domain2")
    g.add_argument("--corr", help="known correspondences CSV with columns i,j")
    g.add_argument("--truth", help="ground-truth pairing CSV with columns i,j")
    g.add_argument("--label-col", dest="label_col", help="label column name (default 'label')")


def _add_alignment(p: argparse.ArgumentParser, k_flag: str = "--k"):
    g = p.add_argument_group("alignment")
    g.add_argument(k_flag, dest="k", type=int, help="k-NN bandwidth neighbour (default 10)")
    g.add_argument("--alpha", type=float, help="kernel decay exponent (default 10)")
    g.add_argument("--t", type=int, help="diffusion steps (default 10)")
    g.add_argument("--mu", type=float, help="intra-domain weight of the joint affinity (default 0.5)")
    g.add_argument("--mode", choices=("exact", "entropic"))
    g.add_argument("--mass", type=_mass_value, help="transported mass, or 'auto' for the NTC knee")
    g.add_argument("--mass-grid", dest="mass_grid", type=_float_list,
                   help="comma-separated mass grid for 'auto' selection")
    g.add_argument("--epsilon", type=float, help="entropic regularisation")
    g.add_argument("--labels", action="store_const", const=True, help="add the label mismatch cost")
    g.add_argument("--embed-dim", dest="embed_dim", type=int, help="write a joint embedding of this dimension")


def _add_eval(p: argparse.ArgumentParser, knn_flag: str = "--knn"):
    g = p.add_argument_group("evaluation")
    g.add_argument("--align-dir", dest="align_dir", help="reuse plan.csv/pairs.csv from an 'align' run")
    g.add_argument(knn_flag, dest="knn_k", type=int, action="append",
                   help="kNN neighbours; repeat for several (default 1)")
    g.add_argument("--target", choices=("domain2", "latent"))
    g.add_argument("--lam", type=float, help="kernel ridge penalty (default 1e-2)")
    g.add_argument("--test-fraction", dest="test_fraction", type=float)
    g.add_argument("--top-k", dest="top_k", type=int, help="feature pairs kept for MI (default 25)")
    g.add_argument("--bins", type=int, help="histogram bins for MI (default 16)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dta", description="Diffusion Transport Alignment")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic paired dataset")
    gen.add_argument("dataset", choices=DATASETS)
    gen.add_argument("--n", type=int)
    gen.add_argument("--n-per-class", dest="n_per_class", type=int)
    gen.add_argument("--n-classes", dest="n_classes", type=int)
    gen.add_argument("--noise", type=float)
    gen.add_argument("--variance", type=float)
    gen.add_argument("--n-features", dest="n_features", type=int)
    gen.add_argument("--fraction", type=float, help="fraction of pairs written to known.csv (default 0.05)")
    gen.add_argument("--keep1", type=_int_list, help="blob-chain classes kept in domain 1")
    gen.add_argument("--keep2", type=_int_list, help="blob-chain classes kept in domain 2")
    gen.add_argument("--images", help="MNIST image IDX file")
    gen.add_argument("--image-labels", dest="image_labels", help="MNIST label IDX file")
    gen.add_argument("--rotation", type=float)
    gen.add_argument("--blur", type=float)
    _add_common(gen)

    al = sub.add_parser("align", help="align two domains")
    _add_inputs(al)
    _add_alignment(al)
    _add_common(al)

    ev = sub.add_parser("eval", help="evaluate an alignment")
    ev.add_argument("task", choices=EVAL_TASKS)
    _add_inputs(ev)
    # in 'eval', --k is the classifier's neighbour count; the graph k is --graph-k
    _add_alignment(ev, k_flag="--graph-k")
    _add_eval(ev, knn_flag="--k")
    _add_common(ev)

    sw = sub.add_parser("sweep", help="repeat align + eval over a parameter grid")
    sw.add_argument("--param", choices=SWEEP_PARAMS, required=True)
    sw.add_argument("--values", type=_float_list, required=True, help="comma-separated grid")
    sw.add_argument("--task", choices=EVAL_TASKS, required=True)
    _add_inputs(sw)
    _add_alignment(sw)
    _add_eval(sw)
    _add_common(sw)
    return parser


COMMANDS = {"generate": cmd_generate, "align": cmd_align, "eval": cmd_eval, "sweep": cmd_sweep}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = resolve_config(args)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"dta: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UnreachablePoint as exc:
        print(f"dta: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    except InfeasibleMass as exc:
        print(f"dta: infeasible mass: {exc}", file=sys.stderr)
        return EXIT_MASS
    except BadLabels as exc:
        print(f"dta: missing labels: {exc}", file=sys.stderr)
        return EXIT_LABELS
    except (DTAError, ValueError) as exc:
        print(f"dta: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
