"""CSV and JSON writers/readers for run outputs."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .alignment import Embedding
from .datasets import ParseError
from .evaluation import EvalReport
from .transport import MASS_TOL, TransportPlan


def _fmt(x: float) -> str:
    return repr(float(x))


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _read_rows(path) -> Tuple[List[str], List[List[str]]]:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ParseError(f"{path}: empty file")
    return [h.strip() for h in rows[0]], rows[1:]


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def save_plan_csv(plan: TransportPlan, path, tol: float = MASS_TOL) -> None:
    """Sparse triplets ``row,col,mass`` for every entry above ``tol``."""
    rows, cols = plan.support(tol)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = _writer(fh)
        wr.writerow(["row", "col", "mass"])
        for i, j in zip(rows, cols):
            wr.writerow([int(i), int(j), _fmt(plan.values[i, j])])


def load_plan_csv(path, n: int, m: int) -> TransportPlan:
    """Dense plan from sparse triplets; the objective is unknown and set to NaN."""
    header, rows = _read_rows(path)
    if header[:3] != ["row", "col", "mass"]:
        raise ParseError(f"{path}: plan file needs header row,col,mass, got {header}")
    T = np.zeros((n, m))
    for lineno, r in enumerate(rows, start=2):
        try:
            i, j, x = int(r[0]), int(r[1]), float(r[2])
        except (ValueError, IndexError):
            raise ParseError(f"{path}:{lineno}: malformed triplet {r}") from None
        if not (0 <= i < n and 0 <= j < m):
            raise ParseError(f"{path}:{lineno}: index ({i}, {j}) outside a {n}x{m} plan")
        T[i, j] = x
    return TransportPlan(T, float("nan"), float(T.sum()))


def save_curve_csv(curve: Iterable[Tuple[float, float]], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = _writer(fh)
        wr.writerow(["mass", "ntc"])
        for M, c in curve:
            wr.writerow([_fmt(M), _fmt(c)])


def save_projection_csv(proj: np.ndarray, empty: np.ndarray, names: Sequence[str], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = _writer(fh)
        wr.writerow(["row_index"] + list(names) + ["empty"])
        for r in range(proj.shape[0]):
            wr.writerow([r] + [_fmt(x) for x in proj[r]] + [int(bool(empty[r]))])


def save_embedding_csv(emb: Embedding, path) -> None:
    d = emb.coordinates.shape[1]
    index = np.zeros(len(emb.domain_of_row), dtype=int)
    for tag in (1, 2):
        mask = emb.domain_of_row == tag
        index[mask] = np.arange(mask.sum())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = _writer(fh)
        wr.writerow(["domain", "row_index"] + [f"coord_{c}" for c in range(d)])
        for r in range(len(index)):
            wr.writerow([int(emb.domain_of_row[r]), int(index[r])] + [_fmt(x) for x in emb.coordinates[r]])


def save_reports_csv(reports: Sequence[EvalReport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = _writer(fh)
        wr.writerow(["metric", "value", "seed", "params_json"])
        for rep in reports:
            params = json.dumps(rep.config, sort_keys=True, default=_json_default)
            wr.writerow([rep.metric_name, _fmt(rep.value), int(rep.split_seed), params])


def summarize(reports: Sequence[EvalReport]) -> List[Tuple[str, float, float, int]]:
    """``(metric, mean, std, count)`` per metric, in order of first appearance."""
    groups: dict = {}
    for rep in reports:
        groups.setdefault(rep.metric_name, []).append(rep.value)
    out = []
    for name, vals in groups.items():
        a = np.asarray(vals, dtype=float)
        out.append((name, float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0, int(a.size)))
    return out


def save_summary_csv(summary, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = _writer(fh)
        wr.writerow(["metric", "mean", "std", "n"])
        for name, mean, std, count in summary:
            wr.writerow([name, _fmt(mean), _fmt(std), count])


def format_table(summary) -> str:
    width = max([len("metric")] + [len(s[0]) for s in summary])
    lines = [f"{'metric':<{width}}  {'mean':>10}  {'std':>10}  {'n':>3}"]
    for name, mean, std, count in summary:
        lines.append(f"{name:<{width}}  {mean:>10.6f}  {std:>10.6f}  {count:>3}")
    return "\n".join(lines)
