"""Aggregation of per-seed metric fragments into versioned JSON and CSV reports"""
import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from domain.constants import SCHEMA_VERSION
from domain.errors import EvaluationError
from domain.models import METRIC_FIELDS

logger = logging.getLogger(__name__)

AP_INTERPOLATION = "all-point"
AGGREGATION = "mean and median over seeds; a metric missing from a seed is left out of that metric's statistics"
REPORT_KEYS = ("seed", "policy", "score_kind")


def summarize(values: list[float]) -> dict:
    """Mean and median of the non-missing values"""
    present = [float(v) for v in values if v is not None]
    if not present:
        return {"mean": None, "median": None, "n": 0}
    return {"mean": float(np.mean(present)), "median": float(np.median(present)), "n": len(present)}


def aggregate(fragments: list[dict]) -> dict[str, dict]:
    return {name: summarize([f.get(name) for f in fragments]) for name in METRIC_FIELDS}


def _fragment_order(fragment: dict) -> tuple:
    return (int(fragment.get("seed", 0)), str(fragment.get("policy", "")), str(fragment.get("score_kind", "")))


@dataclass
class MetricsReport:
    per_seed: list[dict]
    aggregate: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "ap_interpolation": AP_INTERPOLATION,
            "aggregation": AGGREGATION,
            "per_seed": self.per_seed,
            "aggregate": self.aggregate,
        }

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["row", *REPORT_KEYS, *METRIC_FIELDS])
        for fragment in self.per_seed:
            writer.writerow(["seed", *(fragment.get(k, "") for k in REPORT_KEYS), *(_cell(fragment.get(m)) for m in METRIC_FIELDS)])
        for stat in ("mean", "median"):
            writer.writerow([stat, "", "", "", *(_cell(self.aggregate[m][stat]) for m in METRIC_FIELDS)])
        return out.getvalue()


def _cell(value) -> str:
    return "" if value is None else f"{value:.9g}"


def report(fragments: list[dict]) -> MetricsReport:
    """Aggregate fragments; output order does not depend on input order"""
    if not fragments:
        raise EvaluationError("report needs at least one metrics fragment")
    per_seed = sorted((dict(f) for f in fragments), key=_fragment_order)
    return MetricsReport(per_seed=per_seed, aggregate=aggregate(per_seed))


def write_report(metrics_report: MetricsReport, out_dir: str | Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "report.json"
    csv_path = out_dir / "report.csv"
    json_path.write_text(json.dumps(metrics_report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    csv_path.write_text(metrics_report.to_csv(), encoding="utf-8")
    logger.info("wrote %s and %s (%d fragments)", json_path, csv_path, len(metrics_report.per_seed))
    return json_path, csv_path


def load_fragments(paths: list[str | Path]) -> list[dict]:
    """Read metric fragments from JSON files holding one fragment or a list of them"""
    fragments = []
    for path in paths:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        items = data if isinstance(data, list) else [data]
        for item in items:
            fragments.append({k: v for k, v in item.items() if k != "schema_version"})
    return fragments


def ablation_to_csv(rows: list[dict]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    stats = [f"{m}_{s}" for m in METRIC_FIELDS for s in ("mean", "median")]
    writer.writerow(["axis", "value", "n_seeds", "n_failed", "failed_seeds", *stats])
    for row in rows:
        failed_seeds = " ".join(str(f["seed"]) for f in row["failures"])
        writer.writerow([
            row["axis"],
            json.dumps(row["value"]),
            row["n_seeds"],
            row["n_failed"],
            failed_seeds,
            *(_cell(row["metrics"][m][s]) for m in METRIC_FIELDS for s in ("mean", "median")),
        ])
    return out.getvalue()


def write_ablation_table(rows: list[dict], out_dir: str | Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "ablation.json"
    csv_path = out_dir / "ablation.csv"
    document = {"schema_version": SCHEMA_VERSION, "ap_interpolation": AP_INTERPOLATION, "rows": rows}
    json_path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    csv_path.write_text(ablation_to_csv(rows), encoding="utf-8")
    logger.info("wrote ablation table %s (%d rows)", csv_path, len(rows))
    return json_path, csv_path
