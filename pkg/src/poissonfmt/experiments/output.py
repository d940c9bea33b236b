"""Report serialization: RFC-4180 CSV rows and a sorted-key JSON summary."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from ..sampling import write_samples_csv
from .runners import RUNNERS, Report
from .schema import ExperimentSpec, load_spec


def _plain(x):
    """JSON-safe plain Python values; non-finite floats become strings."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True, separators=(",", ":"))
    return "" if v is None else str(v)


def write_report(spec: ExperimentSpec, report: Report, out_dir: str | Path) -> dict[str, Path]:
    """Write ``<name>.csv``, ``<name>.json`` and any sample CSVs; return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [_plain(r) for r in report.rows]
    columns = ["spec_digest"]
    for r in rows:
        columns.extend(k for k in r if k not in columns)
    paths = {}
    csv_path = out / f"{spec.name}.csv"
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([spec.digest if c == "spec_digest" else _cell(r.get(c)) for c in columns])
    paths["csv"] = csv_path
    for key, (matrix, kernels, seed) in sorted(report.samples.items()):
        paths[f"samples_{key}"] = write_samples_csv(out / f"{spec.name}.samples_{key}.csv", matrix, kernels, seed)
    summary = {
        "kind": spec.kind,
        "name": spec.name,
        "spec": spec.to_json(),
        "spec_digest": spec.digest,
        "verdict": report.verdict,
        "n_rows": len(rows),
        "failed_rows": sum(1 for r in rows if not r.get("verdict", True)),
        "checks": _plain(report.checks),
        "rows": rows,
        "files": sorted(p.name for p in paths.values()),
    }
    json_path = out / f"{spec.name}.json"
    json_path.write_text(json.dumps(summary, sort_keys=True, indent=2, allow_nan=False) + "\n")
    paths["json"] = json_path
    return paths


def run_experiment(config, out_dir: str | Path | None = None, threads: int = 1,
                   seed: int | None = None) -> tuple[ExperimentSpec, Report, dict[str, Path]]:
    """Validate ``config``, run it and (when ``out_dir`` is given) write the outputs."""
    spec = config if isinstance(config, ExperimentSpec) else load_spec(config, seed=seed)
    report = RUNNERS[spec.kind](spec, max(1, int(threads)))
    paths = write_report(spec, report, out_dir) if out_dir is not None else {}
    return spec, report, paths


def load_summary(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
