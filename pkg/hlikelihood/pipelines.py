"""
Output pipeline for command results

Each result item is written as JSON (sorted keys, two-space indent) or, when
the output path ends in .csv and the item has a tabular form, as CSV through
pandas. Every output X gets a sibling X.manifest.json describing the run.
"""

import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel

from hlikelihood import __version__, settings
from hlikelihood.exceptions import ConfigError
from hlikelihood.items import (
    BartlettReport,
    CoverageResult,
    Prediction,
    RTermStudy,
    RunManifest,
)

CSV_FLOAT_FORMAT = "%.12g"


def dump_json(item) -> str:
    if isinstance(item, BaseModel):
        data = item.model_dump(mode="json")
    elif isinstance(item, list):
        data = [x.model_dump(mode="json") if isinstance(x, BaseModel) else x for x in item]
    else:
        data = item
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def audit_rows(report: BartlettReport) -> list[dict]:
    rows = []
    for point in report.points:
        rows.append({
            "model": report.model,
            "theta": point.theta[0] if len(point.theta) == 1 else ";".join(map(str, point.theta)),
            "verdict": point.verdict,
            "cond1_max_abs": float(np.max(np.abs(point.cond1))) if point.cond1 else None,
            "cond2_max_abs": float(np.max(np.abs(point.cond2))) if point.cond2 else None,
            "tolerance": point.tolerance,
            "boundary_difference": point.boundary_difference[0] if point.boundary_difference else None,
        })
    return rows


def prediction_rows(prediction: Prediction) -> list[dict]:
    """Plottable grid: v, r and the three densities on the pivot scale."""
    triple = prediction.triple
    inverse_jac = np.exp(-np.asarray(triple.pivot_log_jacobian))
    frame = pd.DataFrame({
        "v": triple.h_dist.x,
        triple.pivot_label: triple.pivot_nodes,
        "h_dist": triple.h_dist.density() * inverse_jac,
        "pivotal": triple.pivotal.density() * inverse_jac,
        "posterior": triple.posterior.density() * inverse_jac,
    })
    return frame.to_dict("records")


def _rows(item) -> Optional[list[dict]]:
    if isinstance(item, BartlettReport):
        return audit_rows(item)
    if isinstance(item, CoverageResult):
        return [{"model": item.model, "seed": item.seed, **row.model_dump()} for row in item.rows]
    if isinstance(item, RTermStudy):
        extra = {"euler_gamma": item.euler_gamma, "var_log_y_limit": item.var_log_y_limit}
        return [{**row.model_dump(), **extra} for row in item.rows]
    if isinstance(item, Prediction):
        return prediction_rows(item)
    if isinstance(item, list) and item and all(isinstance(x, BaseModel) for x in item):
        return [x.model_dump(mode="json") for x in item]
    return None


class OutputPipeline:
    """Writes result items and their run manifests."""

    def __init__(self, subcommand: str, config: dict, seed: Optional[int] = None, jobs: int = 1,
                 input_digests: Optional[dict] = None):
        self.manifest = RunManifest(
            subcommand=subcommand,
            config=config,
            seed=seed,
            tool_version=__version__,
            input_digests=input_digests or {},
            timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            jobs=jobs,
        )
        self.logger = logging.getLogger(__name__)

    def process_item(self, item, out) -> Path:
        out = Path(out)
        if not out.is_absolute():
            out = settings.OUTPUT_DIR / out
        out.parent.mkdir(parents=True, exist_ok=True)
        if out.suffix == ".csv":
            self.write_csv(item, out)
        else:
            self.write_json(item, out)
        self.write_manifest(out)
        return out

    def write_json(self, item, out: Path):
        out.write_text(dump_json(item), encoding="utf-8")
        self.logger.info(f"wrote {out}")

    def write_csv(self, item, out: Path):
        rows = _rows(item)
        if rows is None:
            raise ConfigError(f"{type(item).__name__} has no tabular form; write it as JSON instead of {out}")
        pd.DataFrame(rows).to_csv(out, index=False, float_format=CSV_FLOAT_FORMAT)
        self.logger.info(f"wrote {len(rows)} rows to {out}")

    def write_manifest(self, out: Path):
        path = out.with_name(out.name + ".manifest.json")
        path.write_text(dump_json(self.manifest), encoding="utf-8")
