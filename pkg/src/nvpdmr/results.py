"""Result tables and their JSON sidecars.

``write_results(result, "scan.csv", manifest)`` writes

* ``scan.csv``: ``sweep_value,mean_diff_current_A,std_A,n_cycles``, 17 significant digits;
* ``scan.json``: fits, extra series, and the manifest without timestamps;
* ``scan.run.json``: the timestamps.

The first two depend only on the configuration and seed, so repeated runs
produce identical bytes.
"""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .experiments import ExperimentResult

HEADER = ("sweep_value", "mean_diff_current_A", "std_A", "n_cycles")


@dataclass
class RunManifest:
    config_digest: str
    seed: int
    version: str = __version__
    started: str = ""
    finished: str = ""
    outputs: list = field(default_factory=list)

    def start(self):
        self.started = _now()
        return self

    def finish(self):
        self.finished = _now()
        return self

    def stable_dict(self):
        return {"config_digest": self.config_digest, "seed": self.seed,
                "version": self.version, "outputs": list(self.outputs)}


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _g17(x) -> str:
    return "%.17g" % x


def _jsonable(obj):
    """NaN/inf become null so the sidecar stays strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item"):  # numpy scalar
        return _jsonable(obj.item())
    return obj


def sidecar_paths(path):
    path = Path(path)
    stem = path.with_suffix("") if path.suffix else path
    return stem.with_name(stem.name + ".json"), stem.with_name(stem.name + ".run.json")


def result_dict(result: ExperimentResult, manifest: RunManifest | None = None) -> dict:
    out = {
        "kind": result.kind,
        "fit": result.fit.to_dict(),
        "extra_fits": {k: v.to_dict() for k, v in sorted(result.extra_fits.items())},
        "extra": result.extra,
    }
    if manifest is not None:
        out["manifest"] = manifest.stable_dict()
    return _jsonable(out)


def write_results(result: ExperimentResult, path, manifest: RunManifest | None = None):
    """Write the table, its sidecar, and (with a manifest) the run-times file.

    Returns the list of paths written.
    """
    path = Path(path)
    side, run = sidecar_paths(path)
    if manifest is not None:
        manifest.outputs = [path.name, side.name]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for x, m, s, n in zip(result.sweep_values, result.mean_differential, result.std, result.n_cycles):
            w.writerow((_g17(x), _g17(m), _g17(s), int(n)))
    side.write_text(json.dumps(result_dict(result, manifest), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    written = [path, side]
    if manifest is not None:
        run.write_text(json.dumps({"started": manifest.started, "finished": manifest.finished,
                                   "config_digest": manifest.config_digest}, indent=2) + "\n",
                       encoding="utf-8")
        written.append(run)
    return written


def read_table(path):
    """Rows of a result table as ``(sweep_value, mean, std, n)`` tuples."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != HEADER:
        raise ValueError(f"unexpected header {rows[0]!r}")
    return [(float(a), float(b), float(c), int(d)) for a, b, c, d in rows[1:]]
