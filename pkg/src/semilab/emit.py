"""
Semilab - Output Emission Module

Writes the results of a CLI run: CSV for array data, JSON for reports, the
resolved config and finally the manifest with content digests.

Key Features:
- RunOutputs collector for densities, profiles, tables and reports
- Deterministic bytes: sorted JSON keys, %.17g floats, newline-terminated rows
- Retried writes (tenacity) and an atomic manifest rename
- Optional plotting script referencing the emitted CSV files
"""

import hashlib
import json
import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel

from ._default import ARTIFACT_VERSION
from .density import GridDensity, ProductDensity
from .outputs import ManifestEntry, RunConfig, RunManifest, _plain
from .utils import retry_io

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
MANIFEST_FILE = "manifest.json"


def _finite(value: Any) -> Any:
    """Non-finite floats become None (JSON null)."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, list):
        return [_finite(v) for v in value]
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    return value


def canonical_json(value: Any) -> str:
    return json.dumps(_finite(_plain(value)), sort_keys=True, indent=2, allow_nan=False) + "\n"


def config_hash(config: RunConfig) -> str:
    """sha256 of the config without the fields that must not change outputs."""
    body = config.model_dump(exclude={"threads", "out"})
    return hashlib.sha256(canonical_json(body).encode("utf-8")).hexdigest()


class RunOutputs:
    """Named results of one command, in insertion order."""

    def __init__(self):
        self.stdout: Dict[str, Any] = {}
        self.reports: Dict[str, Dict[str, Any]] = {}
        self.frames: Dict[str, pd.DataFrame] = {}

    def add_report(self, name: str, report: Any) -> None:
        if isinstance(report, BaseModel) and hasattr(report, "report"):
            report = report.report()
        self.reports[name] = _plain(report)

    def add_frame(self, name: str, frame: pd.DataFrame) -> None:
        self.frames[name] = frame

    def add_density(self, name: str, density: Any) -> None:
        if not isinstance(density, (GridDensity, ProductDensity)):
            raise TypeError(f"not a grid density: {type(density).__name__}")
        self.frames[name] = density.to_frame()

    def add_profile(self, name: str, t: Sequence[float], values: Any, column: str = "value") -> None:
        """Profile table with a t column; several columns when values is a dict."""
        columns = values if isinstance(values, dict) else {column: values}
        frame = pd.DataFrame({"t": np.asarray(t, dtype=float)})
        for key, series in columns.items():
            frame[key] = np.asarray(series)
        self.frames[name] = frame

    def summary(self) -> Dict[str, Any]:
        return self.stdout or {name: report for name, report in self.reports.items()}


@retry_io()
def _write_bytes(path: Path, data: bytes) -> None:
    with open(path, "wb") as handle:
        handle.write(data)


@retry_io()
def _make_dir(path: Path) -> None:
    path.mkdir(parents=True, exist_ok=True)


@retry_io()
def _publish(target: Path, temp: Path) -> None:
    os.replace(temp, target)


def _frame_bytes(frame: pd.DataFrame, fmt: str) -> bytes:
    if fmt == "json":
        records = frame.to_dict(orient="list")
        return canonical_json(records).encode("utf-8")
    return frame.to_csv(index=False, float_format="%.17g", lineterminator="\n").encode("utf-8")


def _entry(path: Path, root: Path, data: bytes) -> ManifestEntry:
    return ManifestEntry(path=str(path.relative_to(root)), sha256=hashlib.sha256(data).hexdigest(), bytes=len(data))


def write_run(
        outputs: RunOutputs,
        config: RunConfig,
        out_dir: Path,
        wall_time: float,
        plot_script: bool = False,
) -> RunManifest:
    """
    Write every output, the resolved config and, last, the manifest.

    Raises:
        OutputError: a write failed after retries
    """
    _make_dir(out_dir)
    entries: List[ManifestEntry] = []
    suffix = "json" if config.format == "json" else "csv"
    for name, frame in outputs.frames.items():
        data = _frame_bytes(frame, config.format)
        path = out_dir / f"{name}.{suffix}"
        _write_bytes(path, data)
        entries.append(_entry(path, out_dir, data))
    for name, report in outputs.reports.items():
        data = canonical_json(report).encode("utf-8")
        path = out_dir / f"{name}.json"
        _write_bytes(path, data)
        entries.append(_entry(path, out_dir, data))
    data = canonical_json(config.model_dump()).encode("utf-8")
    _write_bytes(out_dir / CONFIG_FILE, data)
    if plot_script and outputs.frames:
        script = emit_plot_script(out_dir, outputs)
        entries.append(_entry(script, out_dir, script.read_bytes()))

    manifest = RunManifest(
        config_hash=config_hash(config),
        version=ARTIFACT_VERSION,
        wall_time=wall_time,
        files=sorted(entries, key=lambda e: e.path),
    )
    temp = out_dir / (MANIFEST_FILE + ".tmp")
    _write_bytes(temp, canonical_json(manifest.model_dump()).encode("utf-8"))
    _publish(out_dir / MANIFEST_FILE, temp)
    logger.info(f"wrote {len(entries)} outputs to {out_dir}")
    return manifest


def load_config(path: Path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as handle:
        return RunConfig.model_validate(json.load(handle))


def load_manifest(path: Path) -> RunManifest:
    with open(path, "r", encoding="utf-8") as handle:
        return RunManifest.model_validate(json.load(handle))


def verify_manifest(out_dir: Path, manifest: Optional[RunManifest] = None) -> List[str]:
    """Paths whose digest on disk differs from the manifest."""
    manifest = manifest or load_manifest(out_dir / MANIFEST_FILE)
    stale = []
    for entry in manifest.files:
        data = (out_dir / entry.path).read_bytes()
        if hashlib.sha256(data).hexdigest() != entry.sha256:
            stale.append(entry.path)
    return stale


PLOT_TEMPLATE = '''"""Plot the CSV outputs of a semilab run."""

import matplotlib.pyplot as plt
import pandas as pd
import seaborn as sns

FILES = {files}

sns.set_theme(style="whitegrid")
for name in FILES:
    frame = pd.read_csv(name)
    fig, ax = plt.subplots(figsize=(8, 4))
    if {{"cell_lo", "cell_hi", "mass"}} <= set(frame.columns):
        x = 0.5 * (frame["cell_lo"] + frame["cell_hi"])
        width = frame["cell_hi"] - frame["cell_lo"]
        hue = frame["state"] if "state" in frame.columns else None
        sns.lineplot(x=x, y=frame["mass"] / width, hue=hue, ax=ax)
        ax.set_ylabel("density")
    elif "t" in frame.columns:
        for column in frame.columns.drop("t"):
            ax.plot(frame["t"], frame[column], label=column)
        ax.legend()
    ax.set_title(name)
    fig.tight_layout()
    fig.savefig(name.replace(".csv", ".png"), dpi=150)
    plt.close(fig)
'''


def emit_plot_script(out_dir: Path, outputs: RunOutputs) -> Path:
    """Write plot.py next to the CSV outputs."""
    files = sorted(f"{name}.csv" for name in outputs.frames)
    path = out_dir / "plot.py"
    _write_bytes(path, PLOT_TEMPLATE.format(files=repr(files)).encode("utf-8"))
    return path
