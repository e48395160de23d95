"""
Semilab - Profile Plotting Module

Plots the CSV outputs of one or more run directories: grid densities as
step curves, per-state densities with a hue per state and time profiles
(columns over t) on a log scale when every value is positive.

Key Features:
- Recognizes density tables (cell_lo, cell_hi, mass) and time tables (t, ...)
- Seaborn styling with one PNG per CSV
- Optional overlay of the same table from several runs
"""

import argparse
import os
from pathlib import Path
from typing import Dict, List

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns


def load_tables(run_dir: Path) -> Dict[str, pd.DataFrame]:
    """Read every CSV output of a run directory, keyed by file stem."""
    return {path.stem: pd.read_csv(path) for path in sorted(run_dir.glob("*.csv"))}


def is_density(frame: pd.DataFrame) -> bool:
    return {"cell_lo", "cell_hi", "mass"} <= set(frame.columns)


def plot_density(ax, frame: pd.DataFrame, label: str):
    centers = 0.5 * (frame["cell_lo"] + frame["cell_hi"])
    values = frame["mass"] / (frame["cell_hi"] - frame["cell_lo"])
    if "state" in frame.columns:
        sns.lineplot(x=centers, y=values, hue=frame["state"].astype(str), ax=ax, drawstyle="steps-mid")
    else:
        ax.step(centers, values, where="mid", label=label)
    ax.set_xlabel("x")
    ax.set_ylabel("density")


def plot_profile(ax, frame: pd.DataFrame, label: str):
    columns = [c for c in frame.columns if c != "t" and np.issubdtype(frame[c].dtype, np.number)]
    for column in columns:
        ax.plot(frame["t"], frame[column], label=f"{label}:{column}" if label else column)
    if columns and (frame[columns] > 0).all().all():
        ax.set_yscale("log")
    ax.set_xlabel("t")


def plot_runs(run_dirs: List[Path], output_dir: Path):
    """
    Write one PNG per table name found in any of the run directories.

    Args:
        run_dirs: Run directories produced with --out
        output_dir: Destination of the PNG files
    """
    os.makedirs(output_dir, exist_ok=True)
    tables: Dict[str, Dict[str, pd.DataFrame]] = {}
    for run_dir in run_dirs:
        for name, frame in load_tables(run_dir).items():
            tables.setdefault(name, {})[run_dir.name] = frame

    sns.set_theme(style="whitegrid")
    for name, frames in tables.items():
        fig, ax = plt.subplots(figsize=(10, 6))
        for label, frame in frames.items():
            label = label if len(frames) > 1 else ""
            if is_density(frame):
                plot_density(ax, frame, label)
            elif "t" in frame.columns:
                plot_profile(ax, frame, label)
        if ax.get_legend_handles_labels()[0]:
            ax.legend()
        ax.set_title(name)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        output_path = output_dir / f"{name}.png"
        fig.savefig(output_path, dpi=150)
        plt.close(fig)
        print(f"Saved {output_path}")


def main():
    parser = argparse.ArgumentParser(description="Plot CSV outputs of semilab runs.")
    parser.add_argument("run_dirs", type=Path, nargs="+")
    parser.add_argument("--output-dir", type=Path, default=Path("plots"))
    args = parser.parse_args()
    plot_runs(args.run_dirs, args.output_dir)


if __name__ == "__main__":
    main()
