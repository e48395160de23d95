"""
Semilab - Run Reproduction Module

Replays a stored run directory from its config.json under two thread counts
and checks that every output file is byte-identical to the stored one.

Key Features:
- Replays through the same CLI dispatch used by run.py
- Compares manifest digests file by file (wall time excluded)
- Non-zero exit status when any digest differs

Usage:
    python reproduce.py runs/cellcycle --threads 1 8
"""

import argparse
import sys
import tempfile
from pathlib import Path
from typing import Dict, List

from src.semilab.cli import dispatch
from src.semilab.emit import CONFIG_FILE, MANIFEST_FILE, load_manifest


def digests(run_dir: Path) -> Dict[str, str]:
    """Map of output path to sha256 from a run directory's manifest."""
    manifest = load_manifest(run_dir / MANIFEST_FILE)
    return {entry.path: entry.sha256 for entry in manifest.files}


def replay(run_dir: Path, threads: int, out_dir: Path) -> Dict[str, str]:
    """
    Re-execute the run stored in run_dir with a given thread count.

    Args:
        run_dir: Directory holding config.json
        threads: Worker count for the replay
        out_dir: Where the replay writes its outputs

    Returns:
        Output digests of the replay
    """
    code = dispatch(["--config", str(run_dir / CONFIG_FILE), "--threads", str(threads), "--out", str(out_dir)])
    if code != 0:
        raise SystemExit(code)
    return digests(out_dir)


def compare(reference: Dict[str, str], other: Dict[str, str]) -> List[str]:
    paths = sorted(set(reference) | set(other))
    return [path for path in paths if reference.get(path) != other.get(path)]


def main():
    parser = argparse.ArgumentParser(description="Replay a semilab run and compare output digests.")
    parser.add_argument("run_dir", type=Path)
    parser.add_argument("--threads", type=int, nargs="+", default=[1, 8])
    args = parser.parse_args()

    reference = digests(args.run_dir)
    failed = False
    with tempfile.TemporaryDirectory() as tmp:
        for threads in args.threads:
            mismatched = compare(reference, replay(args.run_dir, threads, Path(tmp) / f"threads-{threads}"))
            if mismatched:
                failed = True
                print(f"threads={threads}: {len(mismatched)} file(s) differ: {', '.join(mismatched)}")
            else:
                print(f"threads={threads}: all {len(reference)} outputs identical")
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
