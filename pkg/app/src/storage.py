"""
File-backed storage of run artifacts.

A run directory holds:

    report.json     RunReport
    schedule.csv    t,dc,gateway,load_mw
    duals.csv       t,kappa_carbon_0..N-1,kappa_water_0..N-1 (header only without duals)
    manifest.json   RunManifest
"""
import logging
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.src.errors import TraceFormatError
from app.src.schemas import RunManifest, RunReport

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

REPORT_FILE = "report.json"
SCHEDULE_FILE = "schedule.csv"
DUALS_FILE = "duals.csv"
MANIFEST_FILE = "manifest.json"


class RunStore:
    """Reads and writes the artifacts of one run directory."""

    def __init__(self, directory: PathLike):
        """
        Initialize the store.

        Args:
            directory: Run directory; created on first write
        """
        self.directory = Path(directory)

    def _path(self, name: str) -> Path:
        return self.directory / name

    def _write_text(self, name: str, text: str) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self._path(name)
        path.write_text(text, encoding="utf-8")
        return path

    def _write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self._path(name)
        frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
        return path

    # ========== WRITERS ==========

    def write_report(self, report: RunReport) -> Path:
        return self._write_text(REPORT_FILE, report.model_dump_json(indent=2) + "\n")

    def write_manifest(self, manifest: RunManifest) -> Path:
        return self._write_text(MANIFEST_FILE, manifest.model_dump_json(indent=2) + "\n")

    def write_schedule(self, schedule) -> Path:
        """Write every routing entry in long format."""
        x = np.stack([d.x for d in schedule.decisions])
        t, dc, gateway = np.meshgrid(np.arange(x.shape[0]), np.arange(x.shape[1]), np.arange(x.shape[2]),
                                     indexing="ij")
        frame = pd.DataFrame({
            "t": t.ravel(),
            "dc": dc.ravel(),
            "gateway": gateway.ravel(),
            "load_mw": x.ravel(),
        })
        return self._write_frame(SCHEDULE_FILE, frame)

    def write_duals(self, schedule, n_datacenters: int) -> Path:
        """Write the multiplier trajectory, one row per slot boundary."""
        columns = ([f"kappa_carbon_{i}" for i in range(n_datacenters)]
                   + [f"kappa_water_{i}" for i in range(n_datacenters)])
        duals = schedule.dual_trajectory
        frame = pd.DataFrame(duals.reshape(-1, 2 * n_datacenters), columns=columns)
        frame.insert(0, "t", np.arange(len(frame)))
        return self._write_frame(DUALS_FILE, frame)

    def save_run(self, schedule, report: RunReport, manifest: RunManifest) -> Path:
        """
        Write all artifacts of a run.

        Returns:
            The run directory
        """
        n = report.n_datacenters
        self.write_report(report)
        self.write_schedule(schedule)
        self.write_duals(schedule, n)
        self.write_manifest(manifest)
        logger.info(f"Stored {report.algorithm} run ({report.n_slots} slots) in {self.directory}")
        return self.directory

    # ========== READERS ==========

    def _read_text(self, name: str) -> str:
        path = self._path(name)
        if not path.is_file():
            raise TraceFormatError(name, None, f"missing file in {self.directory}")
        return path.read_text(encoding="utf-8")

    def read_report(self) -> RunReport:
        try:
            return RunReport.model_validate_json(self._read_text(REPORT_FILE))
        except ValidationError as exc:
            raise TraceFormatError(REPORT_FILE, None, str(exc)) from exc

    def read_manifest(self) -> RunManifest:
        try:
            return RunManifest.model_validate_json(self._read_text(MANIFEST_FILE))
        except ValidationError as exc:
            raise TraceFormatError(MANIFEST_FILE, None, str(exc)) from exc

    def read_duals(self) -> np.ndarray:
        """
        Multiplier trajectory as stored.

        Returns:
            (T+1) x 2N array; empty when the run tracked no multipliers
        """
        path = self._path(DUALS_FILE)
        if not path.is_file():
            raise TraceFormatError(DUALS_FILE, None, f"missing file in {self.directory}")
        frame = pd.read_csv(path, float_precision="round_trip", encoding="utf-8")
        values = frame.drop(columns=["t"], errors="ignore").apply(pd.to_numeric, errors="coerce")
        bad = values.isna().any(axis=1) | (values < 0).any(axis=1)
        if bad.any():
            raise TraceFormatError(DUALS_FILE, int(np.flatnonzero(bad.to_numpy())[0]) + 2,
                                   "multipliers must be nonnegative numbers")
        return values.to_numpy(dtype=float)

    def read_schedule(self) -> pd.DataFrame:
        path = self._path(SCHEDULE_FILE)
        if not path.is_file():
            raise TraceFormatError(SCHEDULE_FILE, None, f"missing file in {self.directory}")
        return pd.read_csv(path, float_precision="round_trip", encoding="utf-8")


def write_comparison(directory: PathLike, frame: pd.DataFrame, table: str,
                     reports: Dict[str, RunReport]) -> List[Path]:
    """Write comparison.csv, comparison.txt and one report per algorithm."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = [directory / "comparison.csv", directory / "comparison.txt"]
    frame.to_csv(written[0], encoding="utf-8", lineterminator="\n")
    written[1].write_text(table + "\n", encoding="utf-8")
    for name, report in reports.items():
        written.append(RunStore(directory / name).write_report(report))
    logger.info(f"Wrote comparison of {len(reports)} algorithms to {directory}")
    return written


def write_sweep(directory: PathLike, frame: pd.DataFrame, name: str = "sweep.csv") -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / name
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    logger.info(f"Wrote {len(frame)} sweep rows to {path}")
    return path
