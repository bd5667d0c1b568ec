"""
On-disk formats.

Field snapshot (little-endian, no padding):
    magic           4 bytes   b"GZK1"
    nx, ny          int64 x 2
    Lx, Ly, time    float64 x 3
    representation  int64     0 = physical, 1 = spectral
    payload         nx * ny pairs (re, im) of float64, row-major over [x, y]

Run configuration: one `key = value` per line, `#` starts a comment, keys are
the SimulationConfig field names. Tables are CSV written through pandas.
"""

import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from gzk.core.config import settings
from gzk.core.exceptions import ConfigError, SnapshotError
from gzk.core.log import get_logger
from gzk.models.schemas import (
    ExperimentVerdict, GroundStateMetadata, ProbeSummary, RunManifest, SimulationConfig,
)
from gzk.services.spectral_core import Field, GridSpec, Representation

logger = get_logger(__name__)

PathLike = Union[str, Path]

MAGIC = b"GZK1"
HEADER = np.dtype([
    ("magic", "S4"),
    ("nx", "<i8"),
    ("ny", "<i8"),
    ("Lx", "<f8"),
    ("Ly", "<f8"),
    ("time", "<f8"),
    ("representation", "<i8"),
])
_REP_CODES = {Representation.PHYSICAL: 0, Representation.SPECTRAL: 1}


# --- Field snapshots ---

def write_snapshot(path: PathLike, f: Field) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = np.zeros(1, dtype=HEADER)
    header[0] = (MAGIC, f.grid.nx, f.grid.ny, f.grid.lx, f.grid.ly, f.time, _REP_CODES[f.representation])
    payload = np.ascontiguousarray(f.data, dtype="<c16").view("<f8")
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(payload.tobytes())
    return path


def read_snapshot(path: PathLike) -> Field:
    path = Path(path)
    if not path.is_file():
        raise SnapshotError(f"Snapshot not found: {path}")
    raw = path.read_bytes()
    if len(raw) < HEADER.itemsize:
        raise SnapshotError("Snapshot shorter than its header", {"path": str(path), "bytes": len(raw)})
    header = np.frombuffer(raw[:HEADER.itemsize], dtype=HEADER)[0]
    if header["magic"] != MAGIC:
        raise SnapshotError("Bad snapshot magic", {"path": str(path), "magic": repr(bytes(header["magic"]))})
    nx, ny = int(header["nx"]), int(header["ny"])
    if nx < 8 or ny < 8 or nx % 2 or ny % 2:
        raise SnapshotError("Snapshot header has invalid dimensions", {"nx": nx, "ny": ny})
    if not (header["Lx"] > 0 and header["Ly"] > 0):
        raise SnapshotError("Snapshot header has invalid box", {"Lx": float(header["Lx"]), "Ly": float(header["Ly"])})
    expected = nx * ny * 16
    payload = raw[HEADER.itemsize:]
    if len(payload) != expected:
        raise SnapshotError(
            "Snapshot payload size does not match its header",
            {"expected_bytes": expected, "found_bytes": len(payload)}
        )
    rep_code = int(header["representation"])
    if rep_code not in (0, 1):
        raise SnapshotError("Unknown representation flag", {"flag": rep_code})
    data = np.frombuffer(payload, dtype="<f8").view("<c16").reshape(nx, ny)
    rep = Representation.PHYSICAL if rep_code == 0 else Representation.SPECTRAL
    grid = GridSpec(nx=nx, ny=ny, lx=float(header["Lx"]), ly=float(header["Ly"]))
    return Field(grid=grid, representation=rep, data=data.real if rep_code == 0 else data,
                 time=float(header["time"]))


# --- Key-value text ---

def _format_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "value"):
        return str(v.value)
    return str(v)


def _parse_lines(text: str, source: str) -> Dict[str, str]:
    entries: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'", {"line": line})
        key, value = (part.strip() for part in content.split("=", 1))
        if not key or not value:
            raise ConfigError(f"{source}:{lineno}: empty key or value", {"line": line})
        if key in entries:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}'", {"key": key})
        entries[key] = value
    return entries


def write_sidecar(path: PathLike, meta: GroundStateMetadata) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{k} = {_format_value(v)}" for k, v in meta.model_dump().items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_sidecar(path: PathLike) -> GroundStateMetadata:
    entries = _parse_lines(Path(path).read_text(), str(path))
    try:
        return GroundStateMetadata(**entries)
    except ValidationError as e:
        raise ConfigError(f"Malformed ground-state sidecar {path}", {"errors": e.errors(include_url=False)})


def write_ground_state(directory: PathLike, g, stem: str = "ground_state") -> List[Path]:
    directory = Path(directory)
    return [
        write_snapshot(directory / f"{stem}.gzk", g.profile),
        write_sidecar(directory / f"{stem}.meta", g.metadata()),
    ]


# --- Run configuration ---

_REQUIRED = [name for name, info in SimulationConfig.model_fields.items() if info.is_required()]


def parse_config_text(text: str, source: str = "<config>") -> SimulationConfig:
    entries = _parse_lines(text, source)
    unknown = sorted(set(entries) - set(SimulationConfig.model_fields))
    if unknown:
        raise ConfigError(f"Unknown config key(s): {', '.join(unknown)}", {"unknown": unknown})
    missing = [k for k in _REQUIRED if k not in entries]
    if missing:
        raise ConfigError(f"Missing required config key(s): {', '.join(missing)}", {"missing": missing})
    try:
        return SimulationConfig(**entries)
    except ValidationError as e:
        errors = e.errors(include_url=False)
        fields = ", ".join(str(err["loc"][0]) if err["loc"] else "config" for err in errors)
        raise ConfigError(f"Invalid config value(s): {fields}", {"errors": [
            {"key": err["loc"][0] if err["loc"] else None, "message": err["msg"]} for err in errors
        ]})


def parse_config(path: PathLike) -> SimulationConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    return parse_config_text(path.read_text(), str(path))


def serialize_config(cfg: SimulationConfig) -> str:
    lines = [f"{name} = {_format_value(getattr(cfg, name))}" for name in SimulationConfig.model_fields]
    return "\n".join(lines) + "\n"


def write_config(path: PathLike, cfg: SimulationConfig) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_config(cfg))
    return path


# --- Tables ---

def write_table(path: PathLike, rows: Iterable[Union[BaseModel, Dict[str, Any]]],
                columns: Optional[List[str]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records = [r.model_dump() if isinstance(r, BaseModel) else dict(r) for r in rows]
    pd.DataFrame.from_records(records, columns=columns).to_csv(path, index=False)
    return path


def write_diagnostics(path: PathLike, diagnostics) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    diagnostics.to_frame().to_csv(path, index=False)
    return path


def read_table(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path)


def write_probe(path: PathLike, summary: ProbeSummary) -> Path:
    return write_table(path, summary.samples, columns=["kind", "sample_seed", "ratio", "grid", "T"])


def write_verdict(directory: PathLike, verdict: ExperimentVerdict) -> List[Path]:
    """verdict.json plus one CSV per table."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = directory / "verdict.json"
    out.write_text(verdict.model_dump_json(indent=2))
    paths = [out]
    for name, rows in verdict.tables.items():
        paths.append(write_table(directory / f"{name}.csv", rows))
    return paths


# --- Run manifests ---

class RunRecorder:
    """Collects outputs of one CLI run and writes its manifest.json."""

    def __init__(self, command: str, config: Dict[str, Any], seed: Optional[int] = None,
                 out_dir: Optional[PathLike] = None):
        self.directory = Path(out_dir or Path(settings.OUTPUT_DIR) / command)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(
            command=command,
            config=json.loads(json.dumps(config, default=_format_value)),
            seed=seed,
            version=settings.VERSION,
            started_at=datetime.now()
        )

    def path(self, name: str) -> Path:
        return self.directory / name

    def add(self, *paths: PathLike) -> None:
        for p in paths:
            self.manifest.outputs.append(str(Path(p)))

    def finish(self) -> Path:
        self.manifest.finished_at = datetime.now()
        target = self.directory / "manifest.json"
        target.write_text(self.manifest.model_dump_json(indent=2))
        logger.info(f"run '{self.manifest.command}' recorded in {target}")
        return target


def read_manifest(path: PathLike) -> RunManifest:
    return RunManifest.model_validate_json(Path(path).read_text())
