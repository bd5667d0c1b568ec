"""Run several experiments as independent worker processes and merge their verdicts."""

from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from gzk.core.exceptions import GZKError
from gzk.core.log import get_logger
from gzk.lab.registry import ExperimentRegistry
from gzk.models.schemas import ExperimentVerdict, Verdict

logger = get_logger(__name__)

Job = Tuple[str, Dict[str, Any]]


def _run_job(job: Job) -> str:
    # Runs in a fresh worker process; verdicts travel back as JSON.
    name, overrides = job
    try:
        verdict = ExperimentRegistry.get(name).execute(overrides)
    except GZKError as e:
        verdict = ExperimentVerdict(
            experiment=name,
            verdict=Verdict.FAIL,
            notes=[f"{type(e).__name__}: {e.message}"],
            measured={"error": e.describe()}
        )
    return verdict.model_dump_json()


def run_sweep(jobs: Sequence[Job], max_workers: Optional[int] = None) -> List[ExperimentVerdict]:
    """Verdicts in job order. A job raising GZKError becomes a FAIL verdict."""
    for name, _ in jobs:
        ExperimentRegistry.get(name)
    results: Dict[int, ExperimentVerdict] = {}
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        futures = {pool.submit(_run_job, job): i for i, job in enumerate(jobs)}
        for future in as_completed(futures):
            i = futures[future]
            results[i] = ExperimentVerdict.model_validate_json(future.result())
            logger.info(f"sweep job {i} ({jobs[i][0]}) finished: {results[i].verdict.value}")
    return [results[i] for i in range(len(jobs))]


def merge_verdicts(verdicts: Sequence[ExperimentVerdict]) -> pd.DataFrame:
    """One row per job: experiment, verdict and every check."""
    records = []
    for i, v in enumerate(verdicts):
        row: Dict[str, Any] = {"job": i, "experiment": v.experiment, "verdict": v.verdict.value}
        row.update({f"check:{name}": ok for name, ok in v.checks.items()})
        records.append(row)
    return pd.DataFrame.from_records(records)


def write_sweep_summary(path: Path, verdicts: Sequence[ExperimentVerdict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    merge_verdicts(verdicts).to_csv(path, index=False)
    return path
