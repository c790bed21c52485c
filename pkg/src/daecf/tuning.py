"""Grid search for baseline filter parameters."""

from __future__ import annotations

from dataclasses import dataclass

from .baselines import DEFAULT_GRIDS, run_filter
from .metrics import gravity_rms_loss

__all__ = ["TuneResult", "tune_baseline"]


@dataclass(frozen=True)
class TuneResult:
    """Winning grid point and the full search table."""

    algorithm: str
    best: object
    best_loss: float
    table: tuple  # ((candidate, mean loss), ...) in grid order


def _scalar_key(candidate):
    """Sort key for tie breaking: prefer the less aggressive update."""
    if isinstance(candidate, (tuple, list)):
        return tuple(float(c) for c in candidate)
    return (float(candidate),)


def tune_baseline(algorithm: str, grid, recordings) -> TuneResult:
    """Exhaustive search minimizing the mean gravity RMS loss.

    Ties are broken toward the smaller parameter value.  ``grid`` may
    be None to use the default grid for the algorithm.
    """
    if grid is None:
        grid = DEFAULT_GRIDS[algorithm]
    grid = list(grid)
    if not grid:
        raise ValueError("empty parameter grid")
    recordings = list(recordings)
    if not recordings:
        raise ValueError("no recordings to tune on")
    table = []
    for candidate in grid:
        losses = [
            gravity_rms_loss(run_filter(algorithm, candidate, rec), rec.gt)
            for rec in recordings
        ]
        table.append((candidate, sum(losses) / len(losses)))
    best, best_loss = min(
        table, key=lambda it: (it[1], _scalar_key(it[0]))
    )
    return TuneResult(algorithm, best, float(best_loss), tuple(table))
