"""Safe-driving-distance metrics and the episode metrics log.

The log is append-only JSON lines, one record per episode, replayable to
identical summaries.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..simworld.world import DT

BASELINES = (50.0, 100.0, 150.0, 200.0)


class MetricsError(Exception):
    pass


def episode_distance(speeds, dt: float = DT) -> float:
    """Driven distance as the discrete integral of speed."""
    return float(np.sum(np.asarray(speeds, dtype=np.float64) * dt))


def compute_asd_msd(speed_sequences, dt: float = DT):
    """(ASD, MSD, per-episode distances) over M episodes of speed samples."""
    if len(speed_sequences) == 0:
        raise MetricsError("need at least one episode")
    dists = [episode_distance(s, dt) for s in speed_sequences]
    return float(np.mean(dists)), float(np.max(dists)), dists


def rolling_mean(values, window: int) -> np.ndarray:
    """Trailing mean over up-to-`window` most recent entries."""
    if window < 1:
        raise MetricsError("window must be >= 1")
    values = np.asarray(values, dtype=np.float64)
    out = np.empty(len(values))
    for i in range(len(values)):
        out[i] = values[max(0, i - window + 1):i + 1].mean()
    return out


def episodes_to_baseline(distances, baseline: float, window: int):
    """1-based episode count at which the rolling ASD first reaches the
    baseline, or None if it never does."""
    rolled = rolling_mean(distances, window)
    hits = np.nonzero(rolled >= baseline)[0]
    return int(hits[0]) + 1 if hits.size else None


def append_log_record(path, record: dict) -> None:
    with open(path, "a") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_log(path) -> list[dict]:
    records = []
    for i, line in enumerate(Path(path).read_text().splitlines()):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise MetricsError(f"malformed log line {i + 1}: {exc}") from exc
    for i, rec in enumerate(records):
        if rec.get("episode") != i + 1:
            raise MetricsError(f"log episode index gap at record {i + 1}")
    return records


def summarize_log(records: list[dict], window: int) -> dict:
    """Replayable summary: rolling ASD series and baseline crossings."""
    distances = [r["distance"] for r in records]
    rolled = rolling_mean(distances, window) if distances else np.array([])
    return {
        "episodes": len(records),
        "rolling_asd": rolled.tolist(),
        "baselines": {str(int(b)): episodes_to_baseline(distances, b, window)
                      for b in BASELINES} if distances else {},
    }
