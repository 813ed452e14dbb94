"""Artifact files: canonical JSON with tool/seed envelopes, commented CSV.

Writers are canonical (sorted keys, fixed float repr), so write -> read ->
write round-trips byte-identically. Loaders accept both enveloped documents
and the bare payloads described by the wire formats (e.g. a plain JSON array
for rosters and portfolios).
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from . import __version__
from .features import ObservationStore
from .opponents import OpponentSpec, roster_from_list, roster_to_list
from .portfolio import PerformanceMatrix, Portfolio
from .problems import BargainingProblem, problem_from_dict, problem_to_dict
from .selector import SelectorModel
from .smbo import RunHistory

ARTIFACT_FORMAT = 1


class ArtifactError(ValueError):
    pass


def canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _envelope(kind: str, seed: int, body: dict) -> dict:
    return {
        "format": ARTIFACT_FORMAT,
        "tool": "negoforge",
        "version": __version__,
        "kind": kind,
        "seed": seed,
        **body,
    }


def write_json_artifact(path: str | Path, kind: str, seed: int, body: dict) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(canonical_json(_envelope(kind, seed, body)), encoding="utf-8")


def read_json_artifact(path: str | Path, kind: str | None = None) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path}: not valid JSON ({exc})") from exc
    if isinstance(data, dict) and kind is not None and "kind" in data and data["kind"] != kind:
        raise ArtifactError(f"{path}: expected a {kind} artifact, found {data['kind']!r}")
    return data


def write_csv_artifact(path: str | Path, header: list[str], rows: list[list], seed: int) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    buffer = io.StringIO()
    buffer.write(f"# negoforge {__version__} seed={seed}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    Path(path).write_text(buffer.getvalue(), encoding="utf-8")


def read_csv_artifact(path: str | Path) -> tuple[list[str], list[list[str]]]:
    lines = [
        line for line in Path(path).read_text(encoding="utf-8").splitlines()
        if line and not line.startswith("#")
    ]
    if not lines:
        raise ArtifactError(f"{path}: empty CSV")
    reader = csv.reader(lines)
    parsed = list(reader)
    return parsed[0], parsed[1:]


# --- typed artifacts ---


def save_problems(path, problems: list[BargainingProblem], seed: int) -> None:
    write_json_artifact(path, "problems", seed, {"problems": [problem_to_dict(p) for p in problems]})


def load_problems(path) -> list[BargainingProblem]:
    data = read_json_artifact(path, "problems")
    raw = data["problems"] if isinstance(data, dict) else data
    return [problem_from_dict(entry) for entry in raw]


def save_roster(path, roster: list[OpponentSpec], seed: int) -> None:
    write_json_artifact(path, "roster", seed, {"roster": roster_to_list(roster)})


def load_roster(path) -> list[OpponentSpec]:
    data = read_json_artifact(path, "roster")
    raw = data["roster"] if isinstance(data, dict) else data
    return roster_from_list(raw)


def save_portfolio(path, portfolio: Portfolio, seed: int) -> None:
    write_json_artifact(path, "portfolio", seed, {"portfolio": portfolio.to_list()})


def load_portfolio(path) -> Portfolio:
    data = read_json_artifact(path, "portfolio")
    raw = data["portfolio"] if isinstance(data, dict) else data
    return Portfolio.from_list(raw)


def save_selector(path, model: SelectorModel, seed: int) -> None:
    write_json_artifact(path, "selector", seed, {"selector": model.to_dict()})


def load_selector(path) -> SelectorModel:
    data = read_json_artifact(path, "selector")
    raw = data["selector"] if isinstance(data, dict) else data
    return SelectorModel.from_dict(raw)


def save_features(path, setting_features: dict, store: ObservationStore, seed: int) -> None:
    body = {
        "setting_features": {
            setting_id: [float(v) for v in vector]
            for setting_id, vector in sorted(setting_features.items())
        },
        "observations": store.to_dict(),
    }
    write_json_artifact(path, "features", seed, body)


def load_features(path) -> tuple[dict, ObservationStore]:
    data = read_json_artifact(path, "features")
    vectors = {
        setting_id: np.asarray(values, dtype=float)
        for setting_id, values in data["setting_features"].items()
    }
    return vectors, ObservationStore.from_dict(data.get("observations", {}))


def save_history(path, history: RunHistory) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(history.to_jsonl(), encoding="utf-8")


def load_history(path) -> RunHistory:
    return RunHistory.from_jsonl(Path(path).read_text(encoding="utf-8"))


MATRIX_HEADER = ["theta_id", "setting_id", "mean_r", "n_runs"]


def save_matrix(path, matrix: PerformanceMatrix, seed: int) -> None:
    write_csv_artifact(path, MATRIX_HEADER, matrix.to_rows(), seed)


def load_matrix(path) -> PerformanceMatrix:
    header, rows = read_csv_artifact(path)
    if header != MATRIX_HEADER:
        raise ArtifactError(f"{path}: bad matrix header {header}")
    parsed = []
    for line_no, row in enumerate(rows, start=2):
        if len(row) != 4:
            raise ArtifactError(f"{path}: row {line_no} has {len(row)} fields, expected 4")
        try:
            parsed.append([row[0], row[1], float(row[2]), int(row[3])])
        except ValueError as exc:
            raise ArtifactError(f"{path}: row {line_no}: {exc}") from exc
    return PerformanceMatrix.from_rows(parsed)
