"""Episode archives: metadata plus four time-indexed matrices.

On disk an episode is a directory::

    metadata.json
    observations.csv      T x M  (state at the end of each step)
    actions.csv           T x S  (setpoints applied during each step)
    reward_info.csv       T x I  (inputs needed to recompute the reward)
    reward_response.csv   T x R  (reward and its components)

Every CSV has a header row ``timestamp,<names...>``; the first column holds
RFC 3339 UTC timestamps at whole seconds. Floats are written with ``repr``
so a save/load round trip is bit-exact. Action and reward rows are keyed by
the start of their step, observation rows by its end.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .building import format_time, parse_time

FORMAT_VERSION = 1
MATRICES = ("observations", "actions", "reward_info", "reward_response")


class EpisodeFormatError(ValueError):
    pass


@dataclass
class Matrix:
    names: list[str]
    timestamps: np.ndarray      # epoch seconds, integral
    values: np.ndarray          # (T, len(names))

    def __post_init__(self):
        self.names = list(self.names)
        self.timestamps = np.asarray(self.timestamps, dtype=float).reshape(-1)
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.timestamps), -1) \
            if len(self.timestamps) else np.zeros((0, len(self.names)))
        if self.values.shape[1] != len(self.names):
            raise EpisodeFormatError(
                f"matrix has {self.values.shape[1]} columns but {len(self.names)} names")
        if len(set(self.names)) != len(self.names):
            raise EpisodeFormatError("duplicate column names")
        if np.any(self.timestamps != np.round(self.timestamps)):
            raise EpisodeFormatError("timestamps must be whole seconds")

    def __len__(self) -> int:
        return len(self.timestamps)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.names.index(name)]
        except ValueError:
            raise EpisodeFormatError(f"no column named {name!r}") from None

    def row(self, t: int) -> dict[str, float]:
        return dict(zip(self.names, self.values[t].tolist()))

    def slice(self, start: int, stop: int) -> "Matrix":
        return Matrix(self.names, self.timestamps[start:stop], self.values[start:stop])

    def equals(self, other: "Matrix") -> bool:
        """Bit-level equality (NaN payloads compare equal to themselves)."""
        return (self.names == other.names
                and self.timestamps.tobytes() == other.timestamps.tobytes()
                and self.values.shape == other.values.shape
                and self.values.tobytes() == other.values.tobytes())


@dataclass
class EpisodeArchive:
    metadata: dict
    observations: Matrix
    actions: Matrix
    reward_info: Matrix
    reward_response: Matrix

    def __post_init__(self):
        self.validate()
        self.metadata = dict(self.metadata)
        for name, m in self.matrices().items():
            self.metadata.setdefault(f"{name}_names", list(m.names))
        self.metadata.setdefault("n_steps", len(self.actions))

    @property
    def n_steps(self) -> int:
        return len(self.actions)

    @property
    def dt(self) -> float:
        return float(self.metadata["timestep"])

    def matrices(self) -> dict[str, Matrix]:
        return {name: getattr(self, name) for name in MATRICES}

    def validate(self) -> None:
        meta = self.metadata
        for key in ("version", "timestep"):
            if key not in meta:
                raise EpisodeFormatError(f"metadata lacks {key!r}")
        if meta["version"] != FORMAT_VERSION:
            raise EpisodeFormatError(f"unsupported episode format version {meta['version']}")
        lengths = {name: len(m) for name, m in self.matrices().items()}
        if len(set(lengths.values())) != 1:
            raise EpisodeFormatError(f"matrices disagree on the number of steps: {lengths}")
        for name, m in self.matrices().items():
            declared = meta.get(f"{name}_names")
            if declared is not None and list(declared) != m.names:
                raise EpisodeFormatError(f"{name} header does not match metadata names")
        if "n_steps" in meta and meta["n_steps"] != len(self.actions):
            raise EpisodeFormatError(
                f"metadata declares {meta['n_steps']} steps, matrices hold {len(self.actions)}")
        dt = float(meta["timestep"])
        if len(self.actions) and np.any(self.observations.timestamps - self.actions.timestamps != dt):
            raise EpisodeFormatError("observation rows must lie one timestep after action rows")
        for name in ("reward_info", "reward_response"):
            if np.any(getattr(self, name).timestamps != self.actions.timestamps):
                raise EpisodeFormatError(f"{name} timestamps differ from action timestamps")

    def slice(self, start: int, stop: int) -> "EpisodeArchive":
        """Sub-episode of steps [start, stop); the initial observation becomes
        the observation preceding ``start``."""
        meta = json.loads(json.dumps(self.metadata))
        meta["n_steps"] = max(min(stop, self.n_steps) - start, 0)
        if start > 0:
            meta["initial_observation"] = {
                "timestamp": format_time(self.observations.timestamps[start - 1]),
                "values": self.observations.values[start - 1].tolist()}
            info = self.reward_info
            temps = [info.values[start - 1, info.names.index(f"{z}/temperature")]
                     for z in meta["zone_ids"]]
            meta["initial_zone_temperatures"] = temps
        return EpisodeArchive(meta, *(m.slice(start, stop) for m in self.matrices().values()))

    def equals(self, other: "EpisodeArchive") -> bool:
        return (json.dumps(self.metadata, sort_keys=True) == json.dumps(other.metadata, sort_keys=True)
                and all(a.equals(b) for a, b in zip(self.matrices().values(),
                                                     other.matrices().values())))


def _write_matrix(m: Matrix, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp"] + m.names)
        for ts, row in zip(m.timestamps, m.values):
            w.writerow([format_time(ts)] + [repr(float(v)) for v in row])


def _read_matrix(path: Path) -> Matrix:
    if not path.is_file():
        raise EpisodeFormatError(f"missing matrix file {path.name}")
    text = path.read_text()
    if text and not text.endswith("\n"):
        raise EpisodeFormatError(f"{path.name}: truncated (last line is incomplete)")
    rows = list(csv.reader(text.splitlines()))
    if not rows or not rows[0] or rows[0][0] != "timestamp":
        raise EpisodeFormatError(f"{path.name}: missing header row")
    names = rows[0][1:]
    times, values = [], []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(names) + 1:
            raise EpisodeFormatError(
                f"{path.name}, line {i}: expected {len(names) + 1} fields, got {len(row)}")
        try:
            times.append(parse_time(row[0]))
            values.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise EpisodeFormatError(f"{path.name}, line {i}: {exc}") from exc
    vals = np.array(values, dtype=float).reshape(len(times), len(names))
    return Matrix(names, np.array(times), vals)


def save_episode(archive: EpisodeArchive, path) -> Path:
    archive.validate()
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for name, m in archive.matrices().items():
        _write_matrix(m, path / f"{name}.csv")
    (path / "metadata.json").write_text(json.dumps(archive.metadata, indent=1))
    return path


def load_episode(path) -> EpisodeArchive:
    path = Path(path)
    meta_path = path / "metadata.json"
    if not meta_path.is_file():
        raise EpisodeFormatError(f"{path} has no metadata.json")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise EpisodeFormatError(f"metadata.json: {exc}") from exc
    mats = [_read_matrix(path / f"{name}.csv") for name in MATRICES]
    return EpisodeArchive(meta, *mats)
