"""Run manifests: the full record needed to reproduce a run."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone


@dataclass
class RunManifest:
    command: str
    config: dict
    package_version: str = ""
    library_versions: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    iterations: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0
    outputs: list = field(default_factory=list)
    status: str = "ok"
    failure: str | None = None
    timestamp: str = ""

    def __post_init__(self):
        if not self.timestamp:
            self.timestamp = datetime.now(timezone.utc).isoformat()

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2,
                          default=_jsonify)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))

    def write(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def read(cls, path) -> "RunManifest":
        with open(path, "r", encoding="ascii") as fh:
            return cls.from_json(fh.read())

    def comparable(self) -> dict:
        """Everything except time-derived fields; equal for identical runs."""
        record = asdict(self)
        record.pop("timestamp")
        record.pop("wall_clock_s")
        return json.loads(json.dumps(record, default=_jsonify))


def _jsonify(value):
    import numpy as np
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serializable: {type(value)}")
