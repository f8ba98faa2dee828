"""Machine-readable report emission (JSON and histogram CSV)."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone

from . import __version__


@dataclass
class Report:
    command: str
    params: dict
    results: dict
    exact_probabilities: dict[str, str] = field(default_factory=dict)
    seeds: dict[str, int] = field(default_factory=dict)
    timestamps: dict[str, str] = field(default_factory=dict)
    tool_version: str = __version__
    # Pre-rendered CSV body for histogram reports.
    table: str | None = None

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "params": self.params,
            "results": self.results,
            "exact_probabilities": self.exact_probabilities,
            "timestamps": self.timestamps,
            "tool_version": self.tool_version,
            "seeds": self.seeds,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        return cls(
            command=d["command"],
            params=d["params"],
            results=d["results"],
            exact_probabilities=d.get("exact_probabilities", {}),
            seeds=d.get("seeds", {}),
            timestamps=d.get("timestamps", {}),
            tool_version=d.get("tool_version", __version__),
        )


def now_stamp() -> dict[str, str]:
    """Generation time; ``SOURCE_DATE_EPOCH`` pins it for reproducible output."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    moment = (
        datetime.fromtimestamp(int(epoch), tz=timezone.utc)
        if epoch
        else datetime.now(tz=timezone.utc)
    )
    return {"generated_at": moment.replace(microsecond=0).isoformat()}


def emit_report(report: Report, fmt: str = "json") -> bytes:
    if fmt == "json":
        text = json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
        return text.encode()
    if fmt == "csv":
        if report.table is None:
            raise ValueError(f"report {report.command!r} has no CSV form")
        return report.table.encode()
    raise ValueError(f"unknown format {fmt!r}")


def parse_report(data: bytes) -> Report:
    return Report.from_dict(json.loads(data))
