"""Pass/fail records shared by the validation routines."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any


def _jsonable(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "tolist"):
        return _jsonable(value.tolist())
    return value


@dataclass
class Check:
    name: str
    passed: bool
    slack: float
    location: Any = None
    required: bool = True
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "slack": _jsonable(float(self.slack)),
            "location": _jsonable(self.location),
            "required": self.required,
            "note": self.note,
        }


@dataclass
class ValidationReport:
    """Named checks plus free-form numeric extras.

    ``passed`` only looks at checks flagged as required; informational
    entries are carried along for the record.
    """

    title: str
    checks: list[Check] = field(default_factory=list)
    extras: dict[str, Any] = field(default_factory=dict)

    def add(self, name, passed, slack, location=None, required=True, note=""):
        self.checks.append(Check(name, bool(passed), float(slack), location, required, note))
        return self

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.required)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(c.name == name for c in self.checks)

    def failures(self) -> list[str]:
        return [c.name for c in self.checks if c.required and not c.passed]

    def min_slack(self) -> float:
        req = [c.slack for c in self.checks if c.required]
        return min(req) if req else math.inf

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "extras": {k: _jsonable(v) for k, v in self.extras.items()},
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)

    def merge(self, other: "ValidationReport", prefix: str = "") -> "ValidationReport":
        for c in other.checks:
            self.checks.append(Check(prefix + c.name, c.passed, c.slack, c.location,
                                     c.required, c.note))
        return self
