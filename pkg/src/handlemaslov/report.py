"""Structured pass/fail reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "tolist"):
        return _jsonable(value.tolist())
    if isinstance(value, float):
        return float(value)
    return value


@dataclass
class CheckEntry:
    name: str
    passed: bool
    residual: float
    tolerance: float
    witness: Any = None
    note: str = ""

    def to_dict(self):
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "residual": float(self.residual),
            "tolerance": float(self.tolerance),
            "witness": _jsonable(self.witness),
            "note": self.note,
        }


@dataclass
class CheckReport:
    entries: list[CheckEntry] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def add(self, name, passed, residual, tolerance, witness=None, note=""):
        entry = CheckEntry(name, bool(passed), float(residual), float(tolerance), witness, note)
        self.entries.append(entry)
        return entry

    def add_max(self, name, residuals, tolerance, witnesses=None, note=""):
        """Record ``max(residuals) < tolerance`` with the arg-max as witness."""
        residuals = np.asarray(residuals, dtype=float).ravel()
        k = int(np.argmax(residuals))
        witness = None if witnesses is None else witnesses[k]
        return self.add(name, residuals[k] < tolerance, residuals[k], tolerance, witness, note)

    def extend(self, other: CheckReport, prefix=""):
        for e in other.entries:
            self.entries.append(CheckEntry(prefix + e.name, e.passed, e.residual,
                                           e.tolerance, e.witness, e.note))
        self.warnings.extend(other.warnings)

    @property
    def passed(self):
        return all(e.passed for e in self.entries)

    def failures(self):
        return [e for e in self.entries if not e.passed]

    def __getitem__(self, name):
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def names(self):
        return [e.name for e in self.entries]

    def to_dict(self):
        return {
            "passed": self.passed,
            "entries": [e.to_dict() for e in self.entries],
            "warnings": list(self.warnings),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def summary(self):
        lines = []
        for e in self.entries:
            flag = "PASS" if e.passed else "FAIL"
            lines.append(f"[{flag}] {e.name}: {e.residual:.3e} (tol {e.tolerance:.1e})")
        for w in self.warnings:
            lines.append(f"[WARN] {w}")
        return "\n".join(lines)
