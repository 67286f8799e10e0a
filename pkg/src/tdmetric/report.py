"""Run reports: an append-only list of named checks."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import TDMetricError

STATUSES = ("pass", "fail", "warn")


@dataclass(frozen=True)
class CheckResult:
    name: str
    status: str
    defect: float | None
    tol: float | None
    seconds: float = 0.0
    detail: str = ""

    def as_dict(self, timing=True) -> dict:
        out = {"name": self.name, "status": self.status, "defect": self.defect, "tol": self.tol}
        if timing:
            out["seconds"] = self.seconds
        if self.detail:
            out["detail"] = self.detail
        return out

    def line(self) -> str:
        defect = "-" if self.defect is None else f"{self.defect:.3e}"
        tol = "-" if self.tol is None else f"{self.tol:.1e}"
        extra = f"  {self.detail}" if self.detail else ""
        return f"{self.status.upper():4s} {self.name:48s} defect={defect:>10s} tol={tol:>8s}{extra}"


class RunReport:
    def __init__(self, scenario: str):
        self.scenario = scenario
        self._checks: list[CheckResult] = []
        self._names: set[str] = set()

    def add(self, result: CheckResult) -> CheckResult:
        if result.status not in STATUSES:
            raise ValueError(f"bad status {result.status!r}")
        if result.name in self._names:
            raise ValueError(f"check {result.name!r} recorded twice")
        self._names.add(result.name)
        self._checks.append(result)
        return result

    def extend(self, results):
        for r in results:
            self.add(r)

    @property
    def checks(self) -> tuple:
        return tuple(self._checks)

    @property
    def ok(self) -> bool:
        return all(c.status != "fail" for c in self._checks)

    @property
    def failures(self) -> list:
        return [c for c in self._checks if c.status == "fail"]

    def __getitem__(self, name) -> CheckResult:
        for c in self._checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __contains__(self, name):
        return name in self._names

    def to_dict(self, timing=True, sort=False) -> dict:
        checks = sorted(self._checks, key=lambda c: c.name) if sort else self._checks
        return {"scenario": self.scenario, "checks": [c.as_dict(timing) for c in checks]}

    def timings(self) -> dict:
        return {c.name: c.seconds for c in sorted(self._checks, key=lambda c: c.name)}


def _status(value, tol, mode):
    if mode == "info":
        return "pass"
    if mode == "below":
        return "pass" if value < tol else "fail"
    if mode == "above":
        return "pass" if value > tol else "fail"
    if mode == "warn_below":
        return "pass" if value < tol else "warn"
    if mode == "warn_above":
        return "pass" if value > tol else "warn"
    raise ValueError(f"unknown comparison mode {mode!r}")


def measure(name, fn, tol=None, mode="below") -> CheckResult:
    """Run ``fn`` and grade its result.

    ``fn`` returns a float, or ``(float, detail)``. Package errors and linear
    algebra failures turn into a failed check rather than propagating.
    """
    start = time.perf_counter()
    try:
        out = fn()
    except (TDMetricError, np.linalg.LinAlgError, ValueError) as exc:
        return CheckResult(name, "fail", None, tol, time.perf_counter() - start, f"{type(exc).__name__}: {exc}")
    detail = ""
    if isinstance(out, tuple):
        out, detail = out
    value = float(out)
    if not np.isfinite(value) and mode != "info":
        status = "fail"
    else:
        status = _status(value, tol, mode)
    return CheckResult(name, status, value, tol if mode != "info" else None, time.perf_counter() - start, detail)
