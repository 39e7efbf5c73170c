"""ChainReport: evaluated terms of an inequality chain with error-aware verdicts."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Relation:
    """values[left] <direction> values[right], direction in {'<=', '>=', '='}."""

    left: int
    right: int
    direction: str

    def __post_init__(self):
        if self.direction not in ("<=", ">=", "="):
            raise ValueError(f"bad relation direction {self.direction!r}")

    def as_list(self):
        return [self.left, self.right, self.direction]


@dataclass
class ChainReport:
    labels: list
    values: list
    error_bars: list
    relations: list
    margins: list = field(default_factory=list)
    relative_gaps: list = field(default_factory=list)
    passed: bool = False
    abs_tol: float = 0.0
    flags: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def evaluate(self) -> "ChainReport":
        """Fill margins and the verdict.

        A >= B passes iff A - B >= -(err_A + err_B + abs_tol); equality relations
        pass iff |A - B| is within the same budget.
        """
        self.margins, self.relative_gaps = [], []
        ok = True
        for rel in self.relations:
            a, b = self.values[rel.left], self.values[rel.right]
            budget = self.error_bars[rel.left] + self.error_bars[rel.right] + self.abs_tol
            if rel.direction == "<=":
                m = b - a
            elif rel.direction == ">=":
                m = a - b
            else:
                m = -abs(a - b)
            scale = max(abs(a), abs(b))
            self.margins.append(m)
            self.relative_gaps.append(abs(a - b) / scale if scale > 0 else 0.0)
            if not (math.isfinite(m) and m >= -budget):
                ok = False
        self.passed = ok and all(math.isfinite(v) for v in self.values)
        return self

    @property
    def pass_(self) -> bool:
        return self.passed

    def gap(self, k: int = 0) -> float:
        """Relative gap |A-B|/max(|A|,|B|) of the k-th relation."""
        return self.relative_gaps[k]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "labels": list(self.labels),
            "values": [float(v) for v in self.values],
            "error_bars": [float(v) for v in self.error_bars],
            "relations": [r.as_list() for r in self.relations],
            "margins": [float(v) for v in self.margins],
            "relative_gaps": [float(v) for v in self.relative_gaps],
            "pass": bool(self.passed),
            "flags": _jsonable(self.flags),
            "metadata": _jsonable(self.metadata),
        }

    def to_json(self, **kw) -> str:
        kw.setdefault("indent", 2)
        kw.setdefault("sort_keys", True)
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "ChainReport":
        return cls(
            labels=list(d["labels"]),
            values=list(d["values"]),
            error_bars=list(d["error_bars"]),
            relations=[Relation(int(a), int(b), str(c)) for a, b, c in d["relations"]],
            margins=list(d.get("margins", [])),
            relative_gaps=list(d.get("relative_gaps", [])),
            passed=bool(d["pass"]),
            flags=dict(d.get("flags", {})),
            metadata=dict(d.get("metadata", {})),
        )

    def csv_header(self) -> list:
        cols = []
        for lab in self.labels:
            cols += [lab, f"{lab}_err"]
        cols += [f"margin_{i}" for i in range(len(self.relations))]
        return cols + ["pass"]

    def csv_row(self) -> list:
        row = []
        for v, e in zip(self.values, self.error_bars):
            row += [repr(float(v)), repr(float(e))]
        row += [repr(float(m)) for m in self.margins]
        return row + [str(bool(self.passed)).lower()]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.csv_header())
        w.writerow(self.csv_row())
        return buf.getvalue()

    def summary(self) -> str:
        parts = [f"{l}={v:.6g}±{e:.2g}" for l, v, e in zip(self.labels, self.values, self.error_bars)]
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] " + ", ".join(parts)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


@dataclass
class CheckReport:
    """Verdict of a non-chain check (closed forms, inclusions, convexity probes)."""

    name: str
    passed: bool
    metrics: dict
    details: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "pass": bool(self.passed),
            "metrics": _jsonable(self.metrics),
            "details": _jsonable(self.details),
            "metadata": _jsonable(self.metadata),
        }

    def to_json(self, **kw) -> str:
        kw.setdefault("indent", 2)
        kw.setdefault("sort_keys", True)
        return json.dumps(self.to_dict(), **kw)

    def csv_header(self) -> list:
        return sorted(self.metrics) + ["pass"]

    def csv_row(self) -> list:
        return [repr(_scalar(self.metrics[k])) for k in sorted(self.metrics)] + [str(bool(self.passed)).lower()]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.csv_header())
        w.writerow(self.csv_row())
        return buf.getvalue()

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        parts = [f"{k}={_scalar(v):.6g}" for k, v in sorted(self.metrics.items()) if isinstance(_scalar(v), float)]
        return f"[{verdict}] {self.name}: " + ", ".join(parts)


def _scalar(v):
    if isinstance(v, bool):
        return float(v)
    if isinstance(v, (int, float)):
        return float(v)
    if hasattr(v, "item"):
        return float(v.item())
    return v
