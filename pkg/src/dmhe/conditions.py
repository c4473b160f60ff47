"""Certificate reporting for iteration convergence and error stability."""

import json
from dataclasses import dataclass, field


@dataclass(frozen=True)
class ConditionEntry:
    """One computable sufficient condition with its raw eigen-data.

    ``value`` compared against ``threshold`` with ``comparison`` ("<" or ">")
    decides ``satisfied``; ``details`` carries the underlying spectral radii
    or eigenvalue extremes.
    """

    name: str
    satisfied: bool
    value: float
    threshold: float
    comparison: str = "<"
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "satisfied": bool(self.satisfied),
            "value": float(self.value),
            "threshold": float(self.threshold),
            "comparison": self.comparison,
            "details": {k: float(v) for k, v in self.details.items()},
        }


@dataclass(frozen=True)
class ConditionReport:
    """Bundle of certificates computed for one configuration."""

    entries: tuple

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, name):
        for entry in self.entries:
            if entry.name == name:
                return entry
        raise KeyError(name)

    @property
    def all_satisfied(self):
        return all(entry.satisfied for entry in self.entries)

    def to_dict(self):
        return {"certificates": [entry.to_dict() for entry in self.entries],
                "all_satisfied": self.all_satisfied}

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)

    def to_csv_rows(self):
        """Rows of (name, satisfied, value, comparison, threshold, details-json)."""
        rows = [("name", "satisfied", "value", "comparison", "threshold", "details")]
        for entry in self.entries:
            rows.append((
                entry.name,
                str(bool(entry.satisfied)).lower(),
                format(entry.value, ".17g"),
                entry.comparison,
                format(entry.threshold, ".17g"),
                json.dumps({k: float(v) for k, v in entry.details.items()}, sort_keys=True),
            ))
        return rows

    def format_table(self):
        lines = []
        for entry in self.entries:
            status = "holds" if entry.satisfied else "fails"
            lines.append(f"{entry.name:32s} {entry.value:.6e} {entry.comparison} "
                         f"{entry.threshold:g}  [{status}]")
        return "\n".join(lines)
