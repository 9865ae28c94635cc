"""Split evaluation: confusion matrices, accuracies, and the results table."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from ..dataset import VEExample
from ..errors import EmptySplitError
from ..features.store import FeatureStore, l2_normalize
from ..models import Label, VEModel, Variant

LABEL_ORDER = (Label.CONTRADICTION, Label.NEUTRAL, Label.ENTAILMENT)


@dataclass
class EvalReport:
    split: str
    confusion: List[List[int]] = field(
        default_factory=lambda: [[0, 0, 0] for _ in range(3)])

    @property
    def example_count(self) -> int:
        return sum(sum(row) for row in self.confusion)

    @property
    def overall_accuracy(self) -> float:
        total = self.example_count
        if total == 0:
            return 0.0
        return sum(self.confusion[i][i] for i in range(3)) / total

    def class_accuracy(self, label: Label) -> float:
        """Accuracy among examples whose true label is `label`.

        A class absent from the split reports 0.0.
        """
        row = self.confusion[int(label)]
        total = sum(row)
        if total == 0:
            return 0.0
        return row[int(label)] / total

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "examples": self.example_count,
            "accuracy": self.overall_accuracy,
            "confusion": [list(row) for row in self.confusion],
            "class_accuracy": {
                label.name.lower(): self.class_accuracy(label)
                for label in LABEL_ORDER
            },
        }


def predict(model: VEModel, example: VEExample,
            store: FeatureStore = None, l2norm: bool = False) -> Label:
    regions = None
    if model.config.variant is not Variant.HYPOTHESIS_ONLY:
        regions = store.regions_for(example.image_id)
        if l2norm:
            regions = l2_normalize(regions)
    indices = model.embedding.lookup(example.hypothesis)
    logits = model.forward(indices, regions)
    # First index wins ties so prediction order is deterministic.
    return Label(int(np.argmax(logits.data)))


def evaluate(model: VEModel, examples: Sequence[VEExample],
             store: FeatureStore = None, l2norm: bool = False,
             split: str = "eval") -> EvalReport:
    if not examples:
        raise EmptySplitError(f"split {split!r} has no examples")
    report = EvalReport(split=split)
    for ex in examples:
        pred = predict(model, ex, store, l2norm)
        report.confusion[int(ex.label)][int(pred)] += 1
    return report


_HEADERS = ("Model Name", "Val Acc", "Val C", "Val N", "Val E",
            "Test Acc", "Test C", "Test N", "Test E")


def _pct(value: float) -> str:
    return f"{100.0 * value:.2f}"


def report_table(
        rows: Sequence[Tuple[str, EvalReport, EvalReport]]) -> Tuple[str, str]:
    """Render results as an aligned text table plus a JSON document.

    Each row is (model name, validation report, test report). Accuracy
    cells are percentages with two decimals.
    """
    cells = [list(_HEADERS)]
    payload = []
    for name, val_rep, test_rep in rows:
        cells.append([
            name,
            _pct(val_rep.overall_accuracy),
            _pct(val_rep.class_accuracy(Label.CONTRADICTION)),
            _pct(val_rep.class_accuracy(Label.NEUTRAL)),
            _pct(val_rep.class_accuracy(Label.ENTAILMENT)),
            _pct(test_rep.overall_accuracy),
            _pct(test_rep.class_accuracy(Label.CONTRADICTION)),
            _pct(test_rep.class_accuracy(Label.NEUTRAL)),
            _pct(test_rep.class_accuracy(Label.ENTAILMENT)),
        ])
        payload.append({
            "model": name,
            "val": val_rep.to_dict(),
            "test": test_rep.to_dict(),
        })
    widths = [max(len(row[i]) for row in cells) for i in range(len(_HEADERS))]
    lines = []
    for idx, row in enumerate(cells):
        lines.append("  ".join(
            cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * w for w in widths))
    text = "\n".join(lines)
    return text, json.dumps(payload, sort_keys=True)
