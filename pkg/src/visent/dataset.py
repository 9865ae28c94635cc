"""SNLI-VE construction: parse SNLI, derive image premises, split by image.

The premise side of SNLI-VE is the Flickr30k image named by SNLI's caption
identifier; the hypothesis and label carry over unchanged. Splits are
disjoint in images so no premise leaks across train/val/test.
"""

from __future__ import annotations

import io
import json
import re
import string
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import (
    EmptyHypothesisError,
    FormatError,
    ProvenanceError,
    SplitSpecError,
    ValidationError,
)
from .models import Label

TOKENIZER_VERSION = "v1"
DATASET_FORMAT = "snli-ve-jsonl"
DATASET_VERSION = 1

_IMAGE_ID_RE = re.compile(r"^\d+\.jpg$")
_PUNCT = set(string.punctuation)

LABEL_NAMES = {
    Label.CONTRADICTION: "contradiction",
    Label.NEUTRAL: "neutral",
    Label.ENTAILMENT: "entailment",
}
NAME_LABELS = {v: k for k, v in LABEL_NAMES.items()}


def tokenize(text: str) -> Tuple[str, ...]:
    """Deterministic tokenizer (version v1).

    Lowercase, split on whitespace, then detach leading/trailing ASCII
    punctuation runs as single-character tokens. Interior punctuation
    (it's, long-haired) stays attached.
    """
    out: List[str] = []
    for chunk in text.lower().split():
        head: List[str] = []
        tail: List[str] = []
        while chunk and chunk[0] in _PUNCT:
            head.append(chunk[0])
            chunk = chunk[1:]
        while chunk and chunk[-1] in _PUNCT:
            tail.append(chunk[-1])
            chunk = chunk[:-1]
        out.extend(head)
        if chunk:
            out.append(chunk)
        out.extend(reversed(tail))
    return tuple(out)


@dataclass(frozen=True)
class SNLIRecord:
    premise_text: str
    hypothesis_text: str
    gold_label: str
    caption_id: str
    pair_id: str

    VALID_LABELS = ("entailment", "neutral", "contradiction", "-")

    @property
    def skip(self) -> bool:
        """Annotators reached no consensus; the record carries no label."""
        return self.gold_label == "-"


_SNLI_FIELDS = {
    "sentence1": "premise_text",
    "sentence2": "hypothesis_text",
    "gold_label": "gold_label",
    "captionID": "caption_id",
    "pairID": "pair_id",
}


def parse_snli(lines: Iterable[str], strict: bool = False,
               issues: Optional[List[str]] = None) -> List[SNLIRecord]:
    """One SNLIRecord per well-formed line.

    Malformed lines are collected into `issues` with their line number;
    strict mode raises FormatError on the first one instead.
    """
    records: List[SNLIRecord] = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            raw = json.loads(line)
            if not isinstance(raw, dict):
                raise ValueError("line is not a JSON object")
            kwargs = {}
            for src, dst in _SNLI_FIELDS.items():
                if src not in raw:
                    raise ValueError(f"missing field {src!r}")
                kwargs[dst] = str(raw[src])
            if kwargs["gold_label"] not in SNLIRecord.VALID_LABELS:
                raise ValueError(f"invalid gold_label {kwargs['gold_label']!r}")
            records.append(SNLIRecord(**kwargs))
        except ValueError as exc:
            message = f"line {lineno}: {exc}"
            if strict:
                raise FormatError(message) from None
            if issues is not None:
                issues.append(message)
    return records


def derive_image_id(record: SNLIRecord) -> str:
    """The Flickr30k filename: caption_id minus its '#<index>' suffix."""
    cid = record.caption_id
    head, sep, _ = cid.partition("#")
    if not sep or not _IMAGE_ID_RE.match(head):
        raise ProvenanceError(
            f"caption_id {cid!r} of pair {record.pair_id!r} does not follow "
            "the '<digits>.jpg#<index>' convention")
    return head


@dataclass(frozen=True)
class VEExample:
    """One (image premise, hypothesis, label) item.

    `hypothesis` is the tokenization of `hypothesis_raw` under the fixed
    tokenizer; the raw string is what gets serialized, so retokenizing
    never requires a rebuild. `extra` preserves unknown file fields.
    """

    image_id: str
    hypothesis_raw: str
    label: Label
    pair_id: str
    hypothesis: Tuple[str, ...] = field(default=())
    extra: dict = field(default_factory=dict, compare=True)

    def __post_init__(self):
        if not _IMAGE_ID_RE.match(self.image_id):
            raise ValidationError(
                f"image_id {self.image_id!r} does not match '<digits>.jpg'")
        if not isinstance(self.label, Label):
            object.__setattr__(self, "label", Label(self.label))
        tokens = tokenize(self.hypothesis_raw)
        if not tokens:
            raise EmptyHypothesisError(
                f"pair {self.pair_id!r}: hypothesis tokenizes to nothing")
        object.__setattr__(self, "hypothesis", tokens)


def example_from_snli(record: SNLIRecord) -> VEExample:
    """SNLI record -> VE example; the caller filters skip-flagged records."""
    if record.skip:
        raise ValidationError(
            f"pair {record.pair_id!r} has no consensus label; filter skip "
            "records before conversion")
    return VEExample(
        image_id=derive_image_id(record),
        hypothesis_raw=record.hypothesis_text,
        label=NAME_LABELS[record.gold_label],
        pair_id=record.pair_id,
    )


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint image-id sets for train/val/test."""

    train: frozenset
    val: frozenset
    test: frozenset

    def __post_init__(self):
        object.__setattr__(self, "train", frozenset(self.train))
        object.__setattr__(self, "val", frozenset(self.val))
        object.__setattr__(self, "test", frozenset(self.test))
        for name, ids in (("train", self.train), ("val", self.val),
                          ("test", self.test)):
            if not ids:
                raise SplitSpecError(f"{name} image set is empty")
        overlaps = []
        if self.train & self.val:
            overlaps.append("train/val")
        if self.train & self.test:
            overlaps.append("train/test")
        if self.val & self.test:
            overlaps.append("val/test")
        if overlaps:
            raise SplitSpecError(
                f"image sets must be pairwise disjoint; overlap in "
                f"{', '.join(overlaps)}")

    @classmethod
    def from_files(cls, train_path, val_path, test_path) -> "SplitSpec":
        def read(path):
            with open(path, "r", encoding="utf-8") as fh:
                return frozenset(line.strip() for line in fh if line.strip())

        return cls(train=read(train_path), val=read(val_path),
                   test=read(test_path))


def partition_by_image(examples: Sequence[VEExample], spec: SplitSpec,
                       issues: Optional[List[str]] = None):
    """Route each example to the split owning its image.

    Examples whose image is in no split set are dropped, one issue line
    each. Output order within a split is (image_id, pair_id) sorted, so
    partitioning is independent of input order.
    """
    buckets = {"train": [], "val": [], "test": []}
    membership = {}
    for name in buckets:
        for image_id in getattr(spec, name):
            membership[image_id] = name
    for ex in examples:
        name = membership.get(ex.image_id)
        if name is None:
            if issues is not None:
                issues.append(
                    f"pair {ex.pair_id}: image {ex.image_id} is in no split")
            continue
        buckets[name].append(ex)
    key = lambda ex: (ex.image_id, ex.pair_id)  # noqa: E731
    return (sorted(buckets["train"], key=key),
            sorted(buckets["val"], key=key),
            sorted(buckets["test"], key=key))


@dataclass(frozen=True)
class DatasetStats:
    images: int
    contradiction: int
    neutral: int
    entailment: int
    vocabulary: int
    tokenizer_version: str = TOKENIZER_VERSION

    @property
    def total(self) -> int:
        return self.contradiction + self.neutral + self.entailment

    @property
    def imbalanced(self) -> bool:
        """True when the largest class exceeds the smallest by more than 1%."""
        counts = [self.contradiction, self.neutral, self.entailment]
        lo, hi = min(counts), max(counts)
        if lo == 0:
            return hi > 0
        return (hi - lo) / lo > 0.01

    def to_dict(self) -> dict:
        return {
            "images": self.images,
            "examples": {
                "contradiction": self.contradiction,
                "neutral": self.neutral,
                "entailment": self.entailment,
                "total": self.total,
            },
            "vocabulary": self.vocabulary,
            "tokenizer_version": self.tokenizer_version,
            "imbalanced": self.imbalanced,
        }


def compute_stats(split: Sequence[VEExample]) -> DatasetStats:
    """Exact counts; vocabulary counts distinct hypothesis tokens only."""
    images = set()
    vocab = set()
    counts = {Label.CONTRADICTION: 0, Label.NEUTRAL: 0, Label.ENTAILMENT: 0}
    for ex in split:
        images.add(ex.image_id)
        vocab.update(ex.hypothesis)
        counts[ex.label] += 1
    return DatasetStats(
        images=len(images),
        contradiction=counts[Label.CONTRADICTION],
        neutral=counts[Label.NEUTRAL],
        entailment=counts[Label.ENTAILMENT],
        vocabulary=len(vocab),
    )


def build_vocabulary(examples: Sequence[VEExample]) -> List[str]:
    """Sorted distinct hypothesis tokens; the embedding-table row order."""
    vocab = set()
    for ex in examples:
        vocab.update(ex.hypothesis)
    return sorted(vocab)


def write_examples(examples: Sequence[VEExample], path) -> None:
    """Line-delimited JSON with a leading format/version line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": DATASET_FORMAT,
                             "version": DATASET_VERSION}) + "\n")
        for ex in examples:
            row = {
                "pair_id": ex.pair_id,
                "image_id": ex.image_id,
                "hypothesis": ex.hypothesis_raw,
                "label": LABEL_NAMES[ex.label],
            }
            for k, v in ex.extra.items():
                if k not in row:
                    row[k] = v
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_examples(path) -> List[VEExample]:
    """Inverse of write_examples; unknown fields survive in `extra`."""
    with open(path, "r", encoding="utf-8") as fh:
        return _read_example_lines(fh)


def _read_example_lines(fh: io.TextIOBase) -> List[VEExample]:
    examples: List[VEExample] = []
    known = {"pair_id", "image_id", "hypothesis", "label"}
    for lineno, line in enumerate(fh, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            raw = json.loads(line)
        except ValueError:
            raise FormatError(f"line {lineno}: not valid JSON") from None
        if not isinstance(raw, dict):
            raise FormatError(f"line {lineno}: expected a JSON object")
        if lineno == 1 and "format" in raw:
            if raw.get("format") != DATASET_FORMAT:
                raise FormatError(
                    f"line 1: unknown format {raw.get('format')!r}")
            if raw.get("version") != DATASET_VERSION:
                raise FormatError(
                    f"line 1: unsupported version {raw.get('version')!r} "
                    f"(reader supports {DATASET_VERSION})")
            continue
        missing = known - set(raw)
        if missing:
            raise FormatError(
                f"line {lineno}: missing fields {sorted(missing)}")
        label_name = raw["label"]
        if label_name not in NAME_LABELS:
            raise FormatError(f"line {lineno}: unknown label {label_name!r}")
        try:
            examples.append(VEExample(
                image_id=raw["image_id"],
                hypothesis_raw=raw["hypothesis"],
                label=NAME_LABELS[label_name],
                pair_id=raw["pair_id"],
                extra={k: v for k, v in raw.items() if k not in known},
            ))
        except ValidationError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    return examples


def build_snli_ve(snli_lines: Iterable[str], spec: SplitSpec,
                  strict: bool = False,
                  issues: Optional[List[str]] = None):
    """Full pipeline: parse, skip no-consensus, derive images, partition."""
    if issues is None:
        issues = []
    records = parse_snli(snli_lines, strict=strict, issues=issues)
    examples = []
    for rec in records:
        if rec.skip:
            continue
        try:
            examples.append(example_from_snli(rec))
        except EmptyHypothesisError as exc:
            if strict:
                raise
            issues.append(str(exc))
    return partition_by_image(examples, spec, issues=issues)
