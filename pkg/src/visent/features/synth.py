"""Synthetic grounded scenes with rule-computable entailment labels.

A scene is a small grid of slots, each holding one (object, attribute)
pair or background. Region vectors encode their slot as concatenated
one-hot blocks (object | attribute | pair) plus seeded noise, so the
task is decidable from pooled region features. Hypotheses come from the
fixed grammar "a <object> is <attribute>" and the label follows the rule:

    pair mentioned is present          -> entailment
    object present, attribute differs  -> contradiction
    object absent                      -> neutral

Every hypothesis string is paired with scenes of several labels, so a
text-only model cannot beat the per-hypothesis majority ceiling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigError
from ..dataset import VEExample, tokenize
from ..models import Label
from .store import FeatureStore

OBJECT_WORDS = (
    "dog", "cat", "bird", "horse", "car", "boat", "child", "woman",
    "man", "tree", "house", "bus", "turtle", "plane", "girl", "boy",
)
ATTRIBUTE_WORDS = (
    "running", "sitting", "sleeping", "jumping", "swimming", "standing",
    "red", "blue", "green", "small", "large", "old", "young", "wet",
    "shiny", "striped",
)

_LABEL_CYCLE = (Label.ENTAILMENT, Label.CONTRADICTION, Label.NEUTRAL)

Slot = Optional[Tuple[int, int]]


@dataclass(frozen=True)
class SynthConfig:
    """Defaults are the canonical task: dense enough coverage per
    hypothesis (two objects x two attributes over 200 scenes) that a
    region-reading model generalizes to fresh scenes inside a desk-scale
    step budget, while the text-only ceiling stays at exactly 1/3."""

    n_objects: int = 2
    n_attributes: int = 2
    grid_side: int = 2
    n_examples: int = 200
    n_val: int = 48
    n_test: int = 48
    noise: float = 0.02
    amplitude: float = 2.0

    def __post_init__(self):
        if self.n_objects < 2 or self.n_attributes < 2:
            raise ConfigError(
                "need at least 2 objects and 2 attributes so every "
                "hypothesis admits entailing, contradicting and neutral "
                "scenes")
        if self.n_objects > len(OBJECT_WORDS):
            raise ConfigError(
                f"n_objects capped at {len(OBJECT_WORDS)} (word inventory)")
        if self.n_attributes > len(ATTRIBUTE_WORDS):
            raise ConfigError(
                f"n_attributes capped at {len(ATTRIBUTE_WORDS)} "
                "(word inventory)")
        if self.grid_side < 1:
            raise ConfigError("grid_side must be >= 1")
        for name in ("n_examples", "n_val", "n_test"):
            if getattr(self, name) < 3:
                raise ConfigError(f"{name} must be >= 3")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")
        if self.amplitude <= 0:
            raise ConfigError("amplitude must be > 0")

    @property
    def n_slots(self) -> int:
        return self.grid_side * self.grid_side

    @property
    def region_width(self) -> int:
        return (self.n_objects + self.n_attributes
                + self.n_objects * self.n_attributes)

    def hypotheses(self) -> List[Tuple[int, int]]:
        return [(o, a) for o in range(self.n_objects)
                for a in range(self.n_attributes)]

    def hypothesis_text(self, obj: int, attr: int) -> str:
        return f"a {OBJECT_WORDS[obj]} is {ATTRIBUTE_WORDS[attr]}"

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**d)


def scene_label(slots: Sequence[Slot], obj: int, attr: int) -> Label:
    """The generator's ground-truth rule; precedence E > C > N."""
    pairs = {s for s in slots if s is not None}
    if (obj, attr) in pairs:
        return Label.ENTAILMENT
    if any(o == obj for o, _ in pairs):
        return Label.CONTRADICTION
    return Label.NEUTRAL


def _sample_scene(config: SynthConfig, rng: np.random.Generator,
                  obj: int, attr: int, target: Label) -> Tuple[Slot, ...]:
    """Slots realizing `target` for hypothesis (obj, attr).

    Objects are distinct within a scene, so the label rule is unambiguous.
    """
    others = [o for o in range(config.n_objects) if o != obj]
    slots: List[Slot] = [None] * config.n_slots
    positions = list(rng.permutation(config.n_slots))

    def fill_distractors(count: int) -> None:
        chosen = rng.permutation(len(others))[:count]
        for idx in chosen:
            pos = positions.pop()
            slots[pos] = (others[int(idx)],
                          int(rng.integers(config.n_attributes)))

    if target == Label.ENTAILMENT:
        slots[positions.pop()] = (obj, attr)
        max_extra = min(len(positions), len(others))
        fill_distractors(int(rng.integers(0, max_extra + 1)))
    elif target == Label.CONTRADICTION:
        wrong = int(rng.integers(config.n_attributes - 1))
        if wrong >= attr:
            wrong += 1
        slots[positions.pop()] = (obj, wrong)
        max_extra = min(len(positions), len(others))
        fill_distractors(int(rng.integers(0, max_extra + 1)))
    else:
        max_fill = min(config.n_slots, len(others))
        fill_distractors(int(rng.integers(1, max_fill + 1)))
    return tuple(slots)


def encode_scene(config: SynthConfig, rng: np.random.Generator,
                 slots: Sequence[Slot]) -> np.ndarray:
    """Scene as a feature grid (region_width x side x side), noised."""
    k, d = config.region_width, config.grid_side
    grid = np.zeros((k, d, d), dtype=np.float32)
    for pos, slot in enumerate(slots):
        if slot is None:
            continue
        obj, attr = slot
        row, col = divmod(pos, d)
        vec = np.zeros(k, dtype=np.float32)
        vec[obj] = config.amplitude
        vec[config.n_objects + attr] = config.amplitude
        vec[config.n_objects + config.n_attributes
            + obj * config.n_attributes + attr] = config.amplitude
        grid[:, row, col] = vec
    if config.noise:
        grid += rng.normal(0.0, config.noise,
                           size=grid.shape).astype(np.float32)
    return grid


def _generate(config: SynthConfig, rng: np.random.Generator, n: int,
              image_start: int, exact_triples: bool,
              scenes: Dict[str, Tuple[Slot, ...]],
              store: FeatureStore) -> List[VEExample]:
    hyps = config.hypotheses()
    if exact_triples and n % 3 != 0:
        raise ConfigError(
            f"an all-three-labels split needs a multiple of 3 examples, "
            f"got {n}")
    examples: List[VEExample] = []
    for i in range(n):
        label = _LABEL_CYCLE[i % 3]
        obj, attr = hyps[(i // 3) % len(hyps)]
        slots = _sample_scene(config, rng, obj, attr, label)
        assert scene_label(slots, obj, attr) == label
        image_id = f"9{image_start + i:08d}.jpg"
        scenes[image_id] = slots
        store.put(image_id, encode_scene(config, rng, slots))
        examples.append(VEExample(
            image_id=image_id,
            hypothesis_raw=config.hypothesis_text(obj, attr),
            label=label,
            pair_id=f"synth-{image_start + i:08d}",
        ))
    return examples


def _parse_hypothesis(config: SynthConfig, text: str) -> Tuple[int, int]:
    tokens = tokenize(text)
    if (len(tokens) != 4 or tokens[0] != "a" or tokens[2] != "is"
            or tokens[1] not in OBJECT_WORDS[:config.n_objects]
            or tokens[3] not in ATTRIBUTE_WORDS[:config.n_attributes]):
        raise ConfigError(
            f"hypothesis {text!r} is not from the synthetic grammar")
    return (OBJECT_WORDS.index(tokens[1]), ATTRIBUTE_WORDS.index(tokens[3]))


def _make_oracle(config: SynthConfig,
                 scenes: Dict[str, Tuple[Slot, ...]]) -> Callable:
    def oracle(example: VEExample) -> Label:
        slots = scenes.get(example.image_id)
        if slots is None:
            raise ConfigError(
                f"image {example.image_id!r} was not generated here")
        obj, attr = _parse_hypothesis(config, example.hypothesis_raw)
        return scene_label(slots, obj, attr)

    return oracle


def synth_generate(config: SynthConfig, seed: int):
    """One corpus: (examples, store, oracle).

    Labels cycle E, C, N within each hypothesis, so every hypothesis that
    appears at least twice carries at least two distinct labels.
    """
    rng = np.random.default_rng(seed)
    scenes: Dict[str, Tuple[Slot, ...]] = {}
    store = FeatureStore("grid", k=config.region_width, d=config.grid_side)
    examples = _generate(config, rng, config.n_examples, 0, False,
                         scenes, store)
    return examples, store, _make_oracle(config, scenes)


@dataclass
class SynthData:
    """Train/val/test corpora over one store; val/test are exact E/C/N
    triples per hypothesis, so any text-only classifier scores 1/3."""

    config: SynthConfig
    train: List[VEExample]
    val: List[VEExample]
    test: List[VEExample]
    store: FeatureStore
    oracle: Callable

    @property
    def vocabulary(self) -> List[str]:
        vocab = set()
        for ex in self.train + self.val + self.test:
            vocab.update(ex.hypothesis)
        return sorted(vocab)


def synth_suite(config: SynthConfig, seed: int) -> SynthData:
    rng = np.random.default_rng(seed)
    scenes: Dict[str, Tuple[Slot, ...]] = {}
    store = FeatureStore("grid", k=config.region_width, d=config.grid_side)
    train = _generate(config, rng, config.n_examples, 0, False, scenes, store)
    val = _generate(config, rng, config.n_val, config.n_examples, True,
                    scenes, store)
    test = _generate(config, rng, config.n_test,
                     config.n_examples + config.n_val, True, scenes, store)
    return SynthData(config=config, train=train, val=val, test=test,
                     store=store, oracle=_make_oracle(config, scenes))


def hypothesis_only_ceiling(examples: Sequence[VEExample]) -> float:
    """Best possible text-only accuracy: per-hypothesis majority vote."""
    groups: Dict[str, List[Label]] = {}
    for ex in examples:
        groups.setdefault(ex.hypothesis_raw, []).append(ex.label)
    if not examples:
        return 0.0
    correct = 0
    for labels in groups.values():
        correct += max(labels.count(lab) for lab in Label)
    return correct / len(examples)
