"""Training loop: Adam over mean-batch cross-entropy, deterministic by seed.

Run-to-run determinism comes from three fixed streams: parameter init is
seeded by the model config, the epoch-e shuffle uses seed + e, and batch
order is consumed single-threaded. Identical config and seed therefore
give bit-identical loss logs and checkpoints.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from ..autograd import ops
from ..autograd.tensor import ComputationRecord, backward
from ..dataset import VEExample, build_vocabulary, read_examples
from ..errors import ConfigError, PreflightError, TrainAborted
from ..features.embeddings import load_embeddings
from ..features.store import FeatureStore, l2_normalize
from ..layers import EmbeddingTable
from ..models import ModelConfig, VEModel, Variant, cross_entropy
from .checkpoint import save_checkpoint
from .evaluate import evaluate
from .optim import DECAY_MODES, AdamHyper, AdamState, adam_step


@dataclass
class TrainConfig:
    """Everything one training run depends on.

    The supplementary's "adaptive learning rate" has two readings: Adam's
    own per-parameter adaptation (always on) and a schedule. Both are
    represented: plateau_halving toggles the halve-on-val-plateau schedule
    on top of Adam.
    """

    model: ModelConfig
    epochs: int
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 64
    seed: int = 0
    decay_mode: str = "decoupled"
    plateau_halving: bool = True
    plateau_patience: int = 3
    # None = decide from the feature store kind (ROI stacks get normalized).
    l2_normalize_regions: Optional[bool] = None
    early_stop_train_accuracy: Optional[float] = None
    train_data: Optional[str] = None
    val_data: Optional[str] = None
    features: Optional[str] = None
    embeddings: Optional[str] = None
    checkpoint: Optional[str] = None
    log: Optional[str] = None

    def __post_init__(self):
        # Configs arrive from JSON files and --set overrides, so wrong types
        # are user input, not programming errors.
        if not isinstance(self.model, ModelConfig):
            raise ConfigError("model must be a model config section")
        for name in ("epochs", "batch_size", "seed", "plateau_patience"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
        for name in ("learning_rate", "weight_decay"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{name} must be a number, got {value!r}")
        if not isinstance(self.plateau_halving, bool):
            raise ConfigError("plateau_halving must be true or false, "
                              f"got {self.plateau_halving!r}")
        if (self.l2_normalize_regions is not None
                and not isinstance(self.l2_normalize_regions, bool)):
            raise ConfigError("l2_normalize_regions must be true or false, "
                              f"got {self.l2_normalize_regions!r}")
        if (self.early_stop_train_accuracy is not None
                and (isinstance(self.early_stop_train_accuracy, bool)
                     or not isinstance(self.early_stop_train_accuracy,
                                       (int, float)))):
            raise ConfigError("early_stop_train_accuracy must be a number")
        for name in ("train_data", "val_data", "features", "embeddings",
                     "checkpoint", "log"):
            value = getattr(self, name)
            if value is not None and not isinstance(value, str):
                raise ConfigError(f"{name} must be a path string, "
                                  f"got {value!r}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if self.plateau_patience < 1:
            raise ConfigError("plateau_patience must be >= 1")
        if self.decay_mode not in DECAY_MODES:
            raise ConfigError(
                f"decay_mode must be one of {DECAY_MODES}, got "
                f"{self.decay_mode!r}")
        if (self.early_stop_train_accuracy is not None
                and not 0 < self.early_stop_train_accuracy <= 1):
            raise ConfigError("early_stop_train_accuracy must be in (0, 1]")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "model" not in d:
            raise ConfigError("train config must contain a 'model' section")
        d["model"] = ModelConfig.from_dict(d["model"])
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown train config fields: {unknown}")
        return cls(**d)


@dataclass
class TrainResult:
    model: VEModel
    history: List[dict]
    best_epoch: int
    best_val_accuracy: Optional[float]
    epochs_run: int


def _batches(order: np.ndarray, size: int):
    for start in range(0, len(order), size):
        yield order[start:start + size]


def _regions_for(store, image_id: str, l2norm: bool):
    regions = store.regions_for(image_id)
    if l2norm:
        regions = l2_normalize(regions)
    return regions


def _diagnostic_dump(model: VEModel, epoch: int, batch_index: int,
                     loss_value: float) -> dict:
    worst = {}
    for name, t in model.parameters().items():
        worst[name] = {
            "max_abs_value": float(np.max(np.abs(t.data))),
            "max_abs_grad": float(np.max(np.abs(t.grad)))
            if t.grad is not None else None,
        }
    return {"event": "abort", "epoch": epoch, "batch": batch_index,
            "loss": loss_value, "parameters": worst}


def train(config: TrainConfig, data=None) -> TrainResult:
    """Run the loop; returns the model holding the selected checkpoint state.

    `data` may carry in-memory splits (attributes train, val, store) in
    place of the path fields. Checkpoint selection is best validation
    accuracy, ties resolved toward the earlier epoch; without a validation
    split the latest epoch wins.
    """
    if data is not None:
        train_examples: Sequence[VEExample] = data.train
        val_examples = getattr(data, "val", None) or []
        store: Optional[FeatureStore] = getattr(data, "store", None)
    else:
        if not config.train_data:
            raise ConfigError("train_data path is required")
        train_examples = read_examples(config.train_data)
        val_examples = (read_examples(config.val_data)
                        if config.val_data else [])
        store = (FeatureStore.open(config.features)
                 if config.features else None)
    if not train_examples:
        raise PreflightError("training split has no examples")

    model_cfg = config.model
    needs_regions = model_cfg.needs_regions
    if needs_regions:
        if store is None:
            raise PreflightError(
                f"variant {model_cfg.variant.value} needs image features; "
                "no feature store given")
        wanted = {ex.image_id for ex in train_examples}
        wanted.update(ex.image_id for ex in val_examples)
        missing = store.missing(sorted(wanted))
        if missing:
            raise PreflightError(
                f"features missing for {len(missing)} image(s): "
                + ", ".join(missing))
        if model_cfg.region_dim is None:
            model_cfg = dataclasses.replace(
                model_cfg, region_dim=store.region_dim)
        elif model_cfg.region_dim != store.region_dim:
            raise PreflightError(
                f"config region_dim {model_cfg.region_dim} does not match "
                f"feature store region width {store.region_dim}")

    l2norm = config.l2_normalize_regions
    if l2norm is None:
        l2norm = bool(store is not None and store.kind == "roi")

    vocabulary = build_vocabulary(train_examples)
    embedding_event = None
    if config.embeddings:
        table, emb_report = load_embeddings(
            config.embeddings, set(vocabulary), dim=model_cfg.embed_dim,
            seed=model_cfg.seed + 1)
        embedding_event = {"event": "embeddings",
                           "vocab_size": emb_report.vocab_size,
                           "found": emb_report.found,
                           "coverage": emb_report.coverage}
    else:
        table = EmbeddingTable.random_init(
            vocabulary, dim=model_cfg.embed_dim, seed=model_cfg.seed + 1)

    model = VEModel(model_cfg, table)
    params = model.parameters()
    hyper = AdamHyper(learning_rate=config.learning_rate,
                      weight_decay=config.weight_decay,
                      decay_mode=config.decay_mode)
    state = AdamState(params)

    resolved = dataclasses.replace(config, model=model_cfg)
    history: List[dict] = [{"event": "config", "config": resolved.to_dict()}]
    if embedding_event:
        history.append(embedding_event)

    hypothesis_only = model_cfg.variant is Variant.HYPOTHESIS_ONLY
    n = len(train_examples)
    best_state = model.state()
    best_epoch = 0
    best_val: Optional[float] = None
    since_improved = 0
    epochs_run = 0

    def finish() -> TrainResult:
        history.append({"event": "done", "epochs_run": epochs_run,
                        "best_epoch": best_epoch,
                        "best_val_accuracy": best_val})
        model.load_state(best_state)
        if config.log:
            with open(config.log, "w", encoding="utf-8") as fh:
                for event in history:
                    fh.write(json.dumps(event, sort_keys=True) + "\n")
        if config.checkpoint:
            save_checkpoint(model, config.checkpoint)
        return TrainResult(model=model, history=history,
                           best_epoch=best_epoch, best_val_accuracy=best_val,
                           epochs_run=epochs_run)

    for epoch in range(1, config.epochs + 1):
        order = np.random.default_rng(config.seed + epoch).permutation(n)
        loss_sum = 0.0
        correct = 0
        for batch_index, batch in enumerate(_batches(order,
                                                     config.batch_size)):
            model.zero_grad()
            with ComputationRecord() as record:
                losses = []
                for idx in batch:
                    ex = train_examples[int(idx)]
                    regions = (None if hypothesis_only else
                               _regions_for(store, ex.image_id, l2norm))
                    logits = model.forward(model.embedding.lookup(
                        ex.hypothesis), regions)
                    if int(np.argmax(logits.data)) == int(ex.label):
                        correct += 1
                    losses.append(ops.reshape(
                        cross_entropy(logits, int(ex.label)), (1,)))
                batch_loss = ops.reduce_mean(ops.concat(losses, axis=0))
                loss_value = float(batch_loss.data[0])
                if not np.isfinite(loss_value):
                    dump = _diagnostic_dump(model, epoch, batch_index,
                                            loss_value)
                    history.append(dump)
                    if config.log:
                        with open(config.log, "w", encoding="utf-8") as fh:
                            for event in history:
                                fh.write(json.dumps(event, sort_keys=True)
                                         + "\n")
                    raise TrainAborted(
                        f"non-finite loss {loss_value} at epoch {epoch} "
                        f"batch {batch_index}; diagnostic dump: "
                        + json.dumps(dump, sort_keys=True))
                backward(batch_loss, record)
            adam_step(params, state, hyper)
            loss_sum += loss_value * len(batch)
        epochs_run = epoch
        train_loss = loss_sum / n
        train_acc = correct / n

        val_acc = None
        if val_examples:
            report = evaluate(model, val_examples, store, l2norm, split="val")
            val_acc = report.overall_accuracy
        history.append({"event": "epoch", "epoch": epoch,
                        "train_loss": train_loss,
                        "train_accuracy": train_acc,
                        "val_accuracy": val_acc,
                        "learning_rate": hyper.learning_rate})

        if val_acc is not None:
            if best_val is None or val_acc > best_val:
                best_val = val_acc
                best_epoch = epoch
                best_state = model.state()
                since_improved = 0
            else:
                since_improved += 1
                if (config.plateau_halving
                        and since_improved >= config.plateau_patience):
                    hyper.learning_rate *= 0.5
                    since_improved = 0
                    history.append({"event": "lr_halved", "epoch": epoch,
                                    "learning_rate": hyper.learning_rate})
        else:
            best_epoch = epoch
            best_state = model.state()

        if (config.early_stop_train_accuracy is not None
                and train_acc >= config.early_stop_train_accuracy):
            history.append({"event": "early_stop", "epoch": epoch,
                            "train_accuracy": train_acc})
            break

    return finish()
