"""Checkpoint files: one UTF-8 JSON header line, then a VEFT container.

The header carries the model config, the ordered tensor name table, and
the vocabulary (tokens in embedding-row order) so a model can be rebuilt
without any side files. The binary body holds every named parameter.
"""

from __future__ import annotations

import json
import os
from typing import Tuple

from ..errors import CorruptionError, FormatError
from ..features.veft import veft_dumps, veft_loads
from ..layers import EmbeddingTable
from ..models import ModelConfig, VEModel

CHECKPOINT_FORMAT = "visent-checkpoint"
CHECKPOINT_VERSION = 1


def _vocabulary_rows(table: EmbeddingTable) -> list:
    return [tok for tok, _ in sorted(table.vocabulary.items(),
                                     key=lambda kv: kv[1])]


def checkpoint_bytes(model: VEModel) -> bytes:
    state = model.state()
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model": model.config.to_dict(),
        "names": list(state.keys()),
        "vocabulary": _vocabulary_rows(model.embedding),
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n"
    return head + veft_dumps(state)


def save_checkpoint(model: VEModel, path) -> None:
    blob = checkpoint_bytes(model)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint_bytes(blob: bytes) -> Tuple[VEModel, dict]:
    newline = blob.find(b"\n")
    if newline < 0:
        raise CorruptionError(
            "checkpoint has no header line terminator; file is truncated")
    try:
        header = json.loads(blob[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"checkpoint header is not valid JSON: {exc}")
    if not isinstance(header, dict) or header.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(
            f"not a {CHECKPOINT_FORMAT} file: format field is "
            f"{header.get('format')!r}" if isinstance(header, dict)
            else "checkpoint header must be a JSON object")
    if header.get("version") != CHECKPOINT_VERSION:
        raise FormatError(
            f"unsupported checkpoint version {header.get('version')!r}")
    for key in ("model", "names", "vocabulary"):
        if key not in header:
            raise FormatError(f"checkpoint header is missing {key!r}")

    tensors = veft_loads(blob[newline + 1:])
    names = header["names"]
    if sorted(tensors.keys()) != sorted(names):
        missing = sorted(set(names) - set(tensors))
        extra = sorted(set(tensors) - set(names))
        raise FormatError(
            "checkpoint name table does not match stored tensors "
            f"(missing {missing}, unexpected {extra})")

    config = ModelConfig.from_dict(header["model"])
    if "embedding.vectors" not in tensors:
        raise FormatError("checkpoint is missing the embedding.vectors tensor")
    table = EmbeddingTable(header["vocabulary"], tensors["embedding.vectors"])
    model = VEModel(config, table)
    model.load_state(tensors)
    return model, header


def load_checkpoint(path) -> Tuple[VEModel, dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    return load_checkpoint_bytes(blob)
