"""Image-premise features: VEFT container, stores, embeddings, synthetic scenes."""

from .veft import read_veft, write_veft, veft_dumps, veft_loads
from .store import (
    FeatureGrid,
    FeatureStore,
    ROISet,
    flatten_grid,
    l2_normalize,
    regroup_grid,
)
from .embeddings import load_embeddings, EmbeddingReport
from .synth import (
    SynthConfig,
    SynthData,
    hypothesis_only_ceiling,
    scene_label,
    synth_generate,
    synth_suite,
)

__all__ = [
    "read_veft", "write_veft", "veft_dumps", "veft_loads",
    "FeatureGrid", "FeatureStore", "ROISet",
    "flatten_grid", "l2_normalize", "regroup_grid",
    "load_embeddings", "EmbeddingReport",
    "SynthConfig", "SynthData", "hypothesis_only_ceiling",
    "scene_label", "synth_generate", "synth_suite",
]
