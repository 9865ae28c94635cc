"""Feature shapes (grid / ROI) and the image_id -> regions lookup."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional

import numpy as np

from ..errors import (
    ContractError,
    DimensionError,
    FormatError,
    NumericError,
    ValidationError,
)
from .veft import read_veft, write_veft

MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT = "visent-features"
MANIFEST_VERSION = 1
DEFAULT_ROI_CAP = 10


def _check_finite(name: str, arr: np.ndarray) -> None:
    if arr.size and not np.isfinite(arr).all():
        raise NumericError(f"{name} contains non-finite values")


@dataclass(frozen=True)
class FeatureGrid:
    """k feature maps of spatial side d; one region per pixel position."""

    k: int
    d: int
    data: np.ndarray

    def __post_init__(self):
        if self.k < 1 or self.d < 1:
            raise ContractError(f"k and d must be >= 1, got k={self.k}, d={self.d}")
        data = np.asarray(self.data, dtype=np.float32)
        if data.shape != (self.k, self.d, self.d):
            raise DimensionError(
                f"grid data must have shape ({self.k}, {self.d}, {self.d}), "
                f"got {data.shape}")
        _check_finite("grid data", data)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, data: np.ndarray) -> "FeatureGrid":
        data = np.asarray(data, dtype=np.float32)
        if data.ndim != 3 or data.shape[1] != data.shape[2]:
            raise DimensionError(
                f"grid array must have shape (k, d, d), got {data.shape}")
        return cls(k=data.shape[0], d=data.shape[1], data=data)


@dataclass(frozen=True)
class ROISet:
    """Up to `cap` region-of-interest feature vectors, optional boxes."""

    n: int
    dim: int
    data: np.ndarray
    boxes: Optional[np.ndarray] = None
    cap: int = DEFAULT_ROI_CAP

    def __post_init__(self):
        if not 1 <= self.n <= self.cap:
            raise ContractError(
                f"region count must be in [1, {self.cap}], got {self.n}")
        data = np.asarray(self.data, dtype=np.float32)
        if data.shape != (self.n, self.dim):
            raise DimensionError(
                f"ROI data must have shape ({self.n}, {self.dim}), "
                f"got {data.shape}")
        _check_finite("ROI data", data)
        object.__setattr__(self, "data", data)
        if self.boxes is not None:
            boxes = np.asarray(self.boxes, dtype=np.float32)
            if boxes.shape != (self.n, 4):
                raise DimensionError(
                    f"boxes must have shape ({self.n}, 4), got {boxes.shape}")
            _check_finite("ROI boxes", boxes)
            object.__setattr__(self, "boxes", boxes)

    @classmethod
    def from_array(cls, data: np.ndarray, boxes=None,
                   cap: int = DEFAULT_ROI_CAP) -> "ROISet":
        data = np.asarray(data, dtype=np.float32)
        if data.ndim != 2:
            raise DimensionError(
                f"ROI array must have shape (n, dim), got {data.shape}")
        return cls(n=data.shape[0], dim=data.shape[1], data=data,
                   boxes=boxes, cap=cap)


def flatten_grid(grid: FeatureGrid) -> np.ndarray:
    """Grid pixels as region rows: (row, col) -> output row row*d + col."""
    return np.ascontiguousarray(
        grid.data.transpose(1, 2, 0).reshape(grid.d * grid.d, grid.k))


def regroup_grid(flat: np.ndarray, k: int, d: int) -> FeatureGrid:
    """Inverse of flatten_grid."""
    flat = np.asarray(flat, dtype=np.float32)
    if flat.shape != (d * d, k):
        raise DimensionError(
            f"flat regions must have shape ({d * d}, {k}), got {flat.shape}")
    return FeatureGrid(k=k, d=d,
                       data=np.ascontiguousarray(
                           flat.reshape(d, d, k).transpose(2, 0, 1)))


def l2_normalize(regions: np.ndarray) -> np.ndarray:
    """Scale each nonzero row to unit Euclidean norm; zero rows pass through."""
    regions = np.asarray(regions, dtype=np.float32)
    norms = np.linalg.norm(regions, axis=-1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return (regions / safe).astype(np.float32)


class FeatureStore:
    """image_id -> region matrix under a declared kind and shape contract.

    kind "grid": every entry is a FeatureGrid(k, d); lookups return the
    flattened d^2 x k region matrix. kind "roi": entries are ROISet rows,
    returned as-is (n may vary per image, capped by roi_cap).
    """

    def __init__(self, kind: str, *, k: Optional[int] = None,
                 d: Optional[int] = None, dim: Optional[int] = None,
                 roi_cap: int = DEFAULT_ROI_CAP):
        if kind not in ("grid", "roi"):
            raise ContractError(f"kind must be 'grid' or 'roi', got {kind!r}")
        if kind == "grid" and (not k or not d or k < 1 or d < 1):
            raise ContractError("grid stores declare positive k and d")
        if kind == "roi" and (not dim or dim < 1):
            raise ContractError("roi stores declare a positive dim")
        self.kind = kind
        self.k = k
        self.d = d
        self.dim = dim
        self.roi_cap = roi_cap
        self._arrays: Dict[str, np.ndarray] = {}
        self._files: Dict[str, str] = {}
        self._directory: Optional[str] = None

    # -- construction ------------------------------------------------------

    @classmethod
    def in_memory(cls, kind: str, entries: Dict[str, np.ndarray],
                  **contract) -> "FeatureStore":
        store = cls(kind, **contract)
        for image_id, arr in entries.items():
            store.put(image_id, arr)
        return store

    def put(self, image_id: str, arr: np.ndarray) -> None:
        self._arrays[image_id] = self._validated(image_id, arr)

    def _validated(self, image_id: str, arr: np.ndarray) -> np.ndarray:
        arr = np.asarray(arr, dtype=np.float32)
        if self.kind == "grid":
            grid = FeatureGrid.from_array(arr)
            if (grid.k, grid.d) != (self.k, self.d):
                raise DimensionError(
                    f"{image_id}: grid shape {arr.shape} violates the declared "
                    f"contract k={self.k}, d={self.d}")
        else:
            rois = ROISet.from_array(arr, cap=self.roi_cap)
            if rois.dim != self.dim:
                raise DimensionError(
                    f"{image_id}: ROI width {rois.dim} violates the declared "
                    f"contract dim={self.dim}")
        return arr

    # -- persistence -------------------------------------------------------

    def save(self, directory) -> None:
        """One VEFT file per image plus a manifest.json index."""
        os.makedirs(directory, exist_ok=True)
        files = {}
        for image_id in sorted(self._arrays):
            stem = image_id.rsplit(".", 1)[0]
            fname = f"{stem}.veft"
            tensor_name = "grid" if self.kind == "grid" else "rois"
            write_veft({tensor_name: self._arrays[image_id]},
                       os.path.join(directory, fname))
            files[image_id] = fname
        manifest = {
            "format": MANIFEST_FORMAT,
            "version": MANIFEST_VERSION,
            "kind": self.kind,
            "files": files,
        }
        if self.kind == "grid":
            manifest["k"] = self.k
            manifest["d"] = self.d
        else:
            manifest["dim"] = self.dim
            manifest["roi_cap"] = self.roi_cap
        with open(os.path.join(directory, MANIFEST_NAME), "w",
                  encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def open(cls, directory) -> "FeatureStore":
        manifest_path = os.path.join(directory, MANIFEST_NAME)
        if not os.path.exists(manifest_path):
            raise FormatError(f"no {MANIFEST_NAME} in {directory}")
        with open(manifest_path, "r", encoding="utf-8") as fh:
            try:
                manifest = json.load(fh)
            except ValueError as exc:
                raise FormatError(f"{manifest_path}: {exc}") from None
        if manifest.get("format") != MANIFEST_FORMAT:
            raise FormatError(
                f"{manifest_path}: unknown format {manifest.get('format')!r}")
        if manifest.get("version") != MANIFEST_VERSION:
            raise FormatError(
                f"{manifest_path}: unsupported version "
                f"{manifest.get('version')!r}")
        kind = manifest.get("kind")
        if kind == "grid":
            store = cls("grid", k=manifest.get("k"), d=manifest.get("d"))
        elif kind == "roi":
            store = cls("roi", dim=manifest.get("dim"),
                        roi_cap=manifest.get("roi_cap", DEFAULT_ROI_CAP))
        else:
            raise FormatError(f"{manifest_path}: unknown kind {kind!r}")
        files = manifest.get("files")
        if not isinstance(files, dict):
            raise FormatError(f"{manifest_path}: 'files' must be an object")
        store._files = {str(k): str(v) for k, v in files.items()}
        store._directory = directory
        return store

    # -- lookup ------------------------------------------------------------

    def image_ids(self) -> List[str]:
        return sorted(set(self._arrays) | set(self._files))

    def __contains__(self, image_id: str) -> bool:
        return image_id in self._arrays or image_id in self._files

    def _raw(self, image_id: str) -> np.ndarray:
        if image_id in self._arrays:
            return self._arrays[image_id]
        if image_id in self._files:
            path = os.path.join(self._directory or ".", self._files[image_id])
            tensors = read_veft(path)
            tensor_name = "grid" if self.kind == "grid" else "rois"
            if tensor_name not in tensors:
                raise FormatError(
                    f"{path}: missing tensor {tensor_name!r} "
                    f"(has {list(tensors)})")
            arr = self._validated(image_id, tensors[tensor_name])
            self._arrays[image_id] = arr
            return arr
        raise ValidationError(f"no features stored for image {image_id!r}")

    def regions_for(self, image_id: str) -> np.ndarray:
        """The N x D region matrix the models consume."""
        arr = self._raw(image_id)
        if self.kind == "grid":
            return flatten_grid(FeatureGrid.from_array(arr))
        return arr

    @property
    def region_dim(self) -> int:
        return self.k if self.kind == "grid" else self.dim

    def missing(self, image_ids: Iterable[str]) -> List[str]:
        """Image ids with no stored features, sorted, deduplicated."""
        return sorted({i for i in image_ids if i not in self})

    def validate(self, image_ids: Optional[Iterable[str]] = None) -> List[str]:
        """Load every entry and check the contract; returns issue strings."""
        issues: List[str] = []
        targets = list(image_ids) if image_ids is not None else self.image_ids()
        for image_id in targets:
            try:
                self.regions_for(image_id)
            except (ValidationError, NumericError) as exc:
                issues.append(f"{image_id}: {exc}")
        return issues
