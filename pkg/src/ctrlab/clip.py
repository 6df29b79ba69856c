"""Gradient clipping for sparse embedding gradients, in five flavors.

The unit being clipped shrinks from variant to variant: the whole embedding
gradient (global), one field's block (fieldwise), or a single id vector
(columnwise).  The adaptive variants tie the threshold to the current weight
norm, and the column-wise adaptive one (cowclip) additionally multiplies by
the id's occurrence count in the batch, so the bound tracks the gradient of a
single occurrence:

    threshold(id) = cnt(id) * max(r * ||w[id]||, zeta)

zeta keeps the threshold off the floor for ids whose weights have decayed to
almost nothing.  Clipping never changes a gradient's direction and is the
identity on anything already under its threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .embedding import EmbeddingTable, SparseGradient

VARIANTS = ("none", "global", "fieldwise", "columnwise", "adaptive_fieldwise", "cowclip")

DEFAULT_GLOBAL_CLIP = 25.0
DEFAULT_R = 1.0
DEFAULT_ZETA = 1e-4


@dataclass(frozen=True)
class ClipConfig:
    variant: str = "none"
    value: float | None = None            # constant-threshold variants
    r: float | None = None                # adaptive variants
    zeta: float | None = None
    apply_occurrence_count: bool = True   # cowclip multiplies thresholds by cnt
    batch_scale_mode: str = "sqrt"        # constant thresholds under batch sweeps

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown clip variant {self.variant!r}")
        if self.variant in ("global", "fieldwise", "columnwise"):
            if self.value is None or self.value <= 0:
                raise ValueError(f"{self.variant} clipping needs value > 0")
        if self.variant in ("adaptive_fieldwise", "cowclip"):
            if self.r is None or self.r <= 0 or self.zeta is None or self.zeta <= 0:
                raise ValueError(f"{self.variant} clipping needs r > 0 and zeta > 0")


def clip_by_threshold(g: np.ndarray, threshold: float) -> np.ndarray:
    """g -> min(1, threshold/||g||) * g, with the zero gradient left alone."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    norm = float(np.linalg.norm(g))
    if norm <= threshold or norm == 0.0:
        return g
    return g * (threshold / norm)


def _scale_rows(grads: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(grads, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    scale = np.minimum(1.0, thresholds / safe)
    return grads * scale[:, None]


def cowclip(
    table: EmbeddingTable,
    sparse_grad: SparseGradient,
    r: float = DEFAULT_R,
    zeta: float = DEFAULT_ZETA,
    apply_occurrence_count: bool = True,
) -> SparseGradient:
    """Adaptive column-wise clipping: per-id threshold cnt * max(r*||w||, zeta)."""
    if r <= 0 or zeta <= 0:
        raise ValueError("r and zeta must be > 0")
    out = sparse_grad.copy()
    for j in range(out.n_fields):
        ids = out.ids[j]
        if not len(ids):
            continue
        w_norms = np.linalg.norm(table.weights[j][ids], axis=1)
        thresholds = np.maximum(r * w_norms, zeta)
        if apply_occurrence_count:
            thresholds = out.counts[j] * thresholds
        out.grads[j] = _scale_rows(out.grads[j], thresholds)
    return out


def clip_global(sparse_grad: SparseGradient, value: float = DEFAULT_GLOBAL_CLIP) -> SparseGradient:
    """One threshold over the concatenated norm of every embedding gradient."""
    total = math.sqrt(sum(float((g ** 2).sum()) for g in sparse_grad.grads))
    out = sparse_grad.copy()
    if total > value and total > 0:
        factor = value / total
        out.grads = [g * factor for g in out.grads]
    return out


def clip_fieldwise(
    sparse_grad: SparseGradient,
    value: float,
    s: float = 1.0,
    batch_scale_mode: str = "sqrt",
) -> SparseGradient:
    """Constant threshold per field block; swept batch sizes rescale the value."""
    effective = scale_clip_value(value, s, batch_scale_mode)
    out = sparse_grad.copy()
    for j in range(out.n_fields):
        block_norm = float(np.linalg.norm(out.grads[j]))
        if block_norm > effective and block_norm > 0:
            out.grads[j] = out.grads[j] * (effective / block_norm)
    return out


def clip_columnwise(sparse_grad: SparseGradient, value: float) -> SparseGradient:
    """Constant threshold per id vector: no counts, no weight-norm adaptivity."""
    out = sparse_grad.copy()
    for j in range(out.n_fields):
        if len(out.ids[j]):
            out.grads[j] = _scale_rows(out.grads[j], np.full(len(out.ids[j]), value))
    return out


def clip_adaptive_fieldwise(
    table: EmbeddingTable,
    sparse_grad: SparseGradient,
    r: float = DEFAULT_R,
    zeta: float = DEFAULT_ZETA,
) -> SparseGradient:
    """Per-field threshold max(r*||field weight block||, zeta) on the grad block."""
    if r <= 0 or zeta <= 0:
        raise ValueError("r and zeta must be > 0")
    out = sparse_grad.copy()
    for j in range(out.n_fields):
        threshold = max(r * float(np.linalg.norm(table.weights[j])), zeta)
        block_norm = float(np.linalg.norm(out.grads[j]))
        if block_norm > threshold and block_norm > 0:
            out.grads[j] = out.grads[j] * (threshold / block_norm)
    return out


def scale_clip_value(base_value: float, s: float, mode: str = "sqrt") -> float:
    """Constant clip thresholds grow with the batch factor: s or sqrt(s)."""
    if s <= 0:
        raise ValueError("batch factor must be > 0")
    if mode == "linear":
        return base_value * s
    if mode == "sqrt":
        return base_value * math.sqrt(s)
    raise ValueError(f"unknown batch_scale_mode {mode!r}")


def apply_clip(
    cfg: ClipConfig,
    table: EmbeddingTable,
    sparse_grad: SparseGradient,
    s: float = 1.0,
) -> SparseGradient:
    """Dispatch a ClipConfig; variant "none" returns the input untouched."""
    if cfg.variant == "none":
        return sparse_grad
    if cfg.variant == "global":
        return clip_global(sparse_grad, scale_clip_value(cfg.value, s, cfg.batch_scale_mode))
    if cfg.variant == "fieldwise":
        return clip_fieldwise(sparse_grad, cfg.value, s, cfg.batch_scale_mode)
    if cfg.variant == "columnwise":
        return clip_columnwise(sparse_grad, scale_clip_value(cfg.value, s, cfg.batch_scale_mode))
    if cfg.variant == "adaptive_fieldwise":
        return clip_adaptive_fieldwise(table, sparse_grad, cfg.r, cfg.zeta)
    return cowclip(table, sparse_grad, cfg.r, cfg.zeta, cfg.apply_occurrence_count)
