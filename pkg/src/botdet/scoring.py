"""Reconstruction-error anomaly scores for host-window records.

The score of an element is the Bernoulli cross-entropy between its
feature vector and the model's reconstruction, summed over features;
higher means more anomalous. Scoring is deterministic: the latent is the
posterior mean (no sampling) and decoding is teacher-forced. Every
sequence is evaluated independently (batch of one) so batch and
streaming paths produce bit-identical numbers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence as Seq

import numpy as np

from . import models
from .autodiff import no_grad
from .errors import DataError
from .features import FeatureRow, Sequence, trailing_sequences
from .ingest import GroundTruth
from .models import BCE_EPS, MlpVaeParams, RvaeParams
from .train import ARCH_MLP, ARCH_RVAE, TrainedModel


@dataclass(frozen=True, slots=True)
class ScoredWindow:
    src_addr: str
    window_index: int
    first_seen: float
    label: GroundTruth
    score: float


def anomaly_score(target: np.ndarray, recon: np.ndarray) -> float:
    """Feature-summed BCE with clamped probabilities; 0 only at exact binary hits."""
    y = np.asarray(target, dtype=np.float64)
    if y.min() < 0.0 or y.max() > 1.0:
        raise ValueError("anomaly_score: targets must lie in [0, 1]")
    p = np.clip(np.asarray(recon, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    return float(-np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def reconstruct_sequence(arch: str, params, vectors: np.ndarray) -> np.ndarray:
    """Deterministic reconstruction of one (L, F) sequence."""
    with no_grad():
        if arch == ARCH_RVAE:
            recons, _, _ = models.rvae_forward(params, vectors[None, :, :])
            return np.stack([r.data[0] for r in recons])
        if arch == ARCH_MLP:
            recon, _, _ = models.mlp_forward(params, vectors)
            return recon.data
    raise DataError(f"unknown architecture {arch!r}")


def score_elements(arch: str, params, vectors: np.ndarray) -> np.ndarray:
    recon = reconstruct_sequence(arch, params, vectors)
    return np.array([anomaly_score(vectors[t], recon[t])
                     for t in range(vectors.shape[0])])


def score_sequences(arch: str, params,
                    sequences: Iterable[Sequence]) -> list[ScoredWindow]:
    """One ScoredWindow per sequence element, in input order.

    For sequences built as trailing context, only elements in the target
    window are emitted so each host-window is scored exactly once.
    """
    out: list[ScoredWindow] = []
    for seq in sequences:
        scores = score_elements(arch, params, seq.vectors)
        for i in range(len(seq)):
            if seq.target_window is not None and seq.window_indices[i] != seq.target_window:
                continue
            out.append(ScoredWindow(
                src_addr=seq.src_addrs[i],
                window_index=int(seq.window_indices[i]),
                first_seen=float(seq.first_seen[i]),
                label=seq.labels[i],
                score=float(scores[i]),
            ))
    return out


def score_rows(model: TrainedModel, rows: Seq[FeatureRow],
               feature_names: tuple[str, ...]) -> list[ScoredWindow]:
    """Deployment-order scoring of host-window rows.

    Rows are scored inside the trailing N-window context ending at their
    own window, matching what the streaming path sees when the window
    closes. The feature layout must match the model's.
    """
    if tuple(feature_names) != tuple(model.feature_names):
        raise DataError(
            "feature layout mismatch between features file and model: "
            f"{list(feature_names)[:3]}... vs {list(model.feature_names)[:3]}...")
    seqs = trailing_sequences(rows, model.n_windows, model.l_max)
    return score_sequences(model.arch, model.params, seqs)
