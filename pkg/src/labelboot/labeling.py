"""Turn probabilities or label sets into one label per observation."""
from __future__ import annotations

import enum

import numpy as np

from . import _backend
from .core import ClassProbabilities, LabelSets


class LabelerKind(enum.Enum):
    NAIVE_ARGMAX = "naive_argmax"
    WEIGHTED_SET_SAMPLER = "weighted_set_sampler"


def argmax_label(probs: ClassProbabilities) -> np.ndarray:
    """Most probable class per row (1-based); ties go to the lowest index."""
    values = probs.values if isinstance(probs, ClassProbabilities) else np.asarray(probs)
    return np.argmax(values, axis=1).astype(np.int64) + 1


def sample_labels(sets: LabelSets, u) -> np.ndarray:
    """One uniform draw per row, ``u`` in [0, 1), mapped to a set member.

    Null sets fall back to all ``K`` labels. Returns 1-based labels.
    """
    masks = np.ascontiguousarray(sets.masks, dtype=np.int64)
    u = np.ascontiguousarray(u, dtype=float)
    return _backend.sample_from_masks(masks, u, sets.k) + 1


def sample_label(sets: LabelSets, rng) -> int:
    """Draw a single label for a one-row :class:`LabelSets`."""
    gen = rng.generator() if hasattr(rng, "generator") else rng
    return int(sample_labels(sets, gen.random(len(sets)))[0])


def label_weights(sets: LabelSets) -> np.ndarray:
    """Selection probability of every label for every row (n x K)."""
    member = sets.as_bool().astype(float)
    member[member.sum(axis=1) == 0] = 1.0
    return member / member.sum(axis=1, keepdims=True)
