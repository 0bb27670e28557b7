"""Per-image probability features and per-user aggregation.

Raw similarity logits become interpretable features in four steps: softmax
within each task of every unconditional cluster, conditional application of
routed clusters (a routed cluster fires only when its trigger query attains
the strict argmax of the gating task), exact-zero masking of every query in
a routed cluster that did not fire, and concatenation in schema column
order. A user's vector is the plain arithmetic mean of their image vectors;
images without human content still contribute their unconditional-cluster
values and zeros elsewhere, so no image is ever dropped.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .embed_io import DataFormatError, SimilarityMatrix
from .schema import TaskSchema

__all__ = [
    "DEFAULT_TEMPERATURE",
    "ImageFeatures",
    "UserVector",
    "DesignMatrix",
    "task_softmax",
    "score_image",
    "score_similarity_matrix",
    "aggregate_user",
    "build_design_matrix",
    "write_image_features_csv",
    "write_user_vectors_csv",
    "read_user_vectors_csv",
]

# Conventional learned logit scale of contrastive vision-language models.
# Use temperature 1.0 when the input logits are ln(p) of known probabilities.
DEFAULT_TEMPERATURE = 100.0


@dataclass(frozen=True, eq=False)
class ImageFeatures:
    """One image's probability vector in schema column order.

    ``routed_cluster`` names the conditional cluster that fired for this
    image, or None. (Should a custom schema ever let several routed clusters
    fire at once, the names are joined with "+".)
    """

    image_id: str
    probs: np.ndarray
    routed_cluster: str | None


@dataclass(eq=False)
class UserVector:
    """Mean feature vector of one user's images, plus the risk label."""

    user_id: str
    label: int
    n_images: int
    mean_probs: np.ndarray


@dataclass(eq=False)
class DesignMatrix:
    X: np.ndarray
    y: np.ndarray
    column_ids: tuple[str, ...]


def task_softmax(logits: np.ndarray, temperature: float = DEFAULT_TEMPERATURE) -> np.ndarray:
    """Softmax over one task's logits: p_j = exp(t*s_j) / sum_k exp(t*s_k).

    Computed with max-subtraction so large logits cannot overflow. For
    2-query tasks the second probability is returned as the exact complement
    of the first, which keeps per-image pair sums at exactly 1.0.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    x = np.asarray(logits, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise ValueError("task_softmax expects a 1-D logits vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("task_softmax: non-finite logit")
    z = temperature * x
    z = z - z.max()
    e = np.exp(z)
    p = e / e.sum()
    if p.size == 2:
        p[1] = 1.0 - p[0]
    return p


def score_image(
    row: np.ndarray,
    schema: TaskSchema,
    temperature: float = DEFAULT_TEMPERATURE,
    image_id: str = "",
) -> ImageFeatures:
    """Score one image's similarity logits (in schema column order).

    Routing uses the strict argmax of the gating task's logits; an exact tie
    routes to no conditional cluster, leaving all its entries at 0.0.
    """
    x = np.asarray(row, dtype=np.float64)
    if x.shape != (schema.dimension,):
        raise DataFormatError(
            f"image {image_id!r}: expected {schema.dimension} logits, got {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise DataFormatError(f"image {image_id!r}: non-finite similarity logit")

    probs = np.zeros(schema.dimension, dtype=np.float64)
    for slot in schema.slots():
        if not slot.routed:
            probs[slot.start:slot.stop] = task_softmax(x[slot.start:slot.stop], temperature)

    fired: list[str] = []
    fired_indices: set[int] = set()
    for route in schema.routes:
        source = x[route.source_start:route.source_stop]
        top = source.max()
        is_strict = int(np.count_nonzero(source == top)) == 1
        if is_strict and source[route.trigger_column - route.source_start] == top:
            fired.append(route.cluster_name)
            fired_indices.add(route.cluster_index)
    for slot in schema.slots():
        if slot.routed and slot.cluster_index in fired_indices:
            probs[slot.start:slot.stop] = task_softmax(x[slot.start:slot.stop], temperature)

    return ImageFeatures(
        image_id=image_id,
        probs=probs,
        routed_cluster="+".join(fired) if fired else None,
    )


def score_similarity_matrix(
    matrix: SimilarityMatrix,
    schema: TaskSchema,
    temperature: float = DEFAULT_TEMPERATURE,
) -> list[ImageFeatures]:
    """Score every image of a similarity matrix (column order must match)."""
    if list(matrix.query_ids) != list(schema.query_ids):
        raise DataFormatError(
            "similarity matrix columns do not match schema query order"
        )
    return [
        score_image(matrix.sims[i], schema, temperature, image_id=image_id)
        for i, image_id in enumerate(matrix.image_ids)
    ]


def aggregate_user(
    features: Sequence[ImageFeatures], user_id: str, label: int
) -> UserVector:
    """Element-wise arithmetic mean of a user's image features.

    Summation runs in image-list order so the result does not depend on how
    scoring work was scheduled.
    """
    if not features:
        raise ValueError(f"user {user_id!r}: cannot aggregate an empty image list")
    dims = {f.probs.shape for f in features}
    if len(dims) != 1:
        raise ValueError(f"user {user_id!r}: mixed feature dimensions {dims}")
    stacked = np.stack([f.probs for f in features])
    return UserVector(
        user_id=user_id,
        label=int(label),
        n_images=len(features),
        mean_probs=stacked.mean(axis=0),
    )


def build_design_matrix(
    users: Sequence[UserVector], schema: TaskSchema
) -> DesignMatrix:
    """Stack user vectors into a regression design (rows copied bit-exact)."""
    if not users:
        raise ValueError("cannot build a design matrix from zero users")
    dim = schema.dimension
    for u in users:
        if u.mean_probs.shape != (dim,):
            raise ValueError(
                f"user {u.user_id!r}: vector length {u.mean_probs.shape} does not "
                f"match schema dimension {dim}"
            )
    X = np.stack([u.mean_probs for u in users])
    y = np.array([u.label for u in users], dtype=np.int64)
    return DesignMatrix(X=X, y=y, column_ids=tuple(schema.query_ids))


def _fmt(x: float) -> str:
    return repr(float(x))


def write_image_features_csv(path, features: Iterable[ImageFeatures], schema: TaskSchema) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", *schema.query_ids])
        for feat in features:
            writer.writerow([feat.image_id, *(_fmt(v) for v in feat.probs)])


def write_user_vectors_csv(path, users: Iterable[UserVector], schema: TaskSchema) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "label", "n_images", *schema.query_ids])
        for user in users:
            writer.writerow(
                [user.user_id, user.label, user.n_images,
                 *(_fmt(v) for v in user.mean_probs)]
            )


def read_user_vectors_csv(path, schema: TaskSchema | None = None) -> list[UserVector]:
    """Read a user-vector CSV; validates column ids against ``schema`` if given."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["user_id", "label", "n_images"]:
            raise DataFormatError(
                f"{path}: expected header user_id,label,n_images,<query ids>"
            )
        column_ids = header[3:]
        if schema is not None and column_ids != list(schema.query_ids):
            raise DataFormatError(
                f"{path}: column ids do not match the schema's query order"
            )
        users: list[UserVector] = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 3 + len(column_ids):
                raise DataFormatError(f"{path}:{lineno}: wrong field count")
            try:
                users.append(
                    UserVector(
                        user_id=rec[0],
                        label=int(rec[1]),
                        n_images=int(rec[2]),
                        mean_probs=np.array([float(v) for v in rec[3:]]),
                    )
                )
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
    if not users:
        raise DataFormatError(f"{path}: no user vectors found")
    return users
