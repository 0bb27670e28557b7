"""Ingestion of embeddings, precomputed similarities, and cohort manifests.

File formats (all UTF-8, LF line endings):

* embeddings: newline-delimited JSON records
  ``{"id": str, "kind": "image"|"query", "dim": int, "vec": [float...]}``
* similarities: newline-delimited ``{"image_id": str, "sims": {query_id: float}}``
* cohort manifest: two CSV files, ``users.csv`` with header ``user_id,label``
  and ``images.csv`` with header ``image_id,user_id``.

Vectors are L2-normalized at ingestion (zero vectors are rejected, never
repaired); floats are written with ``repr`` so round-trips are bit-exact for
finite doubles. All loaders are deterministic and order-preserving.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .schema import TaskSchema

__all__ = [
    "DataFormatError",
    "EmbeddingRecord",
    "SimilarityMatrix",
    "CohortUser",
    "CohortManifest",
    "load_embeddings",
    "write_embeddings",
    "cosine_similarities",
    "load_similarities",
    "write_similarities",
    "load_cohort",
    "write_cohort",
    "filter_min_images",
]

# Vectors whose norm is already this close to 1 are kept bit-exact, which
# makes ingestion idempotent: normalize(normalize(v)) == normalize(v).
_UNIT_TOL = 1e-12


class DataFormatError(ValueError):
    """Malformed or inconsistent input data; message carries the location."""


@dataclass(frozen=True)
class EmbeddingRecord:
    id: str
    kind: str  # "image" or "query"
    dim: int
    vec: np.ndarray  # unit-norm float64, length dim

    def __post_init__(self) -> None:
        object.__setattr__(self, "vec", np.asarray(self.vec, dtype=np.float64))


@dataclass
class SimilarityMatrix:
    """Raw (pre-softmax) similarity logits, images x queries."""

    image_ids: list[str]
    query_ids: list[str]
    sims: np.ndarray

    def __post_init__(self) -> None:
        self.sims = np.asarray(self.sims, dtype=np.float64)
        if self.sims.shape != (len(self.image_ids), len(self.query_ids)):
            raise DataFormatError(
                f"similarity matrix shape {self.sims.shape} does not match "
                f"{len(self.image_ids)} images x {len(self.query_ids)} queries"
            )

    def row(self, image_id: str) -> np.ndarray:
        return self.sims[self.image_ids.index(image_id)]


@dataclass(frozen=True)
class CohortUser:
    user_id: str
    label: int  # 1 = high risk
    image_ids: tuple[str, ...]


@dataclass(frozen=True)
class CohortManifest:
    users: tuple[CohortUser, ...]
    provenance: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        seen_users: set[str] = set()
        seen_images: set[str] = set()
        for user in self.users:
            if user.user_id in seen_users:
                raise DataFormatError(f"duplicate user id {user.user_id!r}")
            seen_users.add(user.user_id)
            if user.label not in (0, 1):
                raise DataFormatError(
                    f"user {user.user_id!r}: label must be 0 or 1, got {user.label!r}"
                )
            for img in user.image_ids:
                if img in seen_images:
                    raise DataFormatError(
                        f"image {img!r} assigned to more than one user"
                    )
                seen_images.add(img)

    @property
    def n_images(self) -> int:
        return sum(len(u.image_ids) for u in self.users)

    def image_counts(self) -> list[int]:
        return [len(u.image_ids) for u in self.users]


def _normalize(vec: np.ndarray, where: str) -> np.ndarray:
    if not np.all(np.isfinite(vec)):
        raise DataFormatError(f"{where}: non-finite vector entry")
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise DataFormatError(f"{where}: zero vector cannot be normalized")
    if abs(norm - 1.0) <= _UNIT_TOL:
        return vec
    return vec / norm


def load_embeddings(path) -> list[EmbeddingRecord]:
    """Load newline-delimited embedding records, L2-normalizing each vector.

    Fatal (with the record's line number): dimension mismatch across
    records, zero vectors, NaN entries, duplicate ids, malformed lines.
    """
    records: list[EmbeddingRecord] = []
    seen: set[str] = set()
    expected_dim: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{where}: malformed JSON ({exc})") from exc
            try:
                rid, kind, dim, vec = obj["id"], obj["kind"], obj["dim"], obj["vec"]
            except (KeyError, TypeError) as exc:
                raise DataFormatError(f"{where}: missing field {exc}") from exc
            if kind not in ("image", "query"):
                raise DataFormatError(f"{where}: kind must be image|query, got {kind!r}")
            if not isinstance(dim, int) or dim <= 0:
                raise DataFormatError(f"{where}: dim must be a positive integer")
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (dim,):
                raise DataFormatError(
                    f"{where}: vec has length {arr.shape}, declared dim {dim}"
                )
            if expected_dim is None:
                expected_dim = dim
            elif dim != expected_dim:
                raise DataFormatError(
                    f"{where}: dim {dim} differs from first record's dim {expected_dim}"
                )
            if rid in seen:
                raise DataFormatError(f"{where}: duplicate record id {rid!r}")
            seen.add(rid)
            records.append(
                EmbeddingRecord(id=rid, kind=kind, dim=dim, vec=_normalize(arr, where))
            )
    if not records:
        raise DataFormatError(f"{path}: no embedding records found")
    return records


def write_embeddings(path, records: Iterable[EmbeddingRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            obj = {
                "id": rec.id,
                "kind": rec.kind,
                "dim": rec.dim,
                "vec": [float(x) for x in rec.vec],
            }
            fh.write(json.dumps(obj) + "\n")


def cosine_similarities(
    images: Sequence[EmbeddingRecord], queries: Sequence[EmbeddingRecord]
) -> SimilarityMatrix:
    """Dot products of unit vectors; results clipped into [-1, 1]."""
    if not images or not queries:
        raise DataFormatError("cosine_similarities requires non-empty inputs")
    dims = {r.dim for r in images} | {r.dim for r in queries}
    if len(dims) != 1:
        raise DataFormatError(f"mixed embedding dimensions: {sorted(dims)}")
    img_mat = np.stack([r.vec for r in images])
    qry_mat = np.stack([r.vec for r in queries])
    sims = np.clip(img_mat @ qry_mat.T, -1.0, 1.0)
    return SimilarityMatrix(
        image_ids=[r.id for r in images],
        query_ids=[r.id for r in queries],
        sims=sims,
    )


def load_similarities(path, schema: TaskSchema) -> SimilarityMatrix:
    """Load precomputed similarity logits, assembled in schema column order.

    Every image row must provide a value for every schema query; missing or
    unknown query ids are fatal and name the offending image and query.
    """
    query_ids = list(schema.query_ids)
    image_ids: list[str] = []
    rows: list[list[float]] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
                image_id, sims = obj["image_id"], obj["sims"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataFormatError(f"{where}: malformed row ({exc})") from exc
            if not isinstance(sims, dict):
                raise DataFormatError(f"{where}: sims must be an object")
            if image_id in seen:
                raise DataFormatError(f"{where}: duplicate image id {image_id!r}")
            seen.add(image_id)
            unknown = set(sims) - set(query_ids)
            if unknown:
                raise DataFormatError(
                    f"{where}: image {image_id!r} has unknown query id(s) "
                    f"{sorted(unknown)}"
                )
            row = []
            for qid in query_ids:
                if qid not in sims:
                    raise DataFormatError(
                        f"{where}: image {image_id!r} is missing query {qid!r}"
                    )
                row.append(float(sims[qid]))
            image_ids.append(image_id)
            rows.append(row)
    if not image_ids:
        raise DataFormatError(f"{path}: no similarity rows found")
    return SimilarityMatrix(image_ids=image_ids, query_ids=query_ids,
                            sims=np.array(rows, dtype=np.float64))


def write_similarities(path, matrix: SimilarityMatrix) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, image_id in enumerate(matrix.image_ids):
            sims = {
                qid: float(matrix.sims[i, j])
                for j, qid in enumerate(matrix.query_ids)
            }
            fh.write(json.dumps({"image_id": image_id, "sims": sims}) + "\n")


def load_cohort(users_csv, images_csv) -> CohortManifest:
    """Assemble a cohort manifest from the two-CSV representation."""
    labels: dict[str, int] = {}
    order: list[str] = []
    with open(users_csv, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["user_id", "label"]:
            raise DataFormatError(
                f"{users_csv}: expected header user_id,label, got {reader.fieldnames}"
            )
        for lineno, row in enumerate(reader, start=2):
            uid = row["user_id"]
            if uid in labels:
                raise DataFormatError(f"{users_csv}:{lineno}: duplicate user {uid!r}")
            try:
                label = int(row["label"])
            except (TypeError, ValueError):
                raise DataFormatError(
                    f"{users_csv}:{lineno}: label must be 0 or 1, got {row['label']!r}"
                ) from None
            labels[uid] = label
            order.append(uid)
    images: dict[str, list[str]] = {uid: [] for uid in order}
    with open(images_csv, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["image_id", "user_id"]:
            raise DataFormatError(
                f"{images_csv}: expected header image_id,user_id, got {reader.fieldnames}"
            )
        for lineno, row in enumerate(reader, start=2):
            uid = row["user_id"]
            if uid not in images:
                raise DataFormatError(
                    f"{images_csv}:{lineno}: image {row['image_id']!r} references "
                    f"unknown user {uid!r}"
                )
            images[uid].append(row["image_id"])
    users = tuple(
        CohortUser(user_id=uid, label=labels[uid], image_ids=tuple(images[uid]))
        for uid in order
    )
    return CohortManifest(users=users, provenance=(f"loaded from {users_csv}",))


def write_cohort(users_csv, images_csv, manifest: CohortManifest) -> None:
    with open(users_csv, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "label"])
        for user in manifest.users:
            writer.writerow([user.user_id, user.label])
    with open(images_csv, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "user_id"])
        for user in manifest.users:
            for img in user.image_ids:
                writer.writerow([img, user.user_id])


def filter_min_images(
    manifest: CohortManifest, threshold: int | str
) -> CohortManifest:
    """Retain users with at least ``threshold`` images, preserving order.

    ``threshold`` may be the string ``"median"``, which resolves to the
    lower median of the image counts over the input users before filtering
    (so re-applying the resolved integer threshold is a no-op).
    """
    if threshold == "median":
        counts = sorted(manifest.image_counts())
        if not counts:
            raise DataFormatError("cannot take the median of an empty cohort")
        resolved = counts[(len(counts) - 1) // 2]
        note = f"min-images filter: threshold={resolved} (median)"
    else:
        if not isinstance(threshold, int) or isinstance(threshold, bool) or threshold < 1:
            raise DataFormatError(
                f"threshold must be a positive integer or 'median', got {threshold!r}"
            )
        resolved = threshold
        note = f"min-images filter: threshold={resolved}"
    kept = tuple(u for u in manifest.users if len(u.image_ids) >= resolved)
    if not kept:
        raise DataFormatError(
            f"min-images filter at threshold {resolved} removed all "
            f"{len(manifest.users)} users"
        )
    return replace(manifest, users=kept, provenance=manifest.provenance + (note,))
