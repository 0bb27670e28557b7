"""Export jobs: walk an image directory, encode, and write embeddings JSONL.

The output is one JSON record per line, ``{"id", "kind", "dim", "vec"}``,
with every vector L2-normalized, matching the ingestion contract of the
prediction pipeline byte for byte. Query records (``kind=query``) carry the
schema's query ids; image records are keyed by filename and emitted in
sorted-filename order so exports are reproducible. Images that cannot be
decoded are skipped and listed in a sidecar manifest next to the output.

This component never applies softmax or routing: it produces raw vectors
only, so the interpretable feature semantics live in exactly one place
(the prediction pipeline).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .backends import ClipBackend, ResnetBackend
from .schema_io import read_queries

logger = logging.getLogger("visrisk_exporter")

IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png", ".bmp", ".gif", ".webp", ".tiff"}
DEFAULT_MODEL = "openai/clip-vit-base-patch32"


class ExportError(RuntimeError):
    pass


@dataclass
class ExportJob:
    image_dir: str
    out_path: str
    schema_path: str | None = None  # required for the contrastive export
    model_id: str = DEFAULT_MODEL
    baseline: str | None = None  # e.g. "resnet50"; switches to baseline export
    baseline_weights: str | None = "DEFAULT"
    batch_size: int = 16
    device: str = "cpu"
    normalize: bool = True  # kept configurable for debugging; True in practice
    skipped: list[str] = field(default_factory=list)


def list_image_files(image_dir) -> list[Path]:
    root = Path(image_dir)
    if not root.is_dir():
        raise ExportError(f"image directory {image_dir!r} does not exist")
    files = sorted(
        p for p in root.iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not files:
        raise ExportError(f"no image files with {sorted(IMAGE_SUFFIXES)} in {image_dir!r}")
    return files


def _load_images(job: ExportJob) -> tuple[list[str], list[Image.Image]]:
    ids, images = [], []
    for path in list_image_files(job.image_dir):
        try:
            with Image.open(path) as img:
                images.append(img.convert("RGB"))
            ids.append(path.name)
        except (UnidentifiedImageError, OSError) as exc:
            logger.warning("skipping undecodable image %s: %s", path, exc)
            job.skipped.append(path.name)
    if not images:
        raise ExportError(f"no decodable images in {job.image_dir!r}")
    return ids, images


def _write_records(path, ids, kinds, matrix: np.ndarray, normalize: bool) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rid, kind, vec in zip(ids, kinds, matrix):
            v = np.asarray(vec, dtype=np.float64)
            if normalize:
                norm = float(np.linalg.norm(v))
                if norm == 0.0:
                    raise ExportError(f"record {rid!r}: model produced a zero vector")
                v = v / norm
            fh.write(json.dumps({
                "id": rid, "kind": kind, "dim": int(v.shape[0]),
                "vec": [float(x) for x in v],
            }) + "\n")


def _write_skip_manifest(job: ExportJob) -> None:
    if job.skipped:
        manifest = Path(str(job.out_path) + ".skips.json")
        manifest.write_text(json.dumps({"skipped": job.skipped}, indent=2) + "\n")
        logger.warning("%d image(s) skipped; see %s", len(job.skipped), manifest)


def export_embeddings(job: ExportJob) -> int:
    """Contrastive export: one query record per schema query, one image
    record per decodable image. Returns the number of records written."""
    if not job.schema_path:
        raise ExportError("contrastive export needs --schema (query texts to encode)")
    queries = read_queries(job.schema_path)
    backend = ClipBackend(job.model_id, device=job.device)
    image_ids, images = _load_images(job)

    text_mat = backend.encode_texts([text for _, text in queries],
                                    batch_size=max(job.batch_size, 1))
    image_mat = backend.encode_images(images, batch_size=max(job.batch_size, 1))

    ids = [qid for qid, _ in queries] + image_ids
    kinds = ["query"] * len(queries) + ["image"] * len(image_ids)
    _write_records(job.out_path, ids, kinds, np.vstack([text_mat, image_mat]),
                   job.normalize)
    _write_skip_manifest(job)
    logger.info("wrote %d query + %d image records (dim %d) to %s",
                len(queries), len(image_ids), backend.dim, job.out_path)
    return len(ids)


def export_baseline_features(job: ExportJob) -> int:
    """Baseline export: image records only, penultimate ResNet features."""
    arch = job.baseline or "resnet50"
    backend = ResnetBackend(arch, weights=job.baseline_weights, device=job.device)
    image_ids, images = _load_images(job)
    image_mat = backend.encode_images(images, batch_size=max(job.batch_size, 1))
    _write_records(job.out_path, image_ids, ["image"] * len(image_ids),
                   image_mat, job.normalize)
    _write_skip_manifest(job)
    logger.info("wrote %d image records (dim %d) to %s",
                len(image_ids), backend.dim, job.out_path)
    return len(image_ids)
