"""Deterministic synthetic cohorts with planted group differences.

Two generation levels share one ``CohortSpec``:

* ``user_vectors`` draws each per-user feature from its group's Gaussian,
  clips to [0, 1], and closes 2-query-task pairs of unconditional clusters
  so they sum to exactly 1 (when only one query of such a pair carries
  moments, the other is its exact complement; when both carry moments, the
  drawn pair is renormalized).
* ``image_logits`` draws per-image task probabilities from a Dirichlet
  centered on the group's task means and emits their logs as similarity
  logits, plus the matching cohort manifest, so synthetic runs exercise the
  real ingestion and extraction path.

Cross-feature correlation: truly independent features at the canonical
planted marginals would separate the groups far more strongly than any
single feature does, which is unrealistic for co-measured image statistics.
``latent_rho`` mixes a shared per-user factor into every feature that
carries a group effect (sign-aligned with the effect direction); marginal
means and SDs are unchanged, only the joint distribution tightens.

One generator stream drives the whole cohort: positive users first, then
negative, features in schema order, so cohorts are bit-reproducible from
the seed alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .embed_io import CohortManifest, CohortUser, SimilarityMatrix
from .features import UserVector
from .schema import TaskSchema, default_schema

__all__ = [
    "FeatureEffect",
    "CohortSpec",
    "ImageCohort",
    "generate_cohort",
    "table4_preset",
    "zero_effect_preset",
    "TABLE4_EFFECTS",
]


@dataclass(frozen=True)
class FeatureEffect:
    """Group-wise Gaussian moments for one feature."""

    mean_pos: float
    sd_pos: float
    mean_neg: float
    sd_neg: float

    def __post_init__(self) -> None:
        for name in ("mean_pos", "mean_neg"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        for name in ("sd_pos", "sd_neg"):
            v = getattr(self, name)
            if v < 0.0:
                raise ValueError(f"{name} must be >= 0, got {v}")

    @property
    def has_effect(self) -> bool:
        return self.mean_pos != self.mean_neg

    @property
    def sign(self) -> float:
        return math.copysign(1.0, self.mean_pos - self.mean_neg)


@dataclass(frozen=True)
class CohortSpec:
    n_pos: int
    n_neg: int
    features: Mapping[str, FeatureEffect]
    seed: int
    level: str = "user_vectors"  # or "image_logits"
    images_per_user: tuple[int, int] = (20, 60)
    latent_rho: float = 0.0
    concentration: float = 50.0  # Dirichlet sharpness at image level

    def __post_init__(self) -> None:
        if self.n_pos < 2 or self.n_neg < 2:
            raise ValueError("need at least 2 users per group")
        if self.level not in ("user_vectors", "image_logits"):
            raise ValueError(f"unknown level {self.level!r}")
        lo, hi = self.images_per_user
        if lo < 1 or hi < lo:
            raise ValueError(f"bad images_per_user range {self.images_per_user}")
        if not 0.0 <= self.latent_rho < 1.0:
            raise ValueError(f"latent_rho must be in [0, 1), got {self.latent_rho}")
        if self.concentration <= 0:
            raise ValueError("concentration must be positive")


@dataclass(eq=False)
class ImageCohort:
    similarities: SimilarityMatrix
    manifest: CohortManifest


def _pair_partners(schema: TaskSchema) -> dict[str, str]:
    """query id -> its partner's id, for 2-query tasks of unconditional clusters."""
    partners: dict[str, str] = {}
    for slot in schema.slots():
        if not slot.routed and slot.task.n_queries == 2:
            a, b = slot.task.queries
            partners[a.id] = b.id
            partners[b.id] = a.id
    return partners


def _check_coverage(spec: CohortSpec, schema: TaskSchema) -> None:
    partners = _pair_partners(schema)
    unknown = set(spec.features) - set(schema.query_ids)
    if unknown:
        raise ValueError(f"spec features not in schema: {sorted(unknown)}")
    for qid in schema.query_ids:
        if qid in spec.features:
            continue
        partner = partners.get(qid)
        if partner is not None and partner in spec.features:
            continue  # derivable as the exact complement
        raise ValueError(
            f"no moments for feature {qid!r} (and it is not the complement of a "
            "specified unconditional 2-query feature)"
        )


def _user_ids(spec: CohortSpec) -> list[tuple[str, int]]:
    return [(f"pos{i + 1:04d}", 1) for i in range(spec.n_pos)] + [
        (f"neg{i + 1:04d}", 0) for i in range(spec.n_neg)
    ]


def _draw_user_vector(
    rng: np.random.Generator,
    spec: CohortSpec,
    schema: TaskSchema,
    label: int,
) -> np.ndarray:
    qids = schema.query_ids
    latent = float(rng.standard_normal())
    eps = rng.standard_normal(len(qids))
    values = np.full(len(qids), np.nan)
    for j, qid in enumerate(qids):
        eff = spec.features.get(qid)
        if eff is None:
            continue
        mean = eff.mean_pos if label == 1 else eff.mean_neg
        sd = eff.sd_pos if label == 1 else eff.sd_neg
        rho = spec.latent_rho if eff.has_effect else 0.0
        z = rho * eff.sign * latent + math.sqrt(1.0 - rho * rho) * eps[j]
        values[j] = min(max(mean + sd * z, 0.0), 1.0)

    # Close unconditional 2-query pairs so they sum to exactly 1.
    for slot in schema.slots():
        if slot.routed or slot.task.n_queries != 2:
            continue
        i, j = slot.start, slot.start + 1
        vi, vj = values[i], values[j]
        if np.isnan(vi) and np.isnan(vj):
            raise AssertionError("coverage check should have caught this")
        if np.isnan(vj):
            values[j] = 1.0 - vi
        elif np.isnan(vi):
            values[i] = 1.0 - vj
        else:
            total = vi + vj
            values[i] = vi / total if total > 0.0 else 0.5
            values[j] = 1.0 - values[i]

    if np.any(np.isnan(values)):
        raise AssertionError("coverage check should have caught this")
    return values


def _task_base_probs(
    spec: CohortSpec, schema: TaskSchema, label: int
) -> list[np.ndarray]:
    """Per-task mean probability vectors for one group, normalized to sum 1."""
    partners = _pair_partners(schema)
    out = []
    for slot in schema.slots():
        means = []
        for q in slot.task.queries:
            eff = spec.features.get(q.id)
            if eff is None:
                partner = spec.features[partners[q.id]]  # coverage guarantees this
                mean = 1.0 - (partner.mean_pos if label == 1 else partner.mean_neg)
            else:
                mean = eff.mean_pos if label == 1 else eff.mean_neg
            means.append(max(mean, 0.0))
        base = np.asarray(means, dtype=np.float64)
        total = base.sum()
        out.append(base / total if total > 0 else np.full(len(means), 1.0 / len(means)))
    return out


def generate_cohort(
    spec: CohortSpec, schema: TaskSchema | None = None
) -> list[UserVector] | ImageCohort:
    """Generate a cohort at the spec's level; bit-identical for equal seeds."""
    schema = schema if schema is not None else default_schema()
    _check_coverage(spec, schema)
    rng = np.random.default_rng(spec.seed)

    if spec.level == "user_vectors":
        users = [
            UserVector(
                user_id=uid,
                label=label,
                n_images=1,
                mean_probs=_draw_user_vector(rng, spec, schema, label),
            )
            for uid, label in _user_ids(spec)
        ]
        return users

    # image_logits level
    base_by_label = {
        1: _task_base_probs(spec, schema, 1),
        0: _task_base_probs(spec, schema, 0),
    }
    slots = list(schema.slots())
    lo, hi = spec.images_per_user
    image_ids: list[str] = []
    rows: list[np.ndarray] = []
    cohort_users: list[CohortUser] = []
    for uid, label in _user_ids(spec):
        n_images = int(rng.integers(lo, hi + 1))
        user_images = []
        for k in range(n_images):
            row = np.empty(schema.dimension)
            for slot, base in zip(slots, base_by_label[label]):
                alpha = spec.concentration * base
                # Dirichlet needs strictly positive concentration parameters.
                alpha = np.maximum(alpha, 1e-3)
                p = rng.dirichlet(alpha)
                row[slot.start:slot.stop] = np.log(np.maximum(p, 1e-300))
            image_id = f"{uid}-img{k + 1:04d}"
            user_images.append(image_id)
            image_ids.append(image_id)
            rows.append(row)
        cohort_users.append(
            CohortUser(user_id=uid, label=label, image_ids=tuple(user_images))
        )
    matrix = SimilarityMatrix(
        image_ids=image_ids,
        query_ids=list(schema.query_ids),
        sims=np.vstack(rows),
    )
    manifest = CohortManifest(
        users=tuple(cohort_users),
        provenance=(f"synthetic image-logit cohort, seed={spec.seed}",),
    )
    return ImageCohort(similarities=matrix, manifest=manifest)


def _eff(mp: float, sp: float, mn: float, sn: float) -> FeatureEffect:
    return FeatureEffect(mean_pos=mp, sd_pos=sp, mean_neg=mn, sd_neg=sn)


# Canonical planted effects: the published group means (SDs) of the eleven
# retained report features, high-risk group first.
TABLE4_EFFECTS: dict[str, FeatureEffect] = {
    "sentiment.negative": _eff(0.42, 0.09, 0.34, 0.10),
    "brightness.dark": _eff(0.50, 0.15, 0.41, 0.18),
    "photographer_people.selfie": _eff(0.33, 0.07, 0.29, 0.08),
    "emotion_person.sad": _eff(0.47, 0.10, 0.41, 0.11),
    "development.child": _eff(0.56, 0.16, 0.49, 0.16),
    "photographer_person.selfie": _eff(0.66, 0.16, 0.58, 0.17),
    "relationship.friends": _eff(0.27, 0.09, 0.23, 0.08),
    "development.elderly": _eff(0.40, 0.12, 0.34, 0.11),
    "emotion_people.sad": _eff(0.30, 0.18, 0.41, 0.24),
    "relationship.family": _eff(0.25, 0.09, 0.29, 0.10),
    "content.people": _eff(0.25, 0.07, 0.27, 0.09),
}

# No-effect filler for the remaining queries: plausible scales, equal means.
_NEUTRAL_EFFECTS: dict[str, FeatureEffect] = {
    "content.person": _eff(0.45, 0.12, 0.45, 0.12),
    "content.animal": _eff(0.08, 0.05, 0.08, 0.05),
    "content.object": _eff(0.10, 0.06, 0.10, 0.06),
    "content.text": _eff(0.12, 0.07, 0.12, 0.07),
    "photographer_person.other": _eff(0.31, 0.16, 0.31, 0.16),
    "emotion_person.happy": _eff(0.44, 0.11, 0.44, 0.11),
    "development.adult": _eff(0.04, 0.03, 0.04, 0.03),
    "photographer_people.other": _eff(0.42, 0.08, 0.42, 0.08),
    "emotion_people.happy": _eff(0.36, 0.20, 0.36, 0.20),
    "relationship.colleagues": _eff(0.05, 0.04, 0.05, 0.04),
    "relationship.couple": _eff(0.08, 0.06, 0.08, 0.06),
}


def table4_preset(
    seed: int,
    n_pos: int = 92,
    n_neg: int = 749,
    level: str = "user_vectors",
    latent_rho: float = 0.5,
    images_per_user: tuple[int, int] = (20, 60),
) -> CohortSpec:
    """Cohort spec planting the canonical published group moments.

    The complements of the unconditional 2-query features (brightness and
    sentiment) are intentionally absent: they are derived as exact
    complements, which preserves the planted marginals bit-for-bit.
    """
    return CohortSpec(
        n_pos=n_pos,
        n_neg=n_neg,
        features={**TABLE4_EFFECTS, **_NEUTRAL_EFFECTS},
        seed=seed,
        level=level,
        latent_rho=latent_rho,
        images_per_user=images_per_user,
    )


def zero_effect_preset(
    seed: int,
    n_pos: int = 92,
    n_neg: int = 749,
    level: str = "user_vectors",
    images_per_user: tuple[int, int] = (20, 60),
) -> CohortSpec:
    """Same marginal scales as the canonical preset, but no group effect."""
    nulled = {
        qid: FeatureEffect(
            mean_pos=eff.mean_neg, sd_pos=eff.sd_neg,
            mean_neg=eff.mean_neg, sd_neg=eff.sd_neg,
        )
        for qid, eff in {**TABLE4_EFFECTS, **_NEUTRAL_EFFECTS}.items()
    }
    return CohortSpec(
        n_pos=n_pos, n_neg=n_neg, features=nulled, seed=seed, level=level,
        images_per_user=images_per_user,
    )
