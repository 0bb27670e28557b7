"""Interpretable image-based risk prediction pipeline.

Zero-shot query schemas turn precomputed image/text embedding similarities
into per-image probability features with conditional routing; users are
represented by mean feature vectors, scored by a from-scratch logistic
regression, evaluated over repeated random splits, and analyzed with the
t-test / FDR / regression reporting layer. Synthetic-cohort tooling makes
the whole pipeline verifiable without any private data.
"""

from .schema import TaskSchema, default_schema, load_schema, parse_schema, serialize_schema

__version__ = "0.1.0"

__all__ = [
    "TaskSchema",
    "default_schema",
    "load_schema",
    "parse_schema",
    "serialize_schema",
    "__version__",
]
