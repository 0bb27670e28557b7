"""Out-of-process embedding producer for the risk-prediction pipeline."""

from .export import ExportJob, export_baseline_features, export_embeddings

__version__ = "0.1.0"

__all__ = ["ExportJob", "export_embeddings", "export_baseline_features", "__version__"]
