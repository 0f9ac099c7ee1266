"""nm-export: pretrained protein LM embeddings -> NMEB binary stores."""

__version__ = "0.1.0"

from .export import ExportManifest, export_embeddings
from .errors import AlignmentError, ExportError, MalformedFasta, ModelUnavailable

__all__ = [
    "AlignmentError",
    "ExportError",
    "ExportManifest",
    "MalformedFasta",
    "ModelUnavailable",
    "export_embeddings",
]
