class ExportError(Exception):
    """Base class for exporter failures."""


class MalformedFasta(ExportError):
    """Sequence content before any '>' header, or an empty record."""


class ModelUnavailable(ExportError):
    """The model identifier could not be resolved to a usable model."""


class AlignmentError(ExportError):
    """Embedding rows do not align one-to-one with residues."""
