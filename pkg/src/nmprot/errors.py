"""Exception hierarchy shared by all nmprot modules.

The CLI maps these onto process exit codes: parse/config problems exit 2,
numerical problems exit 3, missing resources exit 4.
"""


class NmprotError(Exception):
    """Base class for every error raised by this package."""


# -- input / format problems (exit code 2) --------------------------------

class ParseError(NmprotError):
    """A text record could not be parsed."""


class EmptySequence(ParseError):
    """A sequence was empty after whitespace stripping."""


class MalformedFasta(ParseError):
    """Sequence content appeared before any FASTA header."""


class LabelOutOfRange(ParseError):
    """A class label fell outside [0, class_count)."""


class FormatError(NmprotError):
    """A binary file had bad magic, version, or a truncated payload."""


class ConfigError(NmprotError):
    """A config file contained an unknown key or a bad value."""


# -- numerical problems (exit code 3) --------------------------------------

class ShapeError(NmprotError):
    """Tensor shapes were incompatible for the requested operation."""


class DegenerateRow(NmprotError):
    """A softmax row or pooling window had no valid entries."""


class NumericalError(NmprotError):
    """A loss or intermediate value became NaN/Inf."""


# -- missing resources (exit code 4) ----------------------------------------

class NoNegativesAvailable(NmprotError):
    """No example with a different label exists to sample from."""


class MissingEmbedding(NmprotError):
    """An id was not found in the embedding store or dataset."""


class UnknownId(MissingEmbedding):
    """A sequence id could not be resolved from the dataset."""


class CheckpointNotFound(NmprotError):
    """A required model checkpoint file does not exist."""
