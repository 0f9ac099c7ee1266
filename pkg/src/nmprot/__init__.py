"""nmprot: negative-mining attention fine-tuning for protein classifiers."""

__version__ = "0.1.0"
