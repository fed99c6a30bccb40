"""Object-centric video corpus curation and identity-consistency benchmarking."""

__version__ = "0.1.0"
