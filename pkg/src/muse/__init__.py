"""Functional concept graphs from product corpora, plus the MUSE
inspiration sampler and its HTTP service."""

__version__ = "0.1.0"
