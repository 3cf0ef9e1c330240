"""Semantic type detection for table columns with topic context and a column CRF."""

__version__ = "0.1.0"
