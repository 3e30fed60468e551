"""Ragged dataflow pipelines over named dimensions with dependency orders."""

__version__ = "0.1.0"
