"""Numerical toolkit for multiple operator integrals, divided differences,
singular-trace diagnostics and truncation experiments."""

__version__ = "0.1.0"
