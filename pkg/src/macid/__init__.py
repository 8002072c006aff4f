"""Exact finite-n tools for identification over two-user multiple access channels."""

__version__ = "0.1.0"
