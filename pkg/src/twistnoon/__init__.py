"""Twisted N00N-state rotation metrology toolkit."""

__version__ = "0.1.0"
