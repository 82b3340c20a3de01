"""Command-line interface and TCP service around the engine."""

from prodreid.frontdoor.runtime import Engine, ServiceConfig, extract_directory

__all__ = ["Engine", "ServiceConfig", "extract_directory"]
