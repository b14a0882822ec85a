"""Workload-aware fragmentation, allocation and distributed SPARQL execution over RDF."""

__version__ = "0.1.0"
