"""DPAN: group-based device authentication from DRAM-PUF phenotype images."""

__version__ = "0.1.0"
