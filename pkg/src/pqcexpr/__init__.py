"""Expressibility of parameterized quantum circuits: ground truth and GNN prediction."""

__version__ = "0.1.0"
