"""Federated model aggregation simulator: FullbatchAgg, AverageAgg and AvgDiffAgg."""

__version__ = "0.1.0"
