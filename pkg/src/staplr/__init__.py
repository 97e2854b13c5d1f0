"""Stacked penalized logistic regression for hierarchical multi-view data."""

__version__ = "0.1.0"
