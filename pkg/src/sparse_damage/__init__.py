"""Sparse-regularized damage identification for planar trusses."""
