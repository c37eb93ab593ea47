"""Replacement rules and the B-tree engine."""
