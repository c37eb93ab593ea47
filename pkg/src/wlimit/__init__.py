"""Limit law W: cascades, moments and the fixed-point iteration."""
