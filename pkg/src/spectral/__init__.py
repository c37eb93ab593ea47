"""Roots of the characteristic polynomial and their eigen data."""
