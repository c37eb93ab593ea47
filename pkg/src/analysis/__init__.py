"""Projection of trajectories on the lambda2 eigenform and fluctuation diagnostics."""
