"""B-tree fringe dynamics as Polya urns."""
