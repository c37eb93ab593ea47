"""Gap urn simulation, continuous-time embedding and trajectory I/O."""
