"""Sum-rate optimisation for multi-waveguide pinching-antenna systems."""
