"""Least squares finite elements for reaction-diffusion on the unit disk."""
