"""affdim - affinity dimension and randomly perturbed self-affine attractors."""

__version__ = "1.0.0"
