"""Band degeneracies of periodic Schroedinger operators on cubic lattices."""

__version__ = "0.1.0"
