"""Staggered discontinuous Galerkin solver for stationary incompressible
Navier-Stokes flow on polygonal meshes."""

__version__ = "0.1.0"
