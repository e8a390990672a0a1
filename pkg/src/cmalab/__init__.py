"""Numerical laboratory for the complex Monge-Ampere operator in its real
Hessian form, with a Dirichlet solver on box domains and the rescaling
experiments built on top of it."""

__version__ = "0.1.0"
