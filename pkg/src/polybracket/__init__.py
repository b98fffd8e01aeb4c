"""Explicit epsilon-bracketing families for bounded convex functions on
convex polytopes, with the geometric machinery needed to certify them."""

__version__ = "0.1.0"
