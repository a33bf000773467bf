"""Chern-Hamilton energy toolkit for contact 3-manifolds."""
