"""Homogeneous geodesic flow of the Bolza surface and rapid-mixing diagnostics."""
