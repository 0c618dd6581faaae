"""Simulation and verification toolkit for self-exciting random evolutions."""
