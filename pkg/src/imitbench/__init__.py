"""Desk-scale benchmark of imitation-learning reward constructions on continuous control."""
__version__ = "0.1.0"
