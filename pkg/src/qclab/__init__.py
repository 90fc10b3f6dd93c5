"""Numerical laboratory for gauge contents, Wolff potentials, Cantor constructions and weighted Beurling bounds."""

__version__ = "0.1.0"
