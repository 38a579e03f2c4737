"""
    bbmag: magnetic fractional Sobolev and BV functionals, and the s -> 1 limit
"""
from bbmag.utils import __version__  # noqa: F401
