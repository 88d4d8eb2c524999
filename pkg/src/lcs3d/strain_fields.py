"""Alias of :mod:`lcs3d.strain`."""

from .strain import *  # noqa: F401,F403
