"""Alias of :mod:`lcs3d.lines`."""

from .lines import *  # noqa: F401,F403
