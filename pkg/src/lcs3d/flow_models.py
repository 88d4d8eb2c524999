"""Alias of :mod:`lcs3d.flows`."""

from .flows import *  # noqa: F401,F403
