"""Pseudo-spectral laboratory for u_t + d_x Lap u + u^k u_x = 0 on a periodic box."""

from gzk.core.config import settings

__version__ = settings.VERSION
