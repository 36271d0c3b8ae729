"""Wasserstein GANs on 2-D toy data under weight clipping, GP, LP and
Wasserstein-p ratio penalties, plus exact optimal-transport oracles."""

from wganlab._backend import COMPILED

__version__ = "0.1.0"

__all__ = ["COMPILED", "__version__"]
