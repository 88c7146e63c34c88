"""Purification of adversarially perturbed tracking frames through a
resamplable continuous video representation, plus the attackers, toy
tracker, synthetic data and benchmark harness used to verify it."""

__version__ = "0.1.0"

from .kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
