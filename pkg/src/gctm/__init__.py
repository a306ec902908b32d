"""Consistency trajectory models between arbitrary distributions, with an
analytic Gaussian oracle, teacher-free training, and guided inference."""

from .backend import BACKEND

__all__ = ["BACKEND"]
__version__ = "0.1.0"
