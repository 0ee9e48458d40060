"""Micro deep-learning stack and benchmark harness comparing QuickProp with
gradient descent on desk-scale semantic segmentation tasks."""

from .kernels import backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
