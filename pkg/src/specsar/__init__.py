"""Dual-branch multispectral/SAR segmentation transformer on a numpy autodiff core."""

__version__ = "0.1.0"
