"""Gradient verification harness."""

from .gradcheck import GradcheckReport, GradientChecker

__all__ = ["GradcheckReport", "GradientChecker"]
