"""Shared solver exceptions."""

from __future__ import annotations


class NonConvergenceError(RuntimeError):
    """An iterative solve exhausted its cap.

    Carries the residual trace and, when available, an estimate of the
    contraction factor so callers can diagnose stalled iterations.
    """

    def __init__(self, message: str, residuals=None, contraction=None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []
        self.contraction = contraction
