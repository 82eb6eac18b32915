"""Shared numerical tolerances.

All identity checks in this library are floating-point checks against the
knobs collected here.  Library functions accept an optional ``tol`` argument;
the CLI installs one global override with :func:`set_active`.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ToleranceConfig:
    """Tolerance knobs shared across all modules.

    eps_cancel:   clustering radius for pole/zero cancellation in rational
                  canonical forms.
    eps_stab:     stability margin; a pole with Re >= -eps_stab counts as
                  unstable (marginal modes are rejected).
    eps_rank:     relative singular-value cutoff for numerical rank tests.
    residual_tol: relative tolerance for sampled identity residuals
                  (annihilation, invariance, verification reports).
    """

    eps_cancel: float = 1e-8
    eps_stab: float = 1e-9
    eps_rank: float = 1e-9
    residual_tol: float = 1e-7

    def __post_init__(self) -> None:
        for name in ("eps_cancel", "eps_stab", "eps_rank", "residual_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.residual_tol < self.eps_cancel:
            raise ValueError("residual_tol must be >= eps_cancel")


DEFAULT = ToleranceConfig()

_active = DEFAULT


def active() -> ToleranceConfig:
    """Return the process-wide tolerance configuration."""
    return _active


def set_active(cfg: ToleranceConfig) -> None:
    """Install ``cfg`` as the process-wide default (used by the CLI)."""
    global _active
    _active = cfg
