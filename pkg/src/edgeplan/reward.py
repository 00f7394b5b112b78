"""Episode reward: an F1-style blend of accuracy, model sparsity, and feature compression.

With accuracy kappa, on-device sparsity nu and feature compression rho, the
reward is R = (R1 + R2 + beta * R3) / 3 where each Ri is the harmonic mean of
a pair of the three quantities. beta down-weights the accuracy-independent
term so heavily compressed but inaccurate plans do not score well.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple


class CompressionMetrics(NamedTuple):
    nu: float
    rho: float
    nu_clamped: bool
    rho_clamped: bool


def compression_metrics(lam: float, capital_lambda: float, omega: float, capital_omega: float) -> CompressionMetrics:
    """Sparsity nu = 1 - lam/Lambda and compression rho = 1 - omega/Omega, clamped to [0, 1].

    Clamping (instead of erroring) keeps degenerate plans scoreable, e.g. when
    encoder overhead exceeds the pruning savings; the clamp is flagged.
    """
    if capital_lambda <= 0 or capital_omega <= 0:
        raise ValueError("reference totals Lambda and Omega must be positive")
    if lam < 0 or omega < 0:
        raise ValueError("lam and omega must be non-negative")
    nu = 1.0 - lam / capital_lambda
    rho = 1.0 - omega / capital_omega
    nu_clamped = not 0.0 <= nu <= 1.0
    rho_clamped = not 0.0 <= rho <= 1.0
    return CompressionMetrics(
        nu=min(1.0, max(0.0, nu)),
        rho=min(1.0, max(0.0, rho)),
        nu_clamped=nu_clamped,
        rho_clamped=rho_clamped,
    )


def harmonic(x: float, y: float) -> float:
    """2xy / (x + y), defined as 0 when x + y = 0 (the continuous limit)."""
    s = x + y
    if s == 0.0:
        return 0.0
    return 2.0 * x * y / s


@dataclass(frozen=True)
class RewardTerms:
    """Full breakdown of one episode reward."""

    kappa: float
    nu: float
    rho: float
    beta: float
    r1: float
    r2: float
    r3: float
    reward: float
    lam: float | None = None
    capital_lambda: float | None = None
    omega: float | None = None
    capital_omega: float | None = None
    nu_clamped: bool = False
    rho_clamped: bool = False


def episode_reward(kappa: float, nu: float, rho: float, beta: float) -> RewardTerms:
    """Reward and its three harmonic terms; all arguments must lie in [0, 1]."""
    for name, value in (("kappa", kappa), ("nu", nu), ("rho", rho), ("beta", beta)):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {value}")
    r1 = harmonic(kappa, nu)
    r2 = harmonic(kappa, rho)
    r3 = harmonic(nu, rho)
    return RewardTerms(
        kappa=kappa, nu=nu, rho=rho, beta=beta,
        r1=r1, r2=r2, r3=r3,
        reward=(r1 + r2 + beta * r3) / 3.0,
    )


def score_plan(
    kappa: float,
    lam: float,
    capital_lambda: float,
    omega: float,
    capital_omega: float,
    beta: float,
) -> RewardTerms:
    """Compression metrics plus episode reward in one record."""
    metrics = compression_metrics(lam, capital_lambda, omega, capital_omega)
    terms = episode_reward(kappa, metrics.nu, metrics.rho, beta)
    return RewardTerms(
        kappa=terms.kappa, nu=terms.nu, rho=terms.rho, beta=terms.beta,
        r1=terms.r1, r2=terms.r2, r3=terms.r3, reward=terms.reward,
        lam=float(lam), capital_lambda=float(capital_lambda),
        omega=float(omega), capital_omega=float(capital_omega),
        nu_clamped=metrics.nu_clamped, rho_clamped=metrics.rho_clamped,
    )
