"""Gamma/Beta evaluation and the named constants of the affine HLS inequalities.

Everything is computed in log space from a Lanczos approximation and
exponentiated at the end, so large dimensions or exponents do not overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Lanczos approximation, g = 7, nine coefficients (Godfrey's set).
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_TWO_PI = 0.5 * math.log(2.0 * math.pi)


class DomainError(ValueError):
    """Argument outside the domain where a function or constant is defined."""


class RegimeError(ValueError):
    """Parameters do not satisfy the regime an inequality is stated for."""


def _lanczos_log_gamma(x: float) -> float:
    # valid for x >= 0.5
    x -= 1.0
    acc = _LANCZOS_COEF[0]
    for k in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[k] / (x + k)
    t = x + _LANCZOS_G + 0.5
    return _HALF_LOG_TWO_PI + (x + 0.5) * math.log(t) - t + math.log(acc)


def log_gamma(x: float) -> float:
    """Natural log of Gamma(x) for x > 0."""
    x = float(x)
    if not x > 0.0 or math.isinf(x):
        raise DomainError(f"log_gamma requires 0 < x < inf, got {x!r}")
    if x < 0.5:
        # reflection; sin(pi x) > 0 on (0, 0.5)
        return math.log(math.pi / math.sin(math.pi * x)) - _lanczos_log_gamma(1.0 - x)
    return _lanczos_log_gamma(x)


def gamma_fn(x: float) -> float:
    """Gamma(x) for real x > 0."""
    return math.exp(log_gamma(x))


def log_beta(p: float, q: float) -> float:
    if not (p > 0.0 and q > 0.0):
        raise DomainError(f"beta requires p, q > 0, got ({p!r}, {q!r})")
    return log_gamma(p) + log_gamma(q) - log_gamma(p + q)


def beta_fn(p: float, q: float) -> float:
    """B(p, q) = Gamma(p) Gamma(q) / Gamma(p + q)."""
    return math.exp(log_beta(p, q))


def unit_ball_volume(n: int) -> float:
    """Volume omega_n of the Euclidean unit ball in R^n."""
    if int(n) != n or n < 1:
        raise DomainError(f"dimension must be a positive integer, got {n!r}")
    return math.exp(0.5 * n * math.log(math.pi) - log_gamma(0.5 * n + 1.0))


def sphere_area(n: int) -> float:
    """Surface measure of S^{n-1}; counting measure (2) for n = 1."""
    return n * unit_ball_volume(n)


@dataclass(frozen=True)
class HlsParams:
    """Exponents (n, alpha, p, r) tied by 1/p + 1/r - alpha/n = 1."""

    n: int
    alpha: float
    p: float
    r: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise RegimeError(f"n must be a positive integer, got {self.n!r}")
        if not self.alpha > 0:
            raise RegimeError(f"alpha must be positive, got {self.alpha!r}")
        if not (self.p > 0 and self.r > 0):
            raise RegimeError("p and r must be positive")
        gap = 1.0 / self.p + 1.0 / self.r - self.alpha / self.n - 1.0
        if abs(gap) > 1e-12:
            raise RegimeError(
                f"1/p + 1/r - alpha/n must equal 1 (off by {gap:.3e}) "
                f"for n={self.n}, alpha={self.alpha}, p={self.p}, r={self.r}"
            )

    @classmethod
    def diagonal(cls, n: int, alpha: float) -> "HlsParams":
        """The p = r = 2n/(n+alpha) point, where the sharp constant is known."""
        q = 2.0 * n / (n + alpha)
        return cls(n, alpha, q, q)

    @property
    def is_diagonal(self) -> bool:
        q = 2.0 * self.n / (self.n + self.alpha)
        return abs(self.p - q) < 1e-12 and abs(self.r - q) < 1e-12

    @property
    def regime(self) -> str:
        """'thm11' (0<alpha<n, 1<p,r), 'thm12' (alpha>n, 0<p,r<1) or 'none'."""
        if 0 < self.alpha < self.n and self.p > 1 and self.r > 1:
            return "thm11"
        if self.alpha > self.n and self.p < 1 and self.r < 1:
            return "thm12"
        return "none"

    def require(self, regime: str) -> None:
        if self.regime != regime:
            raise RegimeError(
                f"parameters n={self.n}, alpha={self.alpha}, p={self.p}, r={self.r} "
                f"are outside the {regime} regime"
            )


def hls_constant_bound(params: HlsParams) -> float:
    """Upper bound on the HLS constant C(n, alpha, p) for 0 < alpha < n.

    Not sharp unless p = r; reports label it as a bound.
    """
    params.require("thm11")
    n, a, p, r = params.n, params.alpha, params.p, params.r
    e = 1.0 - a / n
    bracket = (e / (1.0 - 1.0 / p)) ** e + (e / (1.0 - 1.0 / r)) ** e
    return (n / a) * unit_ball_volume(n) ** e / (p * r) * bracket


def hls_sharp_constant(n: int, alpha: float) -> float:
    """Sharp HLS constant at p = r = 2n/(n+alpha) (Lieb; reversed form for alpha > n)."""
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha!r}")
    log_c = (
        0.5 * (n - alpha) * math.log(math.pi)
        + log_gamma(0.5 * alpha)
        - log_gamma(0.5 * (n + alpha))
        - (alpha / n) * (log_gamma(0.5 * n) - log_gamma(n))
    )
    return math.exp(log_c)


def reverse_constant_logconcave(n: int, alpha: float) -> float:
    """Gamma(n+1)^(alpha/n) / Gamma(alpha)."""
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha!r}")
    return math.exp((alpha / n) * log_gamma(n + 1.0) - log_gamma(alpha))


def reverse_constant_sconcave(n: int, alpha: float, s: float) -> float:
    """(n B(n, n+1+2/s))^(alpha/n) / B(alpha, n+1+2/s)."""
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha!r}")
    if not s > 0:
        raise DomainError(f"s must be positive, got {s!r}")
    m = n + 1.0 + 2.0 / s
    return math.exp((alpha / n) * (math.log(n) + log_beta(n, m)) - log_beta(alpha, m))


def inclusion_constant(alpha: float, shape: str = "log", n: int = 1, s: float | None = None) -> float:
    """Normalizing factor c(alpha) in the radial-mean-body inclusion chain.

    ``shape="log"`` gives Gamma(alpha+1)^(1/alpha); ``shape="s"`` gives
    ((n+2/s) B(alpha+1, n+2/s))^(1/alpha).
    """
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha!r}")
    if shape == "log":
        return math.exp(log_gamma(alpha + 1.0) / alpha)
    if shape == "s":
        if s is None or not s > 0:
            raise DomainError("s-concave inclusion constant needs s > 0")
        m = n + 2.0 / s
        return math.exp((math.log(m) + log_beta(alpha + 1.0, m)) / alpha)
    raise DomainError(f"unknown concavity class {shape!r}")
