"""Independent reference values: hand integrals, mpmath and scipy brute force.

Nothing here imports affinehls, so every comparison is against a route the
library does not share.
"""

import math

import mpmath as mp
import numpy as np
from scipy import integrate

mp.mp.dps = 30

# frozen hand values
HLS_INTERVAL_HALF = 8.0 / 3.0              # int int_[0,1]^2 |x-y|^(-1/2)
POLAR_NEG_INTERVAL = 1.0 / 16.0            # Pi body of 1_[0,1], alpha = -1/2
R_NEG_INTERVAL = 0.25                      # R_{-1/2}([0,1],[0,1])
DISK_VOLUME_IDENTITY = math.pi**2 / 2.0    # |S_2(1_B, 1_B)| in the plane
HOLDER_BALLS = 2.0 * math.pi               # V_1(B(1), B(2)) in the plane


def rho_interval(alpha):
    """rho_{S_alpha}(+-1) for f = h = 1_[0,1]: int_0^1 t^(a-1)(1-t) dt = 1/(a(a+1))."""
    return (1.0 / (alpha * (alpha + 1.0))) ** (1.0 / alpha)


def rho_interval_pair(alpha, xi, length=2.0):
    """f = 1_[0,1], h = 1_[0,L]: G(y) = |[0,L] ∩ [-y, 1-y]| by brute force."""
    def g(t):
        y = xi * t
        return max(0.0, min(length, 1.0 - y) - max(0.0, -y))

    val = mp.quad(lambda t: t ** (alpha - 1) * g(float(t)), [0, 1, length - 1, length, length + 1])
    return float(val) ** (1.0 / alpha)


def radial_mean_interval(alpha):
    return (alpha + 1.0) ** (-1.0 / alpha)


def gamma(x):
    return float(mp.gamma(x))


def beta(p, q):
    return float(mp.beta(p, q))


def sharp_hls_constant(n, alpha):
    """pi^((n-a)/2) Gamma(a/2)/Gamma((n+a)/2) (Gamma(n)/Gamma(n/2))^(a/n)."""
    n, a = mp.mpf(n), mp.mpf(alpha)
    return float(mp.pi ** ((n - a) / 2) * mp.gamma(a / 2) / mp.gamma((n + a) / 2)
                 * (mp.gamma(n) / mp.gamma(n / 2)) ** (a / n))


def hls_bound_expression(n, alpha, p, r):
    """Second, separately written expression tree for the non-sharp bound."""
    e = mp.mpf(1) - mp.mpf(alpha) / n
    omega = mp.pi ** (mp.mpf(n) / 2) / mp.gamma(mp.mpf(n) / 2 + 1)
    pp, rr = mp.mpf(p), mp.mpf(r)
    br = (e * pp / (pp - 1)) ** e + (e * rr / (rr - 1)) ** e
    return float(mp.mpf(n) / alpha * omega**e * br / (pp * rr))


def extremal_rho_1d_half():
    """rho_{S_1/2} of f = h = (1+x^2)^(-3/4): (Gamma(1/4)/Gamma(3/4) pi^(3/2)/2)^2."""
    return float((mp.gamma(0.25) / mp.gamma(0.75) * mp.pi**1.5 / 2) ** 2)


# mpmath double quadrature of the same ray moment (about two minutes, so frozen)
EXTREMAL_RHO_1D = {0.5: 67.855364207841, 2.0: 1.7724538509055616}


def extremal_lp_norm_1d(alpha, p):
    e = (1 + alpha) / 2.0
    v, _ = integrate.quad(lambda x: (1 + x * x) ** (-e * p), -np.inf, np.inf, epsabs=0, epsrel=1e-13)
    return v ** (1.0 / p)


def hls_double_integral_1d(f, alpha, lim=np.inf):
    """int int f(x) f(y) |x-y|^(a-1) dx dy by scipy, splitting at the diagonal."""
    def inner(x):
        a = integrate.quad(lambda y: f(y) * abs(x - y) ** (alpha - 1), -lim, x, epsrel=1e-11, limit=200)[0]
        b = integrate.quad(lambda y: f(y) * abs(x - y) ** (alpha - 1), x, lim, epsrel=1e-11, limit=200)[0]
        return a + b

    return integrate.quad(lambda x: f(x) * inner(x), -lim, lim, epsrel=1e-10, limit=200)[0]


def simplex_exp_correlation(y):
    """2^-n exp(-||y||_1): closed form of G for f = h = e^(-||x||_simplex)."""
    y = np.asarray(y, dtype=float)
    return 2.0 ** -len(y) * math.exp(-float(np.abs(y).sum()))


def simplex_exp_correlation_1d(t):
    """1-D hand convolution: int_{x>=max(0,-t)} e^-x e^-(x+t) dx."""
    lo = max(0.0, -t)
    v, _ = integrate.quad(lambda x: math.exp(-x) * math.exp(-(x + t)), lo, np.inf)
    return v


def simplex_exp_S_radius(n, alpha, xi):
    """S_alpha of the simplex exponential is (2^-n Gamma(alpha))^(1/alpha) B_1^n."""
    xi = np.asarray(xi, dtype=float)
    return (2.0 ** -n * math.gamma(alpha)) ** (1.0 / alpha) / float(np.abs(xi).sum())


def lemma55_constant(n, s):
    return beta(n, 1 + 2.0 / s) / math.factorial(n - 1)


def lens_area(R, r, d):
    """Area of the intersection of two disks, for the Riesz checks."""
    if d >= R + r:
        return 0.0
    if d <= abs(R - r):
        return math.pi * min(R, r) ** 2
    a = r * r * math.acos((d * d + r * r - R * R) / (2 * d * r))
    b = R * R * math.acos((d * d + R * R - r * r) / (2 * d * R))
    c = 0.5 * math.sqrt((-d + r + R) * (d + r - R) * (d - r + R) * (d + r + R))
    return a + b - c


def gaussian_disk_l1(sigma=1.0):
    """||e^(-|x|^2/(2 s^2))||_1 ||1_B||_1 / 2 in the plane."""
    return 2.0 * math.pi * sigma**2 * math.pi / 2.0
