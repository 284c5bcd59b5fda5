"""Exact free-space solution of the 2D wave equation with a Gaussian
point source, used as the reference for convergence measurements.

With unit wave speed, a source at (x_s, y_s) and pulse f(t) the solution is

    u(x, y, t) = 1/(sigma (2 pi)^{3/2})
                 * integral_0^inf exp(-(t - t_s - r cosh(w))^2 / (2 sigma^2)) dw,

with r the distance to the source. The integrand decays like a Gaussian in
r cosh(w), so the integral is truncated at

    w_max = arcosh(max(1, (t - t_s + 12 sigma)/r)) + 1,

beyond which it is below exp(-72) of the peak, and evaluated by adaptive
Gauss-Kronrod quadrature to absolute tolerance tol.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

__all__ = ["PointSourceSolution", "omega_cutoff", "exact_u", "exact_field"]


@dataclass(frozen=True)
class PointSourceSolution:
    x_s: float = 0.0
    y_s: float = 0.0
    sigma: float = 0.04
    t_source: float = 0.3
    tol: float = 1e-12

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.tol <= 0.0:
            raise ValueError(f"tolerance must be positive, got {self.tol}")


def omega_cutoff(r: float, t: float, sol: PointSourceSolution) -> float:
    """Truncation point of the integration variable for radius r, time t."""
    reach = t - sol.t_source + 12.0 * sol.sigma
    return math.acosh(max(1.0, reach / r)) + 1.0


def exact_u(x: float, y: float, t: float, sol: PointSourceSolution) -> float:
    """Pointwise exact solution; zero before the wave can have arrived."""
    r = math.hypot(x - sol.x_s, y - sol.y_s)
    if r == 0.0:
        raise ValueError("exact solution is singular at the source point")
    reach = t - sol.t_source + 12.0 * sol.sigma
    if r >= reach:
        return 0.0
    w_max = omega_cutoff(r, t, sol)
    shift = t - sol.t_source
    inv_two_sigma2 = 1.0 / (2.0 * sol.sigma**2)

    def integrand(w):
        d = shift - r * np.cosh(w)
        return np.exp(-d * d * inv_two_sigma2)

    value, _ = integrate.quad(integrand, 0.0, w_max, epsabs=sol.tol, epsrel=1e-13, limit=500)
    return value / (sol.sigma * (2.0 * math.pi) ** 1.5)


def exact_field(points, t: float, sol: PointSourceSolution) -> np.ndarray:
    """Vectorized exact_u over an (M, 2) point array.

    Points coinciding with the source are flagged NaN so norms can exclude
    them.
    """
    points = np.asarray(points, float)
    out = np.zeros(len(points))
    r = np.hypot(points[:, 0] - sol.x_s, points[:, 1] - sol.y_s)
    for i, (pt, ri) in enumerate(zip(points, r)):
        if ri == 0.0:
            out[i] = np.nan
            continue
        try:
            out[i] = exact_u(pt[0], pt[1], t, sol)
        except Exception as exc:
            raise RuntimeError(f"exact solution failed at point {i} ({pt[0]}, {pt[1]}): {exc}") from exc
    return out
