"""Log-symmetric distribution families in classical and quantile-based form.

Each family is driven by a density generator: a positive kernel on [0, inf)
such that z -> kernel(z**2), normalizing constant included, is a probability
density on the real line.  The standardized variable Z with that density
determines the positive variable

    T = Q * exp(sqrt(phi) * (Z - z_q)),    z_q = inv_cdf(q),

whose 100q-th quantile is exactly Q.  This quantile-based parameterization
(Q, phi) is what the regression model works with.

Four families are provided: log-normal, log-Student-t, log-power-exponential
and extended Birnbaum-Saunders (sinh-normal kernel).  All operations accept
scalars or arrays and are pure, so instances can be shared freely across
threads.  Samplers take an explicit seed and own their generator state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "Generator",
    "LogNormal",
    "LogStudentT",
    "LogPowerExponential",
    "ExtendedBirnbaumSaunders",
    "make_generator",
    "QlsParams",
    "qls_pdf",
    "qls_logpdf",
    "qls_cdf",
    "qls_sf",
    "qls_logsf",
    "qls_sample",
]

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def _check_nonneg(u):
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("kernel argument must be nonnegative")
    return u


def _check_prob_open(p):
    p = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(p)) or np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("probability must lie strictly inside (0, 1)")
    return p


class Generator:
    """Normalized density generator of one log-symmetric family.

    Subclasses implement the log kernel, its logarithmic derivative, and the
    distribution function of the standardized symmetric variable.  Deep left
    tails are handled through ``log_cdf`` so censored likelihood terms never
    round to log(0) prematurely.
    """

    name: str = ""
    xi: float | None = None

    def log_kernel(self, u):
        """log of kernel(u); z -> exp(log_kernel(z**2)) is a density."""
        raise NotImplementedError

    def dlog_kernel(self, u):
        """d/du log kernel(u); the normalizing constant drops out."""
        raise NotImplementedError

    def cdf(self, z):
        raise NotImplementedError

    def log_cdf(self, z):
        raise NotImplementedError

    def _inv_cdf(self, p):
        raise NotImplementedError

    def kernel(self, u):
        """Kernel with its normalizing constant, evaluated at u >= 0."""
        return np.exp(self.log_kernel(_check_nonneg(u)))

    def inv_cdf(self, p):
        """Quantile function of the standardized variable; p in (0, 1)."""
        return self._inv_cdf(_check_prob_open(p))

    def cdf_ratio(self, z):
        """kernel(z**2) / cdf(z), the derivative of cdf over cdf.

        Evaluated in log space throughout, which keeps the ratio finite far
        into the left tail where both factors underflow.
        """
        z = np.asarray(z, dtype=float)
        return np.exp(self.log_kernel(z * z) - self.log_cdf(z))

    def __repr__(self):
        if self.xi is None:
            return f"{type(self).__name__}()"
        return f"{type(self).__name__}(xi={self.xi:g})"


class LogNormal(Generator):
    """Gaussian kernel exp(-u/2); the standardized variable is standard normal."""

    name = "lognormal"

    def log_kernel(self, u):
        return -0.5 * _check_nonneg(u) - _LOG_SQRT_2PI

    def dlog_kernel(self, u):
        u = _check_nonneg(u)
        return np.full_like(u, -0.5)

    def cdf(self, z):
        return special.ndtr(np.asarray(z, dtype=float))

    def log_cdf(self, z):
        return special.log_ndtr(np.asarray(z, dtype=float))

    def _inv_cdf(self, p):
        return special.ndtri(p)


class LogStudentT(Generator):
    """Student-t kernel (1 + u/xi)^(-(xi+1)/2) with xi > 0 degrees of freedom."""

    name = "logt"

    def __init__(self, xi):
        xi = float(xi)
        if not xi > 0:
            raise ValueError(f"log-Student-t requires xi > 0, got {xi}")
        self.xi = xi
        self._log_c = (
            special.gammaln(0.5 * (xi + 1.0))
            - special.gammaln(0.5 * xi)
            - 0.5 * np.log(xi * np.pi)
        )

    def log_kernel(self, u):
        u = _check_nonneg(u)
        return self._log_c - 0.5 * (self.xi + 1.0) * np.log1p(u / self.xi)

    def dlog_kernel(self, u):
        u = _check_nonneg(u)
        return -0.5 * (self.xi + 1.0) / (self.xi + u)

    def cdf(self, z):
        return special.stdtr(self.xi, np.asarray(z, dtype=float))

    def log_cdf(self, z):
        z = np.asarray(z, dtype=float)
        c = special.stdtr(self.xi, z)
        with np.errstate(divide="ignore"):
            out = np.log(c)
        # power-law tail, used only once stdtr itself underflows
        tail = (c == 0.0) & (z < 0)
        if np.any(tail):
            xi = self.xi
            zt = np.abs(np.asarray(z)[tail])
            out = np.asarray(out)
            out[tail] = (
                self._log_c + 0.5 * (xi + 1.0) * np.log(xi) - np.log(xi) - xi * np.log(zt)
            )
        return out

    def _inv_cdf(self, p):
        # stdtrit(xi, 0.5) returns ~7e-17; the median must be exactly 0
        return np.where(p == 0.5, 0.0, special.stdtrit(self.xi, p))[()]


class LogPowerExponential(Generator):
    """Power-exponential kernel exp(-u^(1/(1+xi)) / 2) with -1 < xi <= 1.

    The distribution function reduces to a regularized incomplete gamma
    function with shape (1 + xi)/2, inverted exactly through gammaincinv.
    At the boundary xi = 1 the density has a Laplace-like kink at z = 0;
    everything here stays exact, but generic quadrature across that point
    needs the origin as a breakpoint.
    """

    name = "logpe"

    def __init__(self, xi):
        xi = float(xi)
        if not (-1.0 < xi <= 1.0):
            raise ValueError(f"log-power-exponential requires -1 < xi <= 1, got {xi}")
        self.xi = xi
        self._a = 0.5 * (1.0 + xi)
        self._power = 1.0 / (1.0 + xi)
        self._log_eta = -(
            0.5 * (xi + 3.0) * np.log(2.0) + special.gammaln(0.5 * (xi + 3.0))
        )

    def log_kernel(self, u):
        u = _check_nonneg(u)
        return self._log_eta - 0.5 * u**self._power

    def dlog_kernel(self, u):
        u = _check_nonneg(u)
        # exponent is negative for xi > 0, so the ratio diverges at u = 0
        with np.errstate(divide="ignore"):
            return -0.5 * self._power * u ** (self._power - 1.0)

    def _gamma_arg(self, z):
        return 0.5 * np.abs(z) ** (2.0 * self._power)

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        p = special.gammainc(self._a, self._gamma_arg(z))
        return 0.5 * (1.0 + np.sign(z) * p)

    def log_cdf(self, z):
        z = np.asarray(z, dtype=float)
        w = self._gamma_arg(z)
        out = np.empty_like(w)
        pos = z >= 0
        out[pos] = np.log(0.5) + np.log1p(special.gammainc(self._a, w[pos]))
        neg = ~pos
        qneg = special.gammaincc(self._a, w[neg])
        with np.errstate(divide="ignore"):
            lneg = np.log(0.5 * qneg)
        under = qneg == 0.0
        if np.any(under):
            # leading term of the upper incomplete gamma for large w
            wt = w[neg][under]
            lneg[under] = (
                np.log(0.5)
                + (self._a - 1.0) * np.log(wt)
                - wt
                - special.gammaln(self._a)
                + np.log1p((self._a - 1.0) / wt)
            )
        out[neg] = lneg
        return out if out.ndim else out[()]

    def _inv_cdf(self, p):
        p = np.asarray(p, dtype=float)
        upper = p >= 0.5
        tail = np.where(upper, 2.0 * p - 1.0, 1.0 - 2.0 * p)
        w = special.gammaincinv(self._a, tail)
        mag = (2.0 * w) ** (0.5 * (1.0 + self.xi))
        out = np.where(upper, mag, -mag)
        return out if out.ndim else out[()]


class ExtendedBirnbaumSaunders(Generator):
    """Sinh-normal kernel cosh(sqrt(u)) exp(-(2/xi^2) sinh^2(sqrt(u))), xi > 0.

    The standardized variable satisfies cdf(z) = ndtr((2/xi) sinh(z)), so the
    left tail is delegated to log_ndtr, which is itself asymptotics-backed.
    """

    name = "ebs"

    _Z_CLIP = 355.0  # keeps sinh finite; the kernel is 0 far before this

    def __init__(self, xi):
        xi = float(xi)
        if not xi > 0:
            raise ValueError(f"extended Birnbaum-Saunders requires xi > 0, got {xi}")
        self.xi = xi
        self._log_eta = np.log(2.0 / xi) - _LOG_SQRT_2PI

    def log_kernel(self, u):
        u = _check_nonneg(u)
        s = np.sqrt(u)
        log_cosh = np.logaddexp(s, -s) - np.log(2.0)
        with np.errstate(over="ignore"):
            sinh2 = np.sinh(np.minimum(s, self._Z_CLIP)) ** 2
            return self._log_eta + log_cosh - (2.0 / self.xi**2) * sinh2

    def dlog_kernel(self, u):
        u = _check_nonneg(u)
        s = np.sqrt(u)
        small = s < 1e-8
        s_safe = np.where(small, 1.0, s)
        with np.errstate(over="ignore"):
            val = (np.tanh(s_safe) - (2.0 / self.xi**2) * np.sinh(2.0 * s_safe)) / (
                2.0 * s_safe
            )
        limit = 0.5 - 2.0 / self.xi**2
        out = np.where(small, limit, val)
        return out if out.ndim else out[()]

    def _sinh_arg(self, z):
        z = np.asarray(z, dtype=float)
        return (2.0 / self.xi) * np.sinh(np.clip(z, -self._Z_CLIP, self._Z_CLIP))

    def cdf(self, z):
        return special.ndtr(self._sinh_arg(z))

    def log_cdf(self, z):
        return special.log_ndtr(self._sinh_arg(z))

    def _inv_cdf(self, p):
        return np.arcsinh(0.5 * self.xi * special.ndtri(p))


_FAMILIES = {
    "lognormal": LogNormal,
    "logt": LogStudentT,
    "logpe": LogPowerExponential,
    "ebs": ExtendedBirnbaumSaunders,
}


def make_generator(name, xi=None):
    """Construct a family by name: lognormal, logt, logpe or ebs."""
    try:
        cls = _FAMILIES[name]
    except KeyError:
        raise ValueError(
            f"unknown family {name!r}; expected one of {sorted(_FAMILIES)}"
        ) from None
    if cls is LogNormal:
        if xi is not None:
            raise ValueError("lognormal takes no extra parameter")
        return cls()
    if xi is None:
        raise ValueError(f"family {name!r} requires an extra parameter xi")
    return cls(xi)


@dataclass(frozen=True)
class QlsParams:
    """Quantile-based parameters: Q is the 100q-th quantile of T, phi > 0."""

    q: float
    Q: float
    phi: float

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must lie in (0, 1), got {self.q}")
        if not self.Q > 0:
            raise ValueError(f"Q must be positive, got {self.Q}")
        if not self.phi > 0:
            raise ValueError(f"phi must be positive, got {self.phi}")


def _standardize(gen, params, t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    z_q = gen.inv_cdf(params.q)
    return (np.log(t) - np.log(params.Q)) / np.sqrt(params.phi) + z_q


def qls_logpdf(gen, params, t):
    z = _standardize(gen, params, t)
    return gen.log_kernel(z * z) - 0.5 * np.log(params.phi) - np.log(t)


def qls_pdf(gen, params, t):
    """Density of T at t > 0 under the quantile-based parameterization."""
    return np.exp(qls_logpdf(gen, params, t))


def qls_cdf(gen, params, t):
    """Distribution function; equals q exactly at t = Q."""
    return gen.cdf(_standardize(gen, params, t))


def qls_sf(gen, params, t):
    """Survival function, computed as cdf(-z) so large t never cancels."""
    return gen.cdf(-_standardize(gen, params, t))


def qls_logsf(gen, params, t):
    return gen.log_cdf(-_standardize(gen, params, t))


def qls_sample(gen, params, n, seed):
    """Draw n values by inverse transform; identical seeds give identical draws."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    u = np.where(u == 0.0, 0.5**53, u)  # random() can return exactly 0
    z = gen.inv_cdf(u)
    z_q = gen.inv_cdf(params.q)
    return params.Q * np.exp(np.sqrt(params.phi) * (z - z_q))
