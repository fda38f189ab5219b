import numpy as np
import pytest

from lstobit import Dataset, censor_latent


def fd_gradient(f, x, base_step=1e-5):
    """Richardson-extrapolated central differences of a scalar function."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for j in range(x.size):
        h = base_step * (1.0 + abs(x[j]))

        def diff(step):
            xp, xm = x.copy(), x.copy()
            xp[j] += step
            xm[j] -= step
            return (f(xp) - f(xm)) / (2.0 * step)

        out[j] = (4.0 * diff(h / 2.0) - diff(h)) / 3.0
    return out


def simulate_tobit(gen, q, n, seed, beta=(1.0, 0.5), kappa=(1.0, 1.5), censoring=0.1):
    """One synthetic dataset: Bernoulli x, Uniform w, censored at the empirical
    censoring quantile of the replicate's own latent draws (0 disables)."""
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 2, size=n).astype(float)
    w = rng.random(n)
    z = gen.inv_cdf(np.clip(rng.random(n), 1e-12, None))
    z_q = float(gen.inv_cdf(q))
    lq = beta[0] + beta[1] * x
    sphi = np.exp(0.5 * (kappa[0] + kappa[1] * w))
    t_star = np.exp(lq + sphi * (z - z_q))
    if censoring > 0:
        psi = float(np.quantile(t_star, censoring))
    else:
        psi = float(0.5 * t_star.min())
    t, cens = censor_latent(t_star, psi)
    X = np.column_stack([np.ones(n), x])
    W = np.column_stack([np.ones(n), w])
    return Dataset(t, cens, X, W, psi)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
