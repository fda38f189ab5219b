"""Synthetic labor-supply-style data for demos and end-to-end tests.

The generator mimics the shape of a classic married-women labor survey:
753 households, five covariates (age, education, children under 6, children
6 to 18, experience), hourly-wage-like responses left-censored at 1 with
exactly 325 censored rows.  Responses are heteroscedastic by construction,
so a dispersion submodel with covariates genuinely fits better than an
intercept-only one.
"""

from __future__ import annotations

import csv
from importlib import resources

import numpy as np

from .model import Dataset

__all__ = ["PSID_LIKE_COLUMNS", "make_psid_like", "write_psid_like_csv", "load_psid_like"]

PSID_LIKE_COLUMNS = ["age", "educ", "chil6", "chil618", "exper"]

# wage-equation and dispersion coefficients (intercept first); the dispersion
# slopes on age, chil6 and exper are what makes the data heteroscedastic
_BETA = np.array([0.58, -0.063, 0.154, -1.10, 0.002, 0.063])
_KAPPA = np.array([-1.17, 0.070, -0.035, 1.03, 0.019, -0.056])

_N_ROWS = 753
_N_CENSORED = 325


def _covariates(rng, n):
    age = rng.integers(30, 61, size=n).astype(float)
    educ = rng.integers(5, 18, size=n).astype(float)
    chil6 = np.minimum(rng.poisson(0.26, size=n), 3).astype(float)
    chil618 = np.minimum(rng.poisson(1.35, size=n), 8).astype(float)
    exper = rng.integers(0, 46, size=n).astype(float)
    return np.column_stack([age, educ, chil6, chil618, exper])


def make_psid_like(seed=0, n=_N_ROWS, n_censored=_N_CENSORED):
    """Simulate one survey-shaped dataset; deterministic given the seed.

    Latent wages come from a heteroscedastic log-normal quantile model; the
    sample is rescaled so the censoring threshold is exactly 1 and exactly
    ``n_censored`` rows sit at it.
    """
    if not 0 < n_censored < n:
        raise ValueError("n_censored must lie strictly between 0 and n")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5D)))
    cov = _covariates(rng, n)
    design = np.column_stack([np.ones(n), cov])
    lq = design @ _BETA
    sphi = np.exp(0.5 * (design @ _KAPPA))
    z = rng.standard_normal(n)
    t_star = np.exp(lq + sphi * z)
    # scale so the n_censored-th smallest latent value lands exactly at 1
    t_star = t_star / np.sort(t_star)[n_censored - 1]
    cens = t_star <= 1.0
    t = np.where(cens, 1.0, t_star)
    names = ["const"] + PSID_LIKE_COLUMNS
    return Dataset(t, cens, design, design, psi=1.0, x_names=names, w_names=names)


def write_psid_like_csv(path, seed=0):
    """Write the synthetic survey as CSV (wage plus the five covariates)."""
    data = make_psid_like(seed=seed)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["wage"] + PSID_LIKE_COLUMNS)
        for i in range(data.n):
            writer.writerow(
                [f"{data.t[i]:.6g}"] + [f"{v:g}" for v in data.X[i, 1:]]
            )
    return path


def load_psid_like():
    """Path to the bundled synthetic survey CSV."""
    return resources.files("lstobit").joinpath("data/psid_like.csv")
