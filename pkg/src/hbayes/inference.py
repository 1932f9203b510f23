"""Coordinate-ascent variational inference for the hierarchical click model.

One sweep updates, in order: responsibilities, style proportions, users,
brands, styles, the style-prior mean w, the four precisions, and the
per-event bound locations xi.  Every update is the exact conditional
maximizer of the bounded objective in ``model.elbo``, so the ELBO trace is
non-decreasing.  All updates are pure; ``fit`` owns the only mutable copy.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, logsumexp

from .linalg import NumericalError, spd_inverse
from .model import (
    Dataset,
    GammaPosterior,
    GaussianPosterior,
    HyperParams,
    Responsibilities,
    VariationalState,
    elbo,
    lambda_of_xi,
)

__all__ = [
    "FitReport",
    "initial_state",
    "update_responsibilities",
    "update_theta",
    "update_user",
    "update_brand",
    "update_style",
    "update_w",
    "update_precisions",
    "update_xi",
    "cavi_sweep",
    "fit",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class FitReport:
    """Diagnostics from one fitting run."""

    elbo_trace: list
    iterations_run: int
    converged: bool


def initial_state(data: Dataset, hp: HyperParams, seed: int) -> VariationalState:
    """Seeded starting point for the coordinate-ascent loop.

    User and brand means start as small random vectors (scale 0.01), style
    means slightly larger (scale 0.1) to break the style symmetry, all
    covariances at identity scale, responsibilities near-uniform with
    Dirichlet jitter, Dirichlet parameters at 1/S, xi at 1, and Gamma
    posteriors at their priors.
    """
    rng = np.random.default_rng(seed)
    d = hp.feature_dim
    U, B, S = data.num_users, data.num_brands, hp.num_styles

    users = [GaussianPosterior(0.01 * rng.standard_normal(d), np.eye(d)) for _ in range(U)]
    brands = [GaussianPosterior(0.01 * rng.standard_normal(d), np.eye(d)) for _ in range(B)]
    styles = [GaussianPosterior(0.1 * rng.standard_normal(d), 1.0) for _ in range(S)]
    w = GaussianPosterior(np.zeros(d), 1.0)

    resp = (np.full((B, S), 1.0 / S) + rng.dirichlet(np.ones(S), size=B)) / 2.0

    return VariationalState(
        users=users,
        brands=brands,
        styles=styles,
        w=w,
        theta_gamma=np.full(S, 1.0 / S),
        resp=Responsibilities(resp),
        prec_u=GammaPosterior(hp.alpha0, hp.beta0),
        prec_b=GammaPosterior(hp.alpha0, hp.beta0),
        prec_s=GammaPosterior(hp.alpha0, hp.beta0),
        prec_w=GammaPosterior(hp.alpha0, hp.beta0),
        xi=np.ones(len(data)),
    )


def update_responsibilities(state: VariationalState, data: Dataset,
                            hp: HyperParams) -> Responsibilities:
    """Brand-to-style membership probabilities (the E-step).

    log rho_{ij} = E[log theta_j] + (d/2) E[log delta_b] - (d/2) log 2pi
    - (1/2) E[delta_b] * E[(B_i - S_j)'(B_i - S_j)]; rows are normalized
    with log-sum-exp.
    """
    d = hp.feature_dim
    gamma = state.theta_gamma
    eln_theta = digamma(gamma) - digamma(gamma.sum())

    brand_means = state.brand_means()
    brand_traces = np.array([g.cov_trace() for g in state.brands])
    style_means = state.style_means()
    style_vars = state.style_vars()

    diff = brand_means[:, None, :] - style_means[None, :, :]
    dist2 = np.einsum("bsd,bsd->bs", diff, diff)
    second_moment = dist2 + brand_traces[:, None] + d * style_vars[None, :]

    log_rho = (eln_theta[None, :]
               + 0.5 * d * (state.prec_b.mean_log - _LOG_2PI)
               - 0.5 * state.prec_b.mean * second_moment)
    with np.errstate(invalid="ignore"):
        mu = np.exp(log_rho - logsumexp(log_rho, axis=1, keepdims=True))
    if not np.all(np.isfinite(mu)):
        raise NumericalError("responsibilities are not finite after normalization")
    return Responsibilities(mu)


def update_theta(resp: Responsibilities, hp: HyperParams) -> np.ndarray:
    """Dirichlet parameters: prior concentration plus responsibility column sums."""
    return hp.gamma0 + resp.mu.sum(axis=0)


def update_user(k: int, state: VariationalState, data: Dataset) -> GaussianPosterior:
    """Gaussian factor for user k given current brands, precisions and xi."""
    d = data.feature_dim
    e_du = state.prec_u.mean
    idx = data.user_groups[k]
    if idx.size == 0:
        return GaussianPosterior(np.zeros(d), np.eye(d) / e_du)

    X = data.X[idx]
    lam = lambda_of_xi(state.xi[idx])
    precision = e_du * np.eye(d) + 2.0 * (X.T * lam) @ X

    brand_means = state.brand_means()[data.brands[idx]]
    xb = np.einsum("nd,nd->n", X, brand_means)
    coef = data.y[idx] - 0.5 - 2.0 * lam * xb

    cov = spd_inverse(precision)
    return GaussianPosterior(cov @ (X.T @ coef), cov)


def update_brand(i: int, state: VariationalState, data: Dataset) -> GaussianPosterior:
    """Gaussian factor for brand i; the style mixture acts as its prior."""
    d = data.feature_dim
    e_db = state.prec_b.mean
    mu_row = state.resp.mu[i]
    prior_precision = e_db * mu_row.sum()  # row sums to 1, so this is e_db
    prior_pull = e_db * (mu_row @ state.style_means())

    idx = data.brand_groups[i]
    if idx.size == 0:
        return GaussianPosterior(prior_pull / prior_precision, np.eye(d) / prior_precision)

    X = data.X[idx]
    lam = lambda_of_xi(state.xi[idx])
    precision = prior_precision * np.eye(d) + 2.0 * (X.T * lam) @ X

    user_means = state.user_means()[data.users[idx]]
    xu = np.einsum("nd,nd->n", X, user_means)
    coef = data.y[idx] - 0.5 - 2.0 * lam * xu

    cov = spd_inverse(precision)
    return GaussianPosterior(cov @ (prior_pull + X.T @ coef), cov)


def update_style(j: int, state: VariationalState) -> GaussianPosterior:
    """Isotropic Gaussian factor for style j from its member brands and w."""
    e_ds = state.prec_s.mean
    e_db = state.prec_b.mean
    col = state.resp.mu[:, j]
    var = 1.0 / (e_ds + e_db * col.sum())
    mean = var * (e_ds * state.w.mean + e_db * (col @ state.brand_means()))
    return GaussianPosterior(mean, var)


def update_w(state: VariationalState, hp: HyperParams) -> GaussianPosterior:
    """Isotropic Gaussian factor for the style-prior mean."""
    e_dw = state.prec_w.mean
    e_ds = state.prec_s.mean
    var = 1.0 / (e_dw + e_ds * state.num_styles)
    mean = var * e_ds * state.style_means().sum(axis=0)
    return GaussianPosterior(mean, var)


def update_precisions(state: VariationalState, data: Dataset, hp: HyperParams):
    """Gamma factors for the four precisions, recomputed from the prior.

    Shapes grow by half the number of Gaussian coordinates each precision
    governs; rates grow by half the relevant expected squared norms, with
    E[v'v] = ||mean||^2 + tr(cov) for independent factors.
    """
    d = hp.feature_dim
    U, B, S = state.num_users, state.num_brands, state.num_styles
    a0, b0 = hp.alpha0, hp.beta0

    user_means = state.user_means()
    user_sq = float(np.einsum("ud,ud->", user_means, user_means)
                    + sum(g.cov_trace() for g in state.users))
    prec_u = GammaPosterior(a0 + 0.5 * d * U, b0 + 0.5 * user_sq)

    brand_means = state.brand_means()
    brand_traces = np.array([g.cov_trace() for g in state.brands])
    style_means = state.style_means()
    style_vars = state.style_vars()
    diff = brand_means[:, None, :] - style_means[None, :, :]
    dist2 = np.einsum("bsd,bsd->bs", diff, diff)
    second_moment = dist2 + brand_traces[:, None] + d * style_vars[None, :]
    prec_b = GammaPosterior(a0 + 0.5 * d * B,
                            b0 + 0.5 * float(np.sum(state.resp.mu * second_moment)))

    w_mean, w_var = state.w.mean, float(state.w.cov)
    sw = style_means - w_mean[None, :]
    style_sq = float(np.einsum("sd,sd->", sw, sw) + d * style_vars.sum() + d * w_var * S)
    prec_s = GammaPosterior(a0 + 0.5 * d * S, b0 + 0.5 * style_sq)

    prec_w = GammaPosterior(a0 + 0.5 * d, b0 + 0.5 * float(w_mean @ w_mean + d * w_var))
    return prec_u, prec_b, prec_s, prec_w


def update_xi(state: VariationalState, data: Dataset) -> np.ndarray:
    """Per-event bound locations: xi_t = sqrt(E[(x'(B + U))^2])."""
    if len(data) == 0:
        return np.zeros(0)
    X = data.X
    m = np.einsum("nd,nd->n", X,
                  state.brand_means()[data.brands] + state.user_means()[data.users])
    bcov = state.brand_covs()[data.brands]
    ucov = state.user_covs()[data.users]
    s2 = np.einsum("nd,nde,ne->n", X, bcov, X) + np.einsum("nd,nde,ne->n", X, ucov, X)
    return np.sqrt(np.maximum(m * m + s2, 0.0))


def cavi_sweep(state: VariationalState, data: Dataset, hp: HyperParams) -> VariationalState:
    """One full coordinate-ascent sweep; returns a new state.

    Later updates within the sweep see the values produced by earlier ones.
    Updates within one family (all users, all brands, ...) are mutually
    independent given the rest, so their order does not matter.
    """
    work = state.copy()
    work.resp = update_responsibilities(work, data, hp)
    work.theta_gamma = update_theta(work.resp, hp)
    work.users = [update_user(k, work, data) for k in range(work.num_users)]
    work.brands = [update_brand(i, work, data) for i in range(work.num_brands)]
    work.styles = [update_style(j, work) for j in range(work.num_styles)]
    work.w = update_w(work, hp)
    work.prec_u, work.prec_b, work.prec_s, work.prec_w = update_precisions(work, data, hp)
    work.xi = update_xi(work, data)
    return work


def fit(data: Dataset, hp: HyperParams, seed: int = 0,
        init: VariationalState | None = None, restarts: int = 1):
    """Run coordinate ascent until the ELBO stabilizes.

    Returns (state, FitReport).  Deterministic given the seed; passing an
    explicit ``init`` state bypasses the seeded initialization.  Stops when
    |ELBO change| / (|ELBO| + 1e-12) < hp.rel_tol or after hp.max_iters
    sweeps.  With ``restarts`` > 1 the loop is run from that many seeded
    initializations (seeds seed, seed + 100, ...) and the run with the
    highest final ELBO wins; mixture-style models converge to local optima,
    so a few restarts are cheap insurance.
    """
    if restarts > 1 and init is None:
        runs = [_fit_once(data, hp, seed + 100 * r, None) for r in range(restarts)]
        return max(runs, key=lambda run: run[1].elbo_trace[-1] if run[1].elbo_trace
                   else -np.inf)
    return _fit_once(data, hp, seed, init)


def _fit_once(data: Dataset, hp: HyperParams, seed: int,
              init: VariationalState | None):
    if len(data) == 0:
        raise ValueError("training data must contain at least one event")
    state = init.copy() if init is not None else initial_state(data, hp, seed)

    trace = []
    converged = False
    previous = None
    for sweep_idx in range(hp.max_iters):
        try:
            state = cavi_sweep(state, data, hp)
            value = elbo(state, data, hp)
        except NumericalError as err:
            raise NumericalError(f"sweep {sweep_idx}: {err}") from err
        trace.append(value)
        if previous is not None:
            if abs(value - previous) / (abs(value) + 1e-12) < hp.rel_tol:
                converged = True
                break
        previous = value

    return state, FitReport(elbo_trace=trace, iterations_run=len(trace), converged=converged)
