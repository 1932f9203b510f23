"""Click-probability prediction and top-K ranking from a fitted state."""

from dataclasses import dataclass

import numpy as np

from .model import GaussianPosterior, VariationalState, sigmoid

__all__ = [
    "PredictionScore",
    "predictive_moments",
    "predict_prob",
    "score_candidate",
    "rank_top_k",
    "brand_prior",
    "user_prior",
]


@dataclass
class PredictionScore:
    """Predictive mean/variance of the linear score and the click probability."""

    mu: float
    sigma2: float
    prob: float

    def validate(self):
        if self.sigma2 < 0:
            raise ValueError("predictive variance must be non-negative")
        if not 0.0 < self.prob < 1.0:
            raise ValueError("click probability must lie strictly inside (0, 1)")
        if (self.prob == 0.5) != (self.mu == 0.0):
            raise ValueError("probability 0.5 must coincide with zero mean")


def predictive_moments(x: np.ndarray, brand_post: GaussianPosterior,
                       user_post: GaussianPosterior):
    """Mean and variance of x @ (B + U) under independent Gaussian factors."""
    x = np.asarray(x, dtype=float)
    if brand_post.mean.shape != x.shape or user_post.mean.shape != x.shape:
        raise ValueError(
            f"dimension mismatch: x has shape {x.shape}, posteriors have dims "
            f"{brand_post.dim} and {user_post.dim}"
        )
    mu = float(x @ (brand_post.mean + user_post.mean))
    sigma2 = brand_post.quad(x) + user_post.quad(x)
    return mu, float(sigma2)


def predict_prob(mu: float, sigma2: float) -> float:
    """Expected sigmoid of a Gaussian score via the probit-style shortcut.

    Returns sigmoid(mu / sqrt(1 + pi * sigma2 / 8)); exact at sigma2 = 0.
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    return sigmoid(mu / np.sqrt(1.0 + np.pi * sigma2 / 8.0))


def brand_prior(state: VariationalState) -> GaussianPosterior:
    """Moments used to score an item from a brand unseen in training.

    Mean is the proportion-weighted style mean; covariance is the brand
    noise 1/E[delta_b] * I plus the proportion-weighted style covariances.
    """
    weights = state.theta_gamma / state.theta_gamma.sum()
    mean = weights @ state.style_means()
    var = 1.0 / state.prec_b.mean + float(weights @ state.style_vars())
    return GaussianPosterior(mean, var)


def user_prior(state: VariationalState) -> GaussianPosterior:
    """Moments used for a user unseen in training: zero mean, prior spread."""
    return GaussianPosterior(np.zeros(state.dim), 1.0 / state.prec_u.mean)


def _resolve_user(state, user_id):
    if user_id is not None and 0 <= user_id < state.num_users:
        return state.users[user_id]
    return user_prior(state)


def _resolve_brand(state, brand_id):
    if brand_id is not None and 0 <= brand_id < state.num_brands:
        return state.brands[brand_id]
    return brand_prior(state)


def score_candidate(user_id, x, brand_id, state: VariationalState) -> PredictionScore:
    """Score one (user, item) pair; unknown ids fall back to prior moments."""
    mu, sigma2 = predictive_moments(np.asarray(x, dtype=float),
                                    _resolve_brand(state, brand_id),
                                    _resolve_user(state, user_id))
    return PredictionScore(mu=mu, sigma2=sigma2, prob=predict_prob(mu, sigma2))


def rank_top_k(user_id, candidates, state: VariationalState, k: int):
    """Top-K candidates for a user by click probability.

    ``candidates`` is an iterable of (item_id, x, brand_id).  Unknown brand
    or user ids (None or out of range) are scored with prior moments.  Ties
    are broken by ascending item id, so the output is independent of the
    candidate input order.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    user_post = _resolve_user(state, user_id)
    scored = []
    for item_id, x, brand_id in candidates:
        mu, sigma2 = predictive_moments(np.asarray(x, dtype=float),
                                        _resolve_brand(state, brand_id), user_post)
        scored.append((item_id, predict_prob(mu, sigma2)))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:k]
