"""Domain types and probability math for the hierarchical click model.

The generative story: each latent style is a Gaussian vector centered on a
shared mean ``w``; each brand is a Gaussian vector centered on the style it
belongs to (membership drawn from a Dirichlet-distributed proportion vector);
each user is a Gaussian vector centered at zero.  A click on an item with
features ``x``, brand ``b`` and user ``u`` is Bernoulli with probability
``sigmoid(x @ (B_b + U_u))``.  All four precision parameters carry Gamma
priors.

Everything here is a pure function of its inputs.  The evidence lower bound
(``elbo``) is the exact mean-field objective under the quadratic logistic
bound; its term-by-term derivation lives in ``docs/elbo.md``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import digamma, expit, gammaln

from .linalg import NumericalError, spd_logdet

__all__ = [
    "HyperParams",
    "EventRecord",
    "Dataset",
    "GaussianPosterior",
    "GammaPosterior",
    "Responsibilities",
    "VariationalState",
    "NumericalError",
    "sigmoid",
    "lambda_of_xi",
    "jj_lower_bound",
    "event_log_likelihood",
    "elbo",
    "elbo_terms",
]

_LOG_2PI = float(np.log(2.0 * np.pi))

# Below this point the direct formula for lambda loses precision to
# cancellation; switch to the series 1/8 - xi^2/96 + xi^4/960 - O(xi^6).
_LAMBDA_TAYLOR_CUTOFF = 1e-2


# ---------------------------------------------------------------------------
# scalar math
# ---------------------------------------------------------------------------


def sigmoid(v):
    """Logistic function 1 / (1 + exp(-v)); stable for large |v|."""
    out = expit(v)
    return float(out) if np.ndim(v) == 0 else out


def lambda_of_xi(xi):
    """Curvature coefficient of the quadratic logistic bound.

    Equals (sigmoid(xi) - 1/2) / (2 xi), extended by its limit 1/8 at
    xi = 0.  The function is even, so negative inputs are folded to |xi|.
    Accepts scalars or arrays.
    """
    x = np.abs(np.asarray(xi, dtype=float))
    safe = np.where(x < _LAMBDA_TAYLOR_CUTOFF, 1.0, x)
    lam = (expit(safe) - 0.5) / (2.0 * safe)
    x2 = x * x
    lam = np.where(x < _LAMBDA_TAYLOR_CUTOFF, 0.125 - x2 / 96.0 + x2 * x2 / 960.0, lam)
    return float(lam) if np.ndim(xi) == 0 else lam


def jj_lower_bound(h, xi):
    """Quadratic-exponential lower bound on sigmoid(h), tight at h = +/-xi.

    Returns sigmoid(xi) * exp((h - xi)/2 - lambda(xi) * (h^2 - xi^2)),
    computed in log space.  Even in xi; always <= sigmoid(h).
    """
    h = np.asarray(h, dtype=float)
    x = np.abs(np.asarray(xi, dtype=float))
    lam = lambda_of_xi(x)
    log_sig = -np.logaddexp(0.0, -x)
    log_bound = log_sig + 0.5 * (h - x) - lam * (h * h - x * x)
    out = np.exp(log_bound)
    return float(out) if np.ndim(out) == 0 else out


def event_log_likelihood(e: "EventRecord", brand_mean, user_mean) -> float:
    """Bernoulli log-likelihood of one event at point estimates of the factors.

    h = x @ (brand_mean + user_mean); returns y*log(sigmoid(h)) +
    (1-y)*log(1 - sigmoid(h)) via log1p-style formulas.
    """
    brand_mean = np.asarray(brand_mean, dtype=float)
    user_mean = np.asarray(user_mean, dtype=float)
    if brand_mean.shape != e.x.shape or user_mean.shape != e.x.shape:
        raise ValueError(
            f"dimension mismatch: x has shape {e.x.shape}, means have shapes "
            f"{brand_mean.shape} and {user_mean.shape}"
        )
    h = float(e.x @ (brand_mean + user_mean))
    # log sigmoid(h) = -softplus(-h); log(1 - sigmoid(h)) = -softplus(h)
    return -float(np.logaddexp(0.0, -h)) if e.y == 1 else -float(np.logaddexp(0.0, h))


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass
class HyperParams:
    """Fixed hyper-parameters of the model and the fitting loop.

    gamma0 is the Dirichlet concentration over styles (defaults to 1/S per
    entry); alpha0/beta0 are the shared Gamma shape/rate for the four
    precisions.
    """

    num_styles: int
    feature_dim: int
    gamma0: np.ndarray | None = None
    alpha0: float = 1e-2
    beta0: float = 1e-2
    max_iters: int = 200
    rel_tol: float = 1e-5

    def __post_init__(self):
        if self.num_styles < 1:
            raise ValueError("num_styles must be >= 1")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        if self.gamma0 is None:
            self.gamma0 = np.full(self.num_styles, 1.0 / self.num_styles)
        self.gamma0 = np.asarray(self.gamma0, dtype=float)
        if self.gamma0.shape != (self.num_styles,):
            raise ValueError("gamma0 must have one entry per style")
        if not np.all(self.gamma0 > 0):
            raise ValueError("gamma0 entries must be positive")
        if self.alpha0 <= 0 or self.beta0 <= 0:
            raise ValueError("alpha0 and beta0 must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")


@dataclass
class EventRecord:
    """One observation: item features, brand index, user index, click label."""

    x: np.ndarray
    brand: int
    user: int
    y: int

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim != 1:
            raise ValueError("x must be a 1-d vector")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("x must be finite in every coordinate")
        if self.y not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.y!r}")


@dataclass
class Dataset:
    """An ordered collection of events plus the entity universe sizes.

    ``user_ids`` / ``brand_ids`` optionally record the original string ids
    (index -> id) when the data came from a file.
    """

    events: list
    num_users: int
    num_brands: int
    feature_dim: int
    user_ids: list | None = None
    brand_ids: list | None = None

    def __post_init__(self):
        for t, e in enumerate(self.events):
            if e.x.shape != (self.feature_dim,):
                raise ValueError(f"event {t}: feature length {e.x.size} != {self.feature_dim}")
            if not 0 <= e.brand < self.num_brands:
                raise ValueError(f"event {t}: brand index {e.brand} out of range")
            if not 0 <= e.user < self.num_users:
                raise ValueError(f"event {t}: user index {e.user} out of range")

    def __len__(self) -> int:
        return len(self.events)

    @cached_property
    def X(self) -> np.ndarray:
        """Feature matrix, shape (N, d)."""
        if not self.events:
            return np.zeros((0, self.feature_dim))
        return np.stack([e.x for e in self.events])

    @cached_property
    def users(self) -> np.ndarray:
        return np.array([e.user for e in self.events], dtype=int)

    @cached_property
    def brands(self) -> np.ndarray:
        return np.array([e.brand for e in self.events], dtype=int)

    @cached_property
    def y(self) -> np.ndarray:
        return np.array([e.y for e in self.events], dtype=float)

    @cached_property
    def user_groups(self) -> list:
        """Event indices per user (list of index arrays, length num_users)."""
        groups = [[] for _ in range(self.num_users)]
        for t, e in enumerate(self.events):
            groups[e.user].append(t)
        return [np.array(g, dtype=int) for g in groups]

    @cached_property
    def brand_groups(self) -> list:
        groups = [[] for _ in range(self.num_brands)]
        for t, e in enumerate(self.events):
            groups[e.brand].append(t)
        return [np.array(g, dtype=int) for g in groups]


@dataclass
class GaussianPosterior:
    """Gaussian factor: mean plus either a dense SPD covariance (d, d) or a
    positive scalar c standing for the isotropic covariance c * I."""

    mean: np.ndarray
    cov: object  # (d, d) ndarray or positive scalar

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        if np.ndim(self.cov) == 0:
            self.cov = float(self.cov)
        else:
            self.cov = np.asarray(self.cov, dtype=float)

    @property
    def isotropic(self) -> bool:
        return np.ndim(self.cov) == 0

    @property
    def dim(self) -> int:
        return self.mean.size

    def cov_matrix(self) -> np.ndarray:
        if self.isotropic:
            return self.cov * np.eye(self.dim)
        return self.cov

    def cov_trace(self) -> float:
        if self.isotropic:
            return self.cov * self.dim
        return float(np.trace(self.cov))

    def cov_logdet(self) -> float:
        if self.isotropic:
            return self.dim * float(np.log(self.cov))
        return spd_logdet(self.cov)

    def quad(self, x: np.ndarray) -> float:
        """x @ cov @ x."""
        if self.isotropic:
            return self.cov * float(x @ x)
        return float(x @ self.cov @ x)

    def validate(self):
        if not np.all(np.isfinite(self.mean)):
            raise ValueError("Gaussian mean must be finite")
        if self.isotropic:
            if not self.cov > 0:
                raise ValueError("isotropic covariance scalar must be positive")
            return
        if self.cov.shape != (self.dim, self.dim):
            raise ValueError("covariance shape does not match mean")
        if not np.allclose(self.cov, self.cov.T, atol=1e-8, rtol=1e-8):
            raise ValueError("covariance must be symmetric")
        eigvals = np.linalg.eigvalsh(self.cov)
        if not np.all(eigvals > 0):
            raise ValueError("covariance must be positive definite")


@dataclass
class GammaPosterior:
    """Gamma factor over a precision, in shape/rate parameterization."""

    shape: float
    rate: float

    def __post_init__(self):
        self.shape = float(self.shape)
        self.rate = float(self.rate)

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def mean_log(self) -> float:
        """E[log delta] = digamma(shape) - log(rate)."""
        return float(digamma(self.shape) - np.log(self.rate))

    def entropy(self) -> float:
        a, b = self.shape, self.rate
        return float(a - np.log(b) + gammaln(a) + (1.0 - a) * digamma(a))

    def validate(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError("Gamma shape and rate must be positive")


@dataclass
class Responsibilities:
    """Brand-to-style membership probabilities, rows on the simplex."""

    mu: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)

    def validate(self):
        if self.mu.ndim != 2:
            raise ValueError("responsibilities must be a B x S matrix")
        if np.any(self.mu < -1e-12) or np.any(self.mu > 1.0 + 1e-12):
            raise ValueError("responsibilities must lie in [0, 1]")
        if self.mu.shape[0] > 0 and not np.allclose(self.mu.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("responsibility rows must sum to 1")


@dataclass
class VariationalState:
    """All factor parameters of the mean-field posterior."""

    users: list  # U GaussianPosteriors, dense covariance
    brands: list  # B GaussianPosteriors, dense covariance
    styles: list  # S GaussianPosteriors, isotropic
    w: GaussianPosterior  # isotropic
    theta_gamma: np.ndarray  # (S,) Dirichlet parameters
    resp: Responsibilities  # (B, S)
    prec_u: GammaPosterior
    prec_b: GammaPosterior
    prec_s: GammaPosterior
    prec_w: GammaPosterior
    xi: np.ndarray  # (N,) per-event bound locations, >= 0

    def __post_init__(self):
        self.theta_gamma = np.asarray(self.theta_gamma, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def num_brands(self) -> int:
        return len(self.brands)

    @property
    def num_styles(self) -> int:
        return len(self.styles)

    @property
    def dim(self) -> int:
        return self.w.dim

    # Stacked views used by the vectorized updates and the ELBO.
    def user_means(self) -> np.ndarray:
        if not self.users:
            return np.zeros((0, self.dim))
        return np.stack([g.mean for g in self.users])

    def user_covs(self) -> np.ndarray:
        if not self.users:
            return np.zeros((0, self.dim, self.dim))
        return np.stack([g.cov_matrix() for g in self.users])

    def brand_means(self) -> np.ndarray:
        if not self.brands:
            return np.zeros((0, self.dim))
        return np.stack([g.mean for g in self.brands])

    def brand_covs(self) -> np.ndarray:
        if not self.brands:
            return np.zeros((0, self.dim, self.dim))
        return np.stack([g.cov_matrix() for g in self.brands])

    def style_means(self) -> np.ndarray:
        return np.stack([g.mean for g in self.styles])

    def style_vars(self) -> np.ndarray:
        """Isotropic variance scalar per style."""
        return np.array([g.cov if g.isotropic else float(np.trace(g.cov)) / g.dim
                         for g in self.styles])

    def copy(self) -> "VariationalState":
        return VariationalState(
            users=[GaussianPosterior(g.mean.copy(), np.copy(g.cov) if not g.isotropic else g.cov)
                   for g in self.users],
            brands=[GaussianPosterior(g.mean.copy(), np.copy(g.cov) if not g.isotropic else g.cov)
                    for g in self.brands],
            styles=[GaussianPosterior(g.mean.copy(), g.cov) for g in self.styles],
            w=GaussianPosterior(self.w.mean.copy(), self.w.cov),
            theta_gamma=self.theta_gamma.copy(),
            resp=Responsibilities(self.resp.mu.copy()),
            prec_u=GammaPosterior(self.prec_u.shape, self.prec_u.rate),
            prec_b=GammaPosterior(self.prec_b.shape, self.prec_b.rate),
            prec_s=GammaPosterior(self.prec_s.shape, self.prec_s.rate),
            prec_w=GammaPosterior(self.prec_w.shape, self.prec_w.rate),
            xi=self.xi.copy(),
        )

    def validate(self):
        for g in self.users + self.brands + self.styles + [self.w]:
            g.validate()
        for g in self.styles + [self.w]:
            if not g.isotropic:
                raise ValueError("styles and w must use the isotropic compact form")
        if not np.all(self.theta_gamma > 0):
            raise ValueError("theta_gamma entries must be positive")
        self.resp.validate()
        if self.resp.mu.shape != (self.num_brands, self.num_styles):
            raise ValueError("responsibilities shape must be (num_brands, num_styles)")
        for p in (self.prec_u, self.prec_b, self.prec_s, self.prec_w):
            p.validate()
        if np.any(self.xi < 0) or not np.all(np.isfinite(self.xi)):
            raise ValueError("xi entries must be finite and non-negative")


# ---------------------------------------------------------------------------
# evidence lower bound
# ---------------------------------------------------------------------------


def _dirichlet_entropy(gamma: np.ndarray) -> float:
    total = gamma.sum()
    log_b = float(np.sum(gammaln(gamma)) - gammaln(total))
    return log_b + float((total - gamma.size) * digamma(total)) - float(
        np.sum((gamma - 1.0) * digamma(gamma))
    )


def _gaussian_entropy(logdet: float, d: int) -> float:
    return 0.5 * (d * (1.0 + _LOG_2PI) + logdet)


def elbo_terms(state: VariationalState, data: Dataset, hp: HyperParams) -> dict:
    """Named additive pieces of the evidence lower bound.

    Keys cover the bounded likelihood, one cross-entropy per prior edge of
    the hierarchy, and the entropy of every posterior factor; ``elbo`` is
    their sum.  See docs/elbo.md for the derivation of each expectation.
    """
    d = hp.feature_dim
    mu = state.resp.mu

    e_du, e_db, e_ds, e_dw = (p.mean for p in
                              (state.prec_u, state.prec_b, state.prec_s, state.prec_w))
    eln_du, eln_db, eln_ds, eln_dw = (p.mean_log for p in
                                      (state.prec_u, state.prec_b, state.prec_s, state.prec_w))

    gamma = state.theta_gamma
    eln_theta = digamma(gamma) - digamma(gamma.sum())

    user_means = state.user_means()
    brand_means = state.brand_means()
    style_means = state.style_means()
    style_vars = state.style_vars()
    w_mean = state.w.mean
    w_var = float(state.w.cov)

    user_traces = np.array([g.cov_trace() for g in state.users])
    brand_traces = np.array([g.cov_trace() for g in state.brands])
    user_logdets = np.array([g.cov_logdet() for g in state.users])
    brand_logdets = np.array([g.cov_logdet() for g in state.brands])

    terms = {}

    # Bounded Bernoulli likelihood, expectation under q with xi fixed.
    n = len(data)
    if n != state.xi.size:
        raise ValueError(f"state has {state.xi.size} xi entries for {n} events")
    if n > 0:
        X = data.X
        bm = brand_means[data.brands]
        um = user_means[data.users]
        m = np.einsum("nd,nd->n", X, bm + um)
        bcov = state.brand_covs()[data.brands]
        ucov = state.user_covs()[data.users]
        s2 = np.einsum("nd,nde,ne->n", X, bcov, X) + np.einsum("nd,nde,ne->n", X, ucov, X)
        xi = state.xi
        lam = lambda_of_xi(xi)
        log_sig_xi = -np.logaddexp(0.0, -xi)
        terms["likelihood_bound"] = float(np.sum(
            data.y * m + log_sig_xi - 0.5 * (m + xi) - lam * (m * m + s2 - xi * xi)
        ))
    else:
        terms["likelihood_bound"] = 0.0

    # E[log p(B_i | z_i, S, delta_b)], responsibilities-weighted.
    diff = brand_means[:, None, :] - style_means[None, :, :]
    dist2 = np.einsum("bsd,bsd->bs", diff, diff)
    second_moment = dist2 + brand_traces[:, None] + d * style_vars[None, :]
    terms["brands_given_styles"] = float(np.sum(
        mu * (0.5 * d * (eln_db - _LOG_2PI) - 0.5 * e_db * second_moment)
    ))

    # E[log p(z_i | theta)]
    terms["assignments_given_theta"] = float(np.sum(mu * eln_theta[None, :]))

    # E[log p(S_j | w, delta_s)]
    sw = style_means - w_mean[None, :]
    sq = np.einsum("sd,sd->s", sw, sw) + d * style_vars + d * w_var
    terms["styles_given_w"] = float(np.sum(0.5 * d * (eln_ds - _LOG_2PI) - 0.5 * e_ds * sq))

    # E[log p(theta | gamma0)]
    g0 = hp.gamma0
    terms["theta_prior"] = float(
        gammaln(g0.sum()) - np.sum(gammaln(g0)) + np.sum((g0 - 1.0) * eln_theta)
    )

    # E[log p(U_k | delta_u)]
    usq = np.einsum("ud,ud->u", user_means, user_means) + user_traces
    terms["users_prior"] = float(np.sum(0.5 * d * (eln_du - _LOG_2PI) - 0.5 * e_du * usq))

    # E[log p(w | delta_w)]
    terms["w_prior"] = float(
        0.5 * d * (eln_dw - _LOG_2PI) - 0.5 * e_dw * (w_mean @ w_mean + d * w_var)
    )

    # E[log p(delta_* | alpha0, beta0)] for the four precisions.
    a0, b0 = hp.alpha0, hp.beta0
    terms["precision_priors"] = float(sum(
        a0 * np.log(b0) - gammaln(a0) + (a0 - 1.0) * eln - b0 * e
        for eln, e in ((eln_du, e_du), (eln_db, e_db), (eln_ds, e_ds), (eln_dw, e_dw))
    ))

    # Entropies of every q factor.
    terms["entropy_users"] = float(sum(_gaussian_entropy(ld, d) for ld in user_logdets))
    terms["entropy_brands"] = float(sum(_gaussian_entropy(ld, d) for ld in brand_logdets))
    terms["entropy_styles"] = float(sum(
        _gaussian_entropy(d * np.log(v), d) for v in style_vars
    ))
    terms["entropy_w"] = _gaussian_entropy(d * np.log(w_var), d)
    terms["entropy_theta"] = _dirichlet_entropy(gamma)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(mu > 0, mu * np.log(np.where(mu > 0, mu, 1.0)), 0.0)
    terms["entropy_assignments"] = -float(np.sum(plogp))
    terms["entropy_precisions"] = float(sum(
        p.entropy() for p in (state.prec_u, state.prec_b, state.prec_s, state.prec_w)
    ))

    return terms


def elbo(state: VariationalState, data: Dataset, hp: HyperParams) -> float:
    """Evidence lower bound of the variational posterior on the data.

    Exact expectation of the bounded joint log-density minus the entropy of
    q; the quantity the coordinate-ascent sweep monotonically increases.
    """
    value = float(sum(elbo_terms(state, data, hp).values()))
    if not np.isfinite(value):
        raise NumericalError("ELBO evaluated to a non-finite value")
    return value
