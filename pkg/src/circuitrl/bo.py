"""Gaussian-process Bayesian-optimization baseline for the host-aware
expression task.

The GP prior is informed by the mechanistic simulator: latent draws from the
prior produce induction-expression curves whose pooled samples fix the prior
mean and, via marginal-likelihood maximization, the RBF kernel
hyperparameters. Episodes then run a five-step protocol: one uniform random
probe, three acquisition-driven steps using a hedged choice among probability
of improvement, expected improvement, and the maximization mirror of the
lower confidence bound, and a final exploit step at the posterior-mean
argmax.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.stats import norm

from .core import LatentParams, PriorSpec, rng_from_key, sample_prior

ACQUISITIONS = ("PI", "EI", "LCB")


class GpFitError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Marginal likelihood and gradients
# ---------------------------------------------------------------------------


def _kernel(x1: np.ndarray, x2: np.ndarray, sf2: float, ls: float) -> np.ndarray:
    d = x1[:, None] - x2[None, :]
    return sf2 * np.exp(-0.5 * (d / ls) ** 2)


def log_marginal_likelihood(x: np.ndarray, y: np.ndarray,
                            log_params: np.ndarray,
                            with_grad: bool = False):
    """Log marginal likelihood of a zero-mean RBF GP and its gradient with
    respect to (log sf2, log ls, log sn2)."""
    sf2, ls, sn2 = np.exp(log_params)
    n = x.size
    K = _kernel(x, x, sf2, ls) + (sn2 + 1e-12) * np.eye(n)
    try:
        L = cholesky(K, lower=True)
    except np.linalg.LinAlgError:
        return (-np.inf, np.zeros(3)) if with_grad else -np.inf
    alpha = cho_solve((L, True), y)
    lml = -0.5 * float(y @ alpha) - float(np.log(np.diag(L)).sum()) \
        - 0.5 * n * np.log(2 * np.pi)
    if not with_grad:
        return lml
    Kinv = cho_solve((L, True), np.eye(n))
    A = np.outer(alpha, alpha) - Kinv
    d = x[:, None] - x[None, :]
    Krbf = _kernel(x, x, sf2, ls)
    dK_dlog_sf2 = Krbf
    dK_dlog_ls = Krbf * (d / ls) ** 2
    dK_dlog_sn2 = sn2 * np.eye(n)
    grad = np.array([0.5 * float((A * dK).sum())
                     for dK in (dK_dlog_sf2, dK_dlog_ls, dK_dlog_sn2)])
    return lml, grad


@dataclass
class GpModel:
    """RBF-kernel GP with constant prior mean over the normalized action axis."""

    sf2: float
    ls: float
    sn2: float
    mu0: float
    x: np.ndarray = field(default_factory=lambda: np.empty(0))
    y: np.ndarray = field(default_factory=lambda: np.empty(0))
    _chol: tuple | None = None

    def with_data(self, x: np.ndarray, y: np.ndarray) -> "GpModel":
        m = GpModel(self.sf2, self.ls, self.sn2, self.mu0,
                    np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        m._factorize()
        return m

    def _factorize(self) -> None:
        n = self.x.size
        if n == 0:
            self._chol = None
            return
        jitter = 1e-10
        K = _kernel(self.x, self.x, self.sf2, self.ls) + self.sn2 * np.eye(n)
        for _ in range(8):
            try:
                L = cholesky(K + jitter * np.eye(n), lower=True)
                self._chol = (L, solve_triangular(L, self.y - self.mu0, lower=True))
                return
            except np.linalg.LinAlgError:
                jitter *= 10.0
        raise GpFitError("posterior covariance not positive definite even with jitter")

    def posterior(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        if self.x.size == 0:
            return np.full(xs.shape, self.mu0), np.full(xs.shape, self.sf2)
        L, v = self._chol
        ks = _kernel(self.x, xs, self.sf2, self.ls)
        w = solve_triangular(L, ks, lower=True)
        mean = self.mu0 + w.T @ v
        var = self.sf2 - (w ** 2).sum(axis=0)
        return mean, np.maximum(var, 0.0)

    def to_json(self) -> dict:
        return {"sf2": self.sf2, "ls": self.ls, "sn2": self.sn2, "mu0": self.mu0}

    @staticmethod
    def from_json(obj: Mapping) -> "GpModel":
        return GpModel(sf2=float(obj["sf2"]), ls=float(obj["ls"]),
                       sn2=float(obj["sn2"]), mu0=float(obj["mu0"]))


def fit_gp_prior(prior: PriorSpec, simulate_curve: Callable[[LatentParams, np.ndarray], np.ndarray],
                 rng: np.random.Generator, n_curves: int = 100, grid_size: int = 20,
                 n_restarts: int = 8) -> GpModel:
    """Simulator-informed hyperparameters from pooled induction-expression curves.

    ``simulate_curve(theta, xs)`` maps normalized actions in [-1, 1] to
    expression values. The empirical mean of the pooled observations becomes
    the GP prior mean; the RBF hyperparameters maximize the log marginal
    likelihood over the mean-subtracted pool via multi-start L-BFGS.
    """
    xs = np.linspace(-1.0, 1.0, grid_size)
    X, Y = [], []
    for _ in range(n_curves):
        theta = sample_prior(prior, rng)
        Y.append(simulate_curve(theta, xs))
        X.append(xs)
    x = np.concatenate(X)
    y = np.concatenate(Y)
    mu0 = float(y.mean())
    yc = y - mu0

    var = float(yc.var()) or 1.0
    best = None
    best_lml = -np.inf
    for k in range(n_restarts):
        init = np.log([var * float(rng.uniform(0.1, 10.0)),
                       float(rng.uniform(0.05, 2.0)),
                       var * float(rng.uniform(1e-3, 1.0))])
        res = minimize(lambda p: tuple(-v for v in
                                       log_marginal_likelihood(x, yc, p, with_grad=True)),
                       init, jac=True, method="L-BFGS-B",
                       bounds=[(-20, 25)] * 3, options={"maxiter": 80})
        lml = -float(res.fun)
        if np.isfinite(lml) and lml > best_lml:
            best_lml = lml
            best = res.x
    if best is None:
        raise GpFitError("log marginal likelihood non-finite at every restart")
    sf2, ls, sn2 = np.exp(best)
    return GpModel(sf2=float(sf2), ls=float(ls), sn2=float(sn2), mu0=mu0)


# ---------------------------------------------------------------------------
# Acquisition functions (maximization convention)
# ---------------------------------------------------------------------------


def acquisitions(mean: np.ndarray, var: np.ndarray, best_so_far: float,
                 kappa: float = 1.96) -> dict[str, np.ndarray]:
    mean = np.asarray(mean, dtype=float)
    sd = np.sqrt(np.maximum(np.asarray(var, dtype=float), 0.0))
    improve = mean - best_so_far
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, improve / np.where(sd > 0, sd, 1.0), 0.0)
    pi = np.where(sd > 0, norm.cdf(z), (improve > 0).astype(float))
    ei = np.where(sd > 0, improve * norm.cdf(z) + sd * norm.pdf(z),
                  np.maximum(improve, 0.0))
    ucb = mean + kappa * sd   # maximization mirror of the lower confidence bound
    return {"PI": pi, "EI": ei, "LCB": ucb}


@dataclass
class HedgeState:
    """gp_hedge-style probabilistic acquisition selection."""

    gains: dict[str, float] = field(default_factory=lambda: {a: 0.0 for a in ACQUISITIONS})
    eta: float = 1.0

    def probabilities(self) -> np.ndarray:
        g = np.array([self.gains[a] for a in ACQUISITIONS])
        e = np.exp(self.eta * (g - g.max()))
        return e / e.sum()

    def select(self, rng: np.random.Generator) -> str:
        p = self.probabilities()
        return ACQUISITIONS[int(rng.choice(len(ACQUISITIONS), p=p))]

    def update(self, rewards: Mapping[str, float]) -> None:
        for a in ACQUISITIONS:
            self.gains[a] += float(rewards[a])


# ---------------------------------------------------------------------------
# Episodes
# ---------------------------------------------------------------------------


@dataclass
class BoEpisode:
    actions: np.ndarray           # normalized actions, length T
    outcomes: np.ndarray          # observed objective values, length T
    acquisition_log: list[str]    # which rule picked each action

    def to_json(self) -> dict:
        return {"actions": self.actions.tolist(), "outcomes": self.outcomes.tolist(),
                "acquisitions": self.acquisition_log}


def run_bo_episode(model: GpModel, objective: Callable[[float], float],
                   rng: np.random.Generator, horizon: int = 5,
                   grid_size: int = 512,
                   force_acquisition: str | None = None) -> BoEpisode:
    """Five-step protocol: uniform probe, hedged acquisition steps, posterior-
    mean exploit. Hyperparameters stay frozen; only the data grows."""
    candidates = np.linspace(-1.0, 1.0, grid_size)
    hedge = HedgeState()
    xs: list[float] = []
    ys: list[float] = []
    log: list[str] = []

    for t in range(horizon):
        if t == 0:
            x_t = float(rng.uniform(-1.0, 1.0))
            log.append("random")
        elif t == horizon - 1:
            gp = model.with_data(np.array(xs), np.array(ys))
            mean, _ = gp.posterior(candidates)
            x_t = float(candidates[int(np.argmax(mean))])
            log.append("posterior_mean")
        else:
            gp = model.with_data(np.array(xs), np.array(ys))
            mean, var = gp.posterior(candidates)
            best = max(ys)
            scores = acquisitions(mean, var, best)
            proposals = {a: float(candidates[int(np.argmax(s))])
                         for a, s in scores.items()}
            chosen = force_acquisition or hedge.select(rng)
            x_t = proposals[chosen]
            log.append(chosen)
            y_t = float(objective(x_t))
            xs.append(x_t)
            ys.append(y_t)
            # Hedge gains: posterior mean (after updating on the new point)
            # at each acquisition's own proposal.
            gp = model.with_data(np.array(xs), np.array(ys))
            mu_props, _ = gp.posterior(np.array([proposals[a] for a in ACQUISITIONS]))
            hedge.update({a: mu_props[i] for i, a in enumerate(ACQUISITIONS)})
            continue
        y_t = float(objective(x_t))
        xs.append(x_t)
        ys.append(y_t)

    return BoEpisode(actions=np.array(xs), outcomes=np.array(ys), acquisition_log=log)


def save_gp(model: GpModel, path) -> None:
    with open(path, "w") as fh:
        json.dump({"kind": "gp_prior", "version": 1, **model.to_json()}, fh)


def load_gp(path) -> GpModel:
    with open(path) as fh:
        obj = json.load(fh)
    if obj.get("kind") != "gp_prior":
        raise ValueError(f"{path} is not a GP prior artifact")
    return GpModel.from_json(obj)
