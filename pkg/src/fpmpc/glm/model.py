"""Generalized linear models: parameters, link inverses and metrics."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from .. import approx
from ..errors import InvalidArgument, ShapeError
from ..runtime import run_sync

LINKS = ("identity", "logit", "probit", "log", "multinomial")

# learning rates that reproduce the synthetic benchmarks
DEFAULT_LR = {"identity": 3e-2, "logit": 3.0, "probit": 3.0, "log": 3e-3, "multinomial": 3.0}
SERIES_FOR_LINK = {"logit": "logistic", "probit": "probit"}


def check_link(link: str) -> str:
    if link not in LINKS:
        raise InvalidArgument(f"unknown link {link!r}; choose from {LINKS}")
    return link


@dataclass
class Dataset:
    """Design matrix ``A`` (samples x covariates) and targets ``t``.

    Targets are reals for the identity link, 0/1 labels for logit and
    probit, counts for the log link and integer class ids for multinomial.
    """

    A: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(-1)
        if self.A.ndim != 2:
            raise ShapeError(f"design matrix must be 2-D, got {self.A.shape}")
        if self.A.shape[0] != self.t.shape[0]:
            raise ShapeError(f"{self.A.shape[0]} rows but {self.t.shape[0]} targets")

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def targets_matrix(self, link: str, k: int = 1) -> np.ndarray:
        """Targets as an ``m x k`` matrix (one-hot rows for multinomial)."""
        if link == "multinomial":
            ids = self.t.astype(int)
            if np.any(ids != self.t) or ids.min() < 0 or ids.max() >= k:
                raise InvalidArgument(f"multinomial targets must be class ids in [0, {k})")
            return np.eye(k)[ids]
        return self.t.reshape(-1, 1)


@dataclass
class GlmModel:
    """Weights ``w`` (covariates x classes) and a bias ``c`` per class.

    Binary and scalar links use a single class column.
    """

    link: str
    w: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        check_link(self.link)
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.w.ndim == 1:
            self.w = self.w.reshape(-1, 1)
        self.c = np.asarray(self.c, dtype=np.float64).reshape(1, -1)
        if self.c.shape[1] != self.w.shape[1]:
            raise ShapeError(f"bias has {self.c.shape[1]} classes, weights have {self.w.shape[1]}")

    @classmethod
    def zeros(cls, link: str, n: int, k: int = 1) -> "GlmModel":
        if link != "multinomial" and k != 1:
            raise InvalidArgument(f"{link} link has a single output column")
        return cls(link, np.zeros((n, k)), np.zeros((1, k)))

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def k(self) -> int:
        return self.w.shape[1]

    def theta(self, A) -> np.ndarray:
        return np.asarray(A, dtype=np.float64) @ self.w + self.c

    def direction(self) -> np.ndarray:
        """Weight vector compared against the ideal one.

        For two-class multinomial models this is the difference of the class
        columns, which plays the role of the binary weight vector.
        """
        if self.k == 1:
            return self.w[:, 0]
        if self.k == 2:
            return self.w[:, 1] - self.w[:, 0]
        raise InvalidArgument("direction is defined for one or two classes")

    def to_checkpoint(self, config=None, loss_history=()) -> dict:
        return {
            "link": self.link,
            "n": self.n,
            "k": self.k,
            "w": [float(v) for v in self.w.ravel()],
            "c": [float(v) for v in self.c.ravel()],
            "config": {} if config is None else config.to_dict(),
            "loss_history": [float(v) for v in loss_history],
        }

    @classmethod
    def from_checkpoint(cls, d: dict) -> "GlmModel":
        n, k = int(d["n"]), int(d["k"])
        return cls(d["link"], np.asarray(d["w"], dtype=np.float64).reshape(n, k), np.asarray(d["c"]))

    def save(self, path, config=None, loss_history=()):
        with open(path, "w") as fh:
            json.dump(self.to_checkpoint(config, loss_history), fh)

    @classmethod
    def load(cls, path) -> "GlmModel":
        with open(path) as fh:
            return cls.from_checkpoint(json.load(fh))


# --------------------------------------------------------------------------
# link inverses


async def link_inverse_kernel(ops, link: str, theta, clamp: bool = True):
    """Mean response for linear predictor ``theta`` (any ops back end).

    With ``clamp`` the logit and probit predictors are first clipped to the
    series interval, outside of which the polynomial diverges; the CDFs are
    within 3e-9 of 0 or 1 there.
    """
    if link == "identity":
        return theta
    if link in SERIES_FOR_LINK:
        series = approx.preset(SERIES_FOR_LINK[link])
        if clamp:
            theta = await approx.clamp_kernel(ops, theta, series.z)
        return 0.5 + await approx.cheb_kernel(ops, series, theta)
    if link == "log":
        return await approx.exp_kernel(ops, theta)
    if link == "multinomial":
        return await approx.softmax_kernel(ops, theta)
    raise InvalidArgument(f"unknown link {link!r}")


def link_inverse(link: str, theta) -> np.ndarray:
    """Public evaluation with the same approximations used in training.

    >>> float(link_inverse("logit", np.array(0.0)))
    0.5
    """
    check_link(link)
    theta = np.asarray(theta, dtype=np.float64)
    if link in SERIES_FOR_LINK:
        z = approx.preset(SERIES_FOR_LINK[link]).z
        if theta.size and np.max(np.abs(theta)) > z:
            raise approx.DomainError(f"|theta| exceeds the series interval [-{z}, {z}]")
    return run_sync(link_inverse_kernel(approx._PUBLIC, link, theta, clamp=False))


def link_inverse_exact(link: str, theta) -> np.ndarray:
    """Reference link inverse from library special functions."""
    theta = np.asarray(theta, dtype=np.float64)
    if link == "identity":
        return theta
    if link == "logit":
        return special.expit(theta)
    if link == "probit":
        return special.ndtr(theta)
    if link == "log":
        return np.exp(theta)
    if link == "multinomial":
        return special.softmax(theta, axis=-1)
    raise InvalidArgument(f"unknown link {link!r}")


# --------------------------------------------------------------------------
# metrics


def log_likelihood(model: GlmModel, data: Dataset) -> float:
    """Average per-sample log-likelihood with exact link functions.

    The identity link returns ``-||A w + c - t||^2 / m`` (Gaussian up to the
    constant and the factor 2).
    """
    theta = model.theta(data.A)
    t = data.t
    link = model.link
    if link == "identity":
        return -float(np.mean((theta[:, 0] - t) ** 2))
    if link in ("logit", "probit"):
        th = theta[:, 0]
        if link == "logit":
            # log sigma(x) = -log(1 + exp(-x)), stable for large |x|
            lp, lq = -np.logaddexp(0.0, -th), -np.logaddexp(0.0, th)
        else:
            lp, lq = special.log_ndtr(th), special.log_ndtr(-th)
        return float(np.mean(t * lp + (1.0 - t) * lq))
    if link == "log":
        th = theta[:, 0]
        return float(np.mean(t * th - np.exp(th) - special.gammaln(t + 1.0)))
    logp = special.log_softmax(theta, axis=1)
    return float(np.mean(logp[np.arange(data.m), t.astype(int)]))


def score(model: GlmModel, data: Dataset) -> tuple:
    """Gradient of the average log-likelihood in ``(w, c)`` with exact links.

    Every canonical link gives ``A^T (T - mu) / m``.  For the identity link
    this is the gradient of ``-||A w + c - t||^2 / (2 m)``, half the
    reported loss.  The probit gradient has an extra density ratio; the
    value returned for probit is the logistic-form surrogate that training
    follows.
    """
    T = data.targets_matrix(model.link, model.k)
    mu = link_inverse_exact(model.link, model.theta(data.A))
    if model.link != "multinomial":
        mu = mu.reshape(-1, 1)
    r = (T - mu) / data.m
    return data.A.T @ r, r.sum(axis=0, keepdims=True)


def predict(model: GlmModel, A) -> np.ndarray:
    theta = model.theta(A)
    if model.link == "multinomial":
        return np.argmax(theta, axis=1).astype(np.float64)
    mean = link_inverse_exact(model.link, theta[:, 0])
    if model.link in ("logit", "probit"):
        return (mean >= 0.5).astype(np.float64)
    return mean


def metrics(model: GlmModel, data: Dataset) -> dict:
    """Average negative log-likelihood plus accuracy or residual as applicable."""
    ll = log_likelihood(model, data)
    out = {"avg_neg_log_likelihood": -ll, "avg_log_likelihood": ll}
    if model.link in ("logit", "probit", "multinomial"):
        out["accuracy"] = float(np.mean(predict(model, data.A) == data.t))
    if model.link == "identity":
        out["residual"] = float(np.linalg.norm(model.theta(data.A)[:, 0] - data.t))
    return out


def discrepancy(x, w) -> float:
    """``|| x / ||x|| - w / ||w|| ||``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    w = np.asarray(w, dtype=np.float64).ravel()
    nx, nw = np.linalg.norm(x), np.linalg.norm(w)
    if nx == 0 or nw == 0:
        return float("nan")
    return float(np.linalg.norm(x / nx - w / nw))


@dataclass
class TrainConfig:
    """SGD settings; ``for_link`` fills in the benchmark learning rate."""

    learning_rate: float
    minibatch: int = 8
    iterations: int = 10_000
    weight_decay: float = 0.0
    mode: str = "public"
    gamma: float = 1e5
    seed: int = 0
    n_parties: int = 2
    record_every: int = 100
    clamp: bool = True
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidArgument("learning rate must be positive")
        if self.minibatch < 1 or self.iterations < 0:
            raise InvalidArgument("need minibatch >= 1 and iterations >= 0")
        if self.weight_decay < 0:
            raise InvalidArgument("weight decay must be nonnegative")
        if self.mode not in ("public", "private"):
            raise InvalidArgument(f"mode must be public or private, got {self.mode!r}")
        if not self.gamma > 1:
            raise InvalidArgument("gamma must exceed 1")
        if self.n_parties < 2:
            raise InvalidArgument("need at least two parties")

    @classmethod
    def for_link(cls, link: str, **overrides) -> "TrainConfig":
        check_link(link)
        overrides.setdefault("learning_rate", DEFAULT_LR[link])
        if link == "multinomial":
            overrides.setdefault("weight_decay", 1e-3)
        return cls(**overrides)

    def to_dict(self) -> dict:
        return asdict(self)
