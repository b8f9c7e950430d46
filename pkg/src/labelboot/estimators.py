"""Multinomial logistic regression and external probability ingestion.

The model uses the last class as reference: class ``K`` has linear
predictor 0 and the coefficient matrix has shape ``(K - 1, p + 1)`` with
the intercept in column 0.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import logsumexp, softmax

from .core import ClassProbabilities, FeatureMatrix, LabeledDataset, LabelSpace
from .errors import (
    DegenerateDesign,
    DimensionMismatch,
    EmptyClass,
    NonConvergence,
    ParseError,
    RowSumError,
    ValidationError,
)

INGEST_TOL = 1e-6


@dataclass(frozen=True)
class Penalty:
    """Coefficient penalty applied on the standardized scale.

    ``kind`` is one of ``none``, ``ridge``, ``lasso``, ``elastic_net``. The
    elastic-net term is ``lam * (mix * |b|_1 + (1 - mix) / 2 * |b|_2^2)``;
    ridge is ``lam / 2 * |b|_2^2`` and lasso ``lam * |b|_1``. Intercepts
    are never penalized.
    """

    kind: str = "none"
    lam: float = 0.0
    mix: float = 1.0

    def __post_init__(self):
        if self.kind not in ("none", "ridge", "lasso", "elastic_net"):
            raise ValidationError(f"unknown penalty {self.kind!r}")
        if self.lam < 0:
            raise ValidationError("penalty strength must be >= 0")
        if not 0.0 <= self.mix <= 1.0:
            raise ValidationError("elastic-net mix must lie in [0, 1]")
        if self.kind == "lasso":
            object.__setattr__(self, "mix", 1.0)
        elif self.kind == "ridge":
            object.__setattr__(self, "mix", 0.0)

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def ridge(cls, lam):
        return cls("ridge", lam)

    @classmethod
    def lasso(cls, lam):
        return cls("lasso", lam)

    @classmethod
    def elastic_net(cls, lam, mix):
        return cls("elastic_net", lam, mix)

    @property
    def l1(self):
        return 0.0 if self.kind == "none" else self.lam * self.mix

    @property
    def l2(self):
        return 0.0 if self.kind == "none" else self.lam * (1.0 - self.mix)

    def to_dict(self):
        return {"kind": self.kind, "lam": self.lam, "mix": self.mix}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], float(d.get("lam", 0.0)), float(d.get("mix", 1.0)))


@dataclass(frozen=True)
class OptConfig:
    tol: float = 1e-8
    max_iter: int = 500
    raise_on_failure: bool = True


@dataclass(frozen=True)
class FitMeta:
    iterations: int
    objective: float
    grad_norm: float
    converged: bool
    trace: tuple = field(default=(), repr=False)


@dataclass(frozen=True, eq=False)
class MultinomialModel:
    coefficients: np.ndarray
    penalty: Penalty
    fit_meta: Optional[FitMeta] = None
    feature_names: tuple = ()

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float, ndmin=2)
        if not np.all(np.isfinite(c)):
            raise ValidationError("non-finite coefficients")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def k(self):
        return self.coefficients.shape[0] + 1

    @property
    def p(self):
        return self.coefficients.shape[1] - 1

    def __eq__(self, other):
        return (
            isinstance(other, MultinomialModel)
            and np.array_equal(self.coefficients, other.coefficients)
            and self.penalty == other.penalty
            and self.feature_names == other.feature_names
        )

    def to_dict(self):
        meta = self.fit_meta
        return {
            "coefficients": self.coefficients.tolist(),
            "penalty": self.penalty.to_dict(),
            "feature_names": list(self.feature_names),
            "fit_meta": None if meta is None else {
                "iterations": meta.iterations,
                "objective": meta.objective,
                "grad_norm": meta.grad_norm,
                "converged": meta.converged,
            },
        }

    @classmethod
    def from_dict(cls, d):
        m = d.get("fit_meta")
        meta = None if m is None else FitMeta(int(m["iterations"]), float(m["objective"]),
                                              float(m["grad_norm"]), bool(m["converged"]))
        return cls(np.array(d["coefficients"], dtype=float), Penalty.from_dict(d["penalty"]),
                   meta, tuple(d.get("feature_names", ())))


def _design(X):
    X = np.asarray(X, dtype=float)
    return np.hstack([np.ones((X.shape[0], 1)), X])


def _eta(coef, Xd):
    eta = Xd @ coef.T
    return np.hstack([eta, np.zeros((Xd.shape[0], 1))])


def log_likelihood(coef, X, labels):
    """Mean multinomial log-likelihood; ``labels`` are 1-based."""
    Xd = _design(X)
    eta = _eta(np.asarray(coef, dtype=float), Xd)
    y = np.asarray(labels, dtype=int) - 1
    return float(np.mean(eta[np.arange(len(y)), y] - logsumexp(eta, axis=1)))


def log_likelihood_grad(coef, X, labels):
    """Gradient of :func:`log_likelihood` with respect to ``coef``."""
    coef = np.asarray(coef, dtype=float)
    Xd = _design(X)
    P = softmax(_eta(coef, Xd), axis=1)
    Y = np.eye(coef.shape[0] + 1)[np.asarray(labels, dtype=int) - 1]
    return (Y - P)[:, :-1].T @ Xd / Xd.shape[0]


class _Objective:
    """Penalized mean negative log-likelihood on a fixed design."""

    def __init__(self, Xd, y, k, l1, l2):
        self.Xd, self.y, self.k = Xd, y, k
        self.n = Xd.shape[0]
        self.Y = np.eye(k)[y]
        self.l1, self.l2 = l1, l2

    def smooth(self, B):
        eta = _eta(B, self.Xd)
        lse = logsumexp(eta, axis=1)
        nll = np.mean(lse - eta[np.arange(self.n), self.y])
        return nll + 0.5 * self.l2 * np.sum(B[:, 1:] ** 2), eta, lse

    def value(self, B):
        return self.smooth(B)[0] + self.l1 * np.sum(np.abs(B[:, 1:]))

    def grad(self, B, eta=None, lse=None):
        if eta is None:
            eta = _eta(B, self.Xd)
            lse = logsumexp(eta, axis=1)
        P = np.exp(eta - lse[:, None])
        G = (P - self.Y)[:, :-1].T @ self.Xd / self.n
        G[:, 1:] += self.l2 * B[:, 1:]
        return G, P

    def hessian(self, P):
        k1, q = self.k - 1, self.Xd.shape[1]
        H = np.empty((k1 * q, k1 * q))
        Pk = P[:, :k1]
        for a in range(k1):
            for b in range(a, k1):
                w = Pk[:, a] * ((a == b) - Pk[:, b])
                block = (self.Xd * w[:, None]).T @ self.Xd / self.n
                H[a * q:(a + 1) * q, b * q:(b + 1) * q] = block
                H[b * q:(b + 1) * q, a * q:(a + 1) * q] = block.T
        if self.l2:
            for a in range(k1):
                idx = a * q + np.arange(1, q)
                H[idx, idx] += self.l2
        return H

    def kkt(self, B, G):
        """Minimum-norm subgradient max-norm of the full objective."""
        if not self.l1:
            return float(np.max(np.abs(G))) if G.size else 0.0
        R = G.copy()
        coef = B[:, 1:]
        g = G[:, 1:]
        nz = coef != 0
        R[:, 1:] = np.where(nz, g + self.l1 * np.sign(coef),
                            np.sign(g) * np.maximum(np.abs(g) - self.l1, 0.0))
        return float(np.max(np.abs(R)))


QUADRATIC_DECREMENT = 1e-12


def _newton(obj, B, cfg, measure=None):
    measure = measure or obj.kkt
    trace = []
    f, eta, lse = obj.smooth(B)
    trace.append(f)
    it = 0
    G, P = obj.grad(B, eta, lse)
    gnorm = measure(B, G)
    while gnorm > cfg.tol and it < cfg.max_iter:
        H = obj.hessian(P)
        g = G.ravel()
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        decrement = float(g @ step)
        if not np.isfinite(decrement) or decrement <= 0:
            step, decrement = g, float(g @ g)
        t = 1.0
        # Inside the quadratic region the objective change is below rounding,
        # so a line search cannot judge the step; take it whole.
        local = decrement < QUADRATIC_DECREMENT * max(1.0, abs(f))
        while True:
            Bn = B - t * step.reshape(B.shape)
            fn, eta_n, lse_n = obj.smooth(Bn)
            if local or fn <= f - 1e-4 * t * decrement or t < 1e-12:
                break
            t *= 0.5
        it += 1
        if fn > f + (QUADRATIC_DECREMENT * max(1.0, abs(f)) if local else 0.0):
            # Rounding-level stall: keep the better iterate.
            break
        B, f, eta, lse = Bn, fn, eta_n, lse_n
        trace.append(f)
        G, P = obj.grad(B, eta, lse)
        gnorm = measure(B, G)
    return B, it, trace, gnorm


def _soft(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _prox_grad(obj, B, cfg):
    """Monotone FISTA with a fixed 1/L step."""
    L = 0.5 * np.linalg.eigvalsh(obj.Xd.T @ obj.Xd / obj.n)[-1] + obj.l2
    step = 1.0 / L

    def prox(Z):
        Z = Z.copy()
        Z[:, 1:] = _soft(Z[:, 1:], step * obj.l1)
        return Z

    F = obj.value(B)
    trace = [F]
    Yk, t = B.copy(), 1.0
    G, _ = obj.grad(B)
    gnorm = obj.kkt(B, G)
    it = 0
    while gnorm > cfg.tol and it < cfg.max_iter:
        Gy, _ = obj.grad(Yk)
        Z = prox(Yk - step * Gy)
        Fz = obj.value(Z)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if Fz <= F:
            Bn, Fn = Z, Fz
        else:
            Bn, Fn = B, F
        Yk = Bn + (t / t_next) * (Z - Bn) + ((t - 1.0) / t_next) * (Bn - B)
        if Fz > F:
            # Adaptive restart once momentum stops paying.
            t_next = 1.0
            Yk = Bn.copy()
        B, F, t = Bn, Fn, t_next
        trace.append(F)
        it += 1
        G, _ = obj.grad(B)
        gnorm = obj.kkt(B, G)
    return B, it, trace, gnorm


def fit_multinomial(ds: LabeledDataset, penalty: Optional[Penalty] = None,
                    opt_config: Optional[OptConfig] = None, k: Optional[int] = None) -> MultinomialModel:
    """Maximize the (penalized) multinomial log-likelihood.

    Newton with Armijo backtracking handles the unpenalized and ridge cases;
    lasso and elastic-net use monotone accelerated proximal gradient.
    Columns are centered and scaled internally. For unpenalized fits that
    is a pure reparametrization; for penalized fits the penalty acts on the
    standardized coefficients. Coefficients are always reported on the raw
    feature scale, and unpenalized convergence is judged on the raw-scale
    gradient. A column whose spread is tiny next to its mean (say mean 1e4,
    sd 1) makes that gradient noisy at the 1e-8 level from rounding alone,
    and such a fit reports non-convergence.
    """
    penalty = penalty or Penalty.none()
    cfg = opt_config or OptConfig()
    X = np.asarray(ds.features.values, dtype=float)
    n, p = X.shape
    labels = np.asarray(ds.labels, dtype=int)
    k = int(k or labels.max())
    counts = np.bincount(labels - 1, minlength=k)
    if np.any(counts == 0):
        raise EmptyClass(f"classes without observations: {(np.nonzero(counts == 0)[0] + 1).tolist()}")

    center = X.mean(axis=0) if n else np.zeros(p)
    scale = X.std(axis=0) if n else np.ones(p)
    const = scale == 0
    if penalty.kind == "none":
        if n <= p:
            raise DegenerateDesign(f"n={n} does not exceed p={p}")
        if np.any(const):
            names = [ds.features.names[j] for j in np.nonzero(const)[0]]
            raise DegenerateDesign(f"constant columns without penalty: {names}")
    scale = np.where(const, 1.0, scale)
    Xs = (X - center) / scale

    y = labels - 1
    obj = _Objective(_design(Xs), y, k, penalty.l1, penalty.l2)
    B0 = np.zeros((k - 1, p + 1))
    B0[:, 0] = np.log(counts[:-1] / counts[-1])
    if penalty.l1 > 0:
        Bs, it, trace, gnorm = _prox_grad(obj, B0, cfg)
    elif penalty.kind == "none":
        def raw_gradient(B, G):
            # Chain rule back to raw-scale coefficients.
            R = G.copy()
            R[:, 1:] = G[:, 1:] * scale + G[:, :1] * center
            return float(np.max(np.abs(R)))
        Bs, it, trace, gnorm = _newton(obj, B0, cfg, raw_gradient)
    else:
        Bs, it, trace, gnorm = _newton(obj, B0, cfg)

    coef = np.empty_like(Bs)
    coef[:, 1:] = Bs[:, 1:] / scale
    coef[:, 0] = Bs[:, 0] - coef[:, 1:] @ center
    if penalty.kind == "none":
        # Convergence is judged on the raw-scale gradient the caller sees.
        gnorm = float(np.max(np.abs(log_likelihood_grad(coef, X, labels)))) if coef.size else 0.0
    converged = gnorm <= cfg.tol
    if not converged and cfg.raise_on_failure:
        raise NonConvergence(it, gnorm)
    meta = FitMeta(it, float(obj.value(Bs)), float(gnorm), bool(converged), tuple(trace))
    return MultinomialModel(coef, penalty, meta, tuple(ds.features.names))


def predict_proba(model: MultinomialModel, X) -> ClassProbabilities:
    """Softmax of the linear predictors, reference class last."""
    values = X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=float)
    if values.ndim != 2 or values.shape[1] != model.p:
        raise DimensionMismatch(f"model expects {model.p} columns, got shape {values.shape}")
    P = softmax(_eta(model.coefficients, _design(values)), axis=1)
    # Exact renormalization keeps rows on the simplex to rounding.
    return ClassProbabilities(P / P.sum(axis=1, keepdims=True))


def ingest_probabilities(path, space: LabelSpace) -> ClassProbabilities:
    """Load an externally produced probability CSV with header ``p1..pK``."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            rows = [r for r in reader if r]
    except (OSError, StopIteration) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    want = [f"p{j}" for j in range(1, space.k + 1)]
    if header != want:
        raise ParseError(f"{path}: header {header} != {want}")
    try:
        values = np.array([[float(c) for c in r] for r in rows], dtype=float).reshape(-1, space.k)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise ParseError(f"{path}: probabilities must be finite and non-negative")
    sums = values.sum(axis=1)
    off = np.nonzero(np.abs(sums - 1.0) > INGEST_TOL)[0]
    if off.size:
        raise RowSumError(int(off[0]), float(sums[off[0]]))
    return ClassProbabilities(values / sums[:, None])


def write_probabilities(probs: ClassProbabilities, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"p{j}" for j in range(1, probs.k + 1)])
        for row in probs.values:
            w.writerow([repr(float(v)) for v in row])
