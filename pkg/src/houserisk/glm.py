"""Poisson log-link GLM with offsets, fitted by iteratively reweighted
least squares.

The linear predictor is eta_i = (X beta)_i + log(o_i) with a strictly
positive offset o_i whose coefficient is fixed at 1. Each IRLS step
solves a weighted least squares via a column-pivoted QR of the weighted
design, which both avoids explicit normal equations and reveals aliased
columns.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.special import gammaln

INTERCEPT = "intercept"


class GlmError(ValueError):
    pass


class QuasiSeparation(GlmError):
    """A coefficient diverged; some covariate cell has (near-)zero claims."""

    def __init__(self, column: str):
        super().__init__(f"quasi-separation detected on column {column!r}")
        self.column = column


@dataclass(frozen=True)
class DesignMatrix:
    values: np.ndarray          # n x p, first column all ones
    names: tuple[str, ...]
    dropped_columns: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise GlmError("design shape does not match column names")
        if not np.isfinite(self.values).all():
            raise GlmError("design matrix contains non-finite entries")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def select(self, names: Sequence[str]) -> "DesignMatrix":
        index = [self.names.index(n) for n in names]
        return DesignMatrix(
            values=self.values[:, index],
            names=tuple(names),
            dropped_columns=self.dropped_columns,
        )


def build_design(
    features: dict[str, dict[str, float]],
    address_ids: Sequence[str],
    retained: Sequence[str],
) -> DesignMatrix:
    """Intercept column plus one column per retained feature, one row per
    address in ``address_ids`` (policy order). Constant and duplicate
    columns are dropped with a record in ``dropped_columns``."""
    if len(set(retained)) != len(retained):
        raise GlmError("duplicate column names requested")
    for name in retained:
        for address_id in address_ids:
            if name not in features[address_id]:
                raise GlmError(f"feature {name!r} missing for address {address_id}")
            break
    n = len(address_ids)
    columns = [np.ones(n)]
    names = [INTERCEPT]
    dropped = []
    for name in retained:
        col = np.array([features[a][name] for a in address_ids], dtype=float)
        if np.all(col == col[0]):
            dropped.append(name)
            continue
        if any(np.array_equal(col, existing) for existing in columns):
            dropped.append(name)
            continue
        columns.append(col)
        names.append(name)
    return DesignMatrix(
        values=np.column_stack(columns), names=tuple(names), dropped_columns=tuple(dropped)
    )


@dataclass(frozen=True)
class FitOptions:
    tol: float = 1e-8
    max_iter: int = 100
    max_step_halvings: int = 10
    coef_cap: float = 15.0
    pivot_rtol: float = 1e-10


@dataclass(frozen=True)
class FittedModel:
    names: tuple[str, ...]
    coefficients: np.ndarray
    covariance: np.ndarray        # inverse Fisher information
    deviance: float
    log_likelihood: float
    iterations: int
    converged: bool
    dropped_columns: tuple[str, ...]
    options: FitOptions = field(default_factory=FitOptions)

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def to_json(self) -> str:
        return json.dumps(
            {
                "names": list(self.names),
                "coefficients": [float(b) for b in self.coefficients],
                "covariance": [[float(v) for v in row] for row in self.covariance],
                "deviance": self.deviance,
                "log_likelihood": self.log_likelihood,
                "iterations": self.iterations,
                "converged": self.converged,
                "dropped_columns": list(self.dropped_columns),
                "options": {
                    "tol": self.options.tol,
                    "max_iter": self.options.max_iter,
                    "max_step_halvings": self.options.max_step_halvings,
                    "coef_cap": self.options.coef_cap,
                    "pivot_rtol": self.options.pivot_rtol,
                },
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "FittedModel":
        d = json.loads(text)
        return cls(
            names=tuple(d["names"]),
            coefficients=np.array(d["coefficients"]),
            covariance=np.array(d["covariance"]),
            deviance=d["deviance"],
            log_likelihood=d["log_likelihood"],
            iterations=d["iterations"],
            converged=d["converged"],
            dropped_columns=tuple(d["dropped_columns"]),
            options=FitOptions(**d["options"]),
        )


def deviance(y: np.ndarray, mu: np.ndarray) -> float:
    """Poisson deviance D = 2 sum[y log(y/mu) - (y - mu)], with the
    y log(y/mu) term zero when y = 0."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise GlmError("deviance requires positive mu")
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(y > 0, y * np.log(np.where(y > 0, y / mu, 1.0)), 0.0)
    return float(2.0 * np.sum(term - (y - mu)))


def log_likelihood(y: np.ndarray, mu: np.ndarray) -> float:
    return float(np.sum(y * np.log(mu) - mu - gammaln(y + 1.0)))


def _solve_wls(X: np.ndarray, z: np.ndarray, w: np.ndarray, pivot_rtol: float):
    """Weighted least squares via column-pivoted QR of sqrt(w) X.

    Returns (beta, aliased_column_indices). Aliased columns get zero
    coefficients and are reported so the caller can drop and refit.
    """
    sw = np.sqrt(w)
    A = sw[:, None] * X
    b = sw * z
    Q, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    cutoff = pivot_rtol * diag.max()
    rank = int(np.sum(diag > cutoff))
    aliased = sorted(piv[rank:].tolist())
    beta = np.zeros(X.shape[1])
    rhs = Q.T @ b
    beta_kept = scipy.linalg.solve_triangular(R[:rank, :rank], rhs[:rank])
    beta[piv[:rank]] = beta_kept
    return beta, aliased


def fit_poisson(
    design: DesignMatrix,
    claim_counts: np.ndarray,
    offsets: np.ndarray,
    options: FitOptions = FitOptions(),
) -> FittedModel:
    """Maximize the Poisson log-likelihood with log-offset by IRLS.

    Convergence is relative deviance change below ``options.tol``;
    deviance increases trigger step-halving; rank-deficient designs have
    their aliased columns dropped and the fit restarted.
    """
    y = np.asarray(claim_counts, dtype=float)
    o = np.asarray(offsets, dtype=float)
    if y.shape[0] != design.n or o.shape[0] != design.n:
        raise GlmError("dimension mismatch between design, counts, and offsets")
    if np.any(o <= 0):
        raise GlmError("offsets must be strictly positive")
    if np.any(y < 0) or np.any(y != np.floor(y)):
        raise GlmError("claim counts must be nonnegative integers")

    X = design.values
    names = design.names
    log_o = np.log(o)

    # rare-event-safe start: intercept matches totals, everything else zero
    beta = np.zeros(design.p)
    beta[0] = math.log((y.sum() + 0.5) / o.sum())

    eta = X @ beta + log_o
    mu = np.exp(eta)
    dev = deviance(y, mu)
    converged = False
    iterations = 0

    for iterations in range(1, options.max_iter + 1):
        w = mu
        z = (eta - log_o) + (y - mu) / mu
        beta_new, aliased = _solve_wls(X, z, w, options.pivot_rtol)
        if aliased:
            keep = [names[j] for j in range(design.p) if j not in aliased]
            dropped = design.dropped_columns + tuple(names[j] for j in aliased)
            reduced = DesignMatrix(
                values=X[:, [j for j in range(design.p) if j not in aliased]],
                names=tuple(keep),
                dropped_columns=dropped,
            )
            return fit_poisson(reduced, claim_counts, offsets, options)

        step = beta_new - beta
        factor = 1.0
        for _ in range(options.max_step_halvings + 1):
            candidate = beta + factor * step
            eta_c = X @ candidate + log_o
            mu_c = np.exp(eta_c)
            dev_c = deviance(y, mu_c)
            if dev_c <= dev or factor <= 2.0 ** (-options.max_step_halvings):
                break
            factor /= 2.0
        beta, eta, mu = candidate, eta_c, mu_c

        over = np.abs(beta) > options.coef_cap
        if np.any(over):
            raise QuasiSeparation(names[int(np.argmax(over))])

        if abs(dev_c - dev) / (abs(dev_c) + 0.1) < options.tol:
            dev = dev_c
            converged = True
            break
        dev = dev_c

    if converged:
        # one polishing Newton step so coefficients, not just deviance,
        # sit at the optimum to near machine precision
        z = (eta - log_o) + (y - mu) / mu
        beta_new, aliased = _solve_wls(X, z, mu, options.pivot_rtol)
        if not aliased:
            eta_p = X @ beta_new + log_o
            mu_p = np.exp(eta_p)
            dev_p = deviance(y, mu_p)
            if dev_p <= dev + options.tol * (abs(dev) + 0.1):
                beta, eta, mu, dev = beta_new, eta_p, mu_p, dev_p

    w = mu
    fisher = X.T @ (w[:, None] * X)
    covariance = np.linalg.inv(fisher)
    covariance = (covariance + covariance.T) / 2.0

    return FittedModel(
        names=names,
        coefficients=beta,
        covariance=covariance,
        deviance=dev,
        log_likelihood=log_likelihood(y, mu),
        iterations=iterations,
        converged=converged,
        dropped_columns=design.dropped_columns,
        options=options,
    )


def predict(model: FittedModel, design: DesignMatrix, offsets: np.ndarray) -> np.ndarray:
    """Expected claim counts mu_i = exp((X beta)_i) * o_i."""
    if tuple(design.names) != tuple(model.names):
        raise GlmError(
            f"design columns {list(design.names)} do not match model columns {list(model.names)}"
        )
    o = np.asarray(offsets, dtype=float)
    if np.any(o <= 0):
        raise GlmError("offsets must be strictly positive")
    return np.exp(design.values @ model.coefficients) * o


def normal_cdf(x: float) -> float:
    """Standard normal CDF via the complementary error function
    (double-precision accurate, well beyond 1e-10)."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@dataclass(frozen=True)
class WaldRow:
    name: str
    estimate: float
    std_error: float
    z: Optional[float]
    p_value: Optional[float]
    degenerate: bool = False


def wald_tests(model: FittedModel) -> list[WaldRow]:
    """Per-coefficient standard errors, z statistics, and two-sided normal
    p-values. Zero standard errors are flagged degenerate."""
    if not model.converged:
        raise GlmError("Wald tests require a converged fit")
    rows = []
    for k, name in enumerate(model.names):
        se = math.sqrt(max(model.covariance[k, k], 0.0))
        if se == 0.0:
            rows.append(
                WaldRow(name=name, estimate=float(model.coefficients[k]), std_error=0.0,
                        z=None, p_value=None, degenerate=True)
            )
            continue
        z = float(model.coefficients[k]) / se
        p = 2.0 * (1.0 - normal_cdf(abs(z)))
        rows.append(WaldRow(name=name, estimate=float(model.coefficients[k]),
                            std_error=se, z=z, p_value=p))
    return rows
