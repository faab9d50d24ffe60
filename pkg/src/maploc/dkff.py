"""Decentralized Kalman filter bank with feedback.

A bank holds one shared prior (m, M) and a set of local filters, each
subscribed to a disjoint group of measurement kinds.  Every cycle:

    1. the shared prior is propagated through the transition model,
    2. each local filter with data runs an information-form update

           P_i^-1 = M^-1 + H_i^T R_i^-1 H_i
           x_i    = P_i (M^-1 m + H_i^T R_i^-1 z_i)

    3. the master filter fuses the n participating locals

           P^-1 = sum_i P_i^-1 - (n - 1) M^-1
           x    = P [ sum_i P_i^-1 x_i - (n - 1) M^-1 m ]

    4. the fused estimate is fed back as everyone's next prior, which is
       how measurements are shared between local filters indirectly.

For linear-Gaussian models the fused result equals a centralized update on
the stacked measurements; with nonlinear models each H is relinearized at
the shared prior mean, and z is replaced by the innovation-corrected
effective measurement innovation + H m.

All updates are done in information form with explicit symmetrization
after every inversion; inversion failures surface as typed errors rather
than silent fallbacks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import block_diag, cho_factor, cho_solve
from scipy.stats import chi2


class SingularMatrixError(ValueError):
    """A covariance or noise matrix failed its Cholesky factorization."""


class IndefiniteFusionError(ValueError):
    """The fused precision is not positive definite (inconsistent locals)."""


def symmetrize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def spd_inverse(A: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Inverse of a symmetric positive-definite matrix via Cholesky."""
    try:
        factor = cho_factor(symmetrize(np.asarray(A, dtype=float)), lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"{what} is not positive definite") from exc
    return symmetrize(cho_solve(factor, np.eye(A.shape[0])))


@dataclass(frozen=True)
class StateEstimate:
    """Gaussian belief: mean vector and a symmetric positive-definite covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float).reshape(-1)
        P = symmetrize(np.asarray(self.cov, dtype=float).reshape(m.size, m.size))
        try:
            np.linalg.cholesky(P)
        except np.linalg.LinAlgError:
            raise SingularMatrixError("covariance is not positive definite") from None
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", P)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass
class LinearTransition:
    """Discrete linear transition x <- F x with additive noise Q (dt ignored)."""

    F: np.ndarray
    Q: np.ndarray

    def step(self, mean, dt):
        return self.F @ mean, self.F, self.Q


def predict(estimate: StateEstimate, transition, dt: float) -> StateEstimate:
    """Propagate the belief: m <- step(m), M <- Phi M Phi^T + Q."""
    mean, Phi, Q = transition.step(estimate.mean, dt)
    return StateEstimate(mean, Phi @ estimate.cov @ Phi.T + Q)


def information_update(prior: StateEstimate, H, R, innovation) -> StateEstimate:
    """Information-form measurement update against the shared prior.

    ``innovation`` is z - h(m); internally the update uses the effective
    measurement innovation + H m, which reduces to plain z for linear h.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    r = np.atleast_1d(np.asarray(innovation, dtype=float))
    M_inv = spd_inverse(prior.cov, "prior covariance")
    R_inv = spd_inverse(R, "measurement covariance")
    P_inv = M_inv + H.T @ R_inv @ H
    P = spd_inverse(P_inv, "posterior precision")
    z_eff = r + H @ prior.mean
    mean = P @ (M_inv @ prior.mean + H.T @ R_inv @ z_eff)
    return StateEstimate(mean, P)


@dataclass
class LocalFilter:
    """One member of the bank: an id, its measurement kinds, and a model
    handle mapping (prior mean, measurement) -> (innovation, H, R)."""

    id: str
    kinds: tuple
    model: Callable
    estimate: Optional[StateEstimate] = None


def local_update(filt: LocalFilter, prior: StateEstimate, measurements) -> StateEstimate:
    """Update one local filter with its measurements for this cycle.

    Multiple measurements are stacked into a single information-form
    update; with no measurements the local estimate is the prior.
    """
    triples = [filt.model(prior.mean, z) for z in measurements]
    if not triples:
        return prior
    innov = np.concatenate([np.atleast_1d(t[0]) for t in triples])
    H = np.vstack([np.atleast_2d(t[1]) for t in triples])
    R = block_diag(*[np.atleast_2d(t[2]) for t in triples])
    return information_update(prior, H, R, innov)


def master_fuse(prior: StateEstimate, locals_: Sequence[StateEstimate]) -> StateEstimate:
    """Fuse n local posteriors that share the prior (m, M).

    P^-1 = sum P_i^-1 - (n-1) M^-1 and the matching mean combination; with
    n = 1 this reduces to the single local estimate.
    """
    if not locals_:
        raise ValueError("master_fuse needs at least one local estimate")
    n = len(locals_)
    dim = prior.dim
    info_sum = np.zeros((dim, dim))
    vec_sum = np.zeros(dim)
    for est in locals_:
        if est.dim != dim:
            raise ValueError("local estimate dimension mismatch")
        P_inv = spd_inverse(est.cov, "local covariance")
        info_sum += P_inv
        vec_sum += P_inv @ est.mean
    M_inv = spd_inverse(prior.cov, "prior covariance")
    fused_info = info_sum - (n - 1) * M_inv
    try:
        P = spd_inverse(fused_info, "fused precision")
    except SingularMatrixError as exc:
        raise IndefiniteFusionError(
            "fused precision is indefinite; local estimates are inconsistent"
        ) from exc
    mean = P @ (vec_sum - (n - 1) * (M_inv @ prior.mean))
    return StateEstimate(mean, P)


def centralized_update(prior: StateEstimate, triples) -> StateEstimate:
    """Single stacked update over all measurements (the fusion oracle).

    ``triples`` is a sequence of (innovation, H, R) tuples.
    """
    triples = list(triples)
    if not triples:
        return prior
    innov = np.concatenate([np.atleast_1d(t[0]) for t in triples])
    H = np.vstack([np.atleast_2d(t[1]) for t in triples])
    R = block_diag(*[np.atleast_2d(t[2]) for t in triples])
    return information_update(prior, H, R, innov)


def chi2_threshold(dim: int, prob: float = 0.99) -> float:
    """Chi-square gating threshold for a measurement of the given dimension."""
    return float(chi2.ppf(prob, dim))


def gate(innovation, S, threshold: float) -> bool:
    """Accept iff the normalized innovation squared is within the threshold."""
    r = np.atleast_1d(np.asarray(innovation, dtype=float))
    S = np.atleast_2d(np.asarray(S, dtype=float))
    try:
        factor = cho_factor(symmetrize(S), lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("innovation covariance is singular") from exc
    d2 = float(r @ cho_solve(factor, r))
    return d2 <= threshold


class FilterBank:
    """Shared prior plus local filters; runs the predict/update/fuse/feedback cycle."""

    def __init__(self, transition, filters: Sequence[LocalFilter], master: StateEstimate):
        ids = [f.id for f in filters]
        if len(set(ids)) != len(ids):
            raise ValueError("local filter ids must be unique")
        claimed = [k for f in filters for k in f.kinds]
        if len(set(claimed)) != len(claimed):
            raise ValueError("measurement kinds must be disjoint across local filters")
        self.transition = transition
        self.filters = list(filters)
        self.master = master

    def predict(self, dt: float) -> StateEstimate:
        self.master = predict(self.master, self.transition, dt)
        return self.master

    def filter_for_kind(self, kind: str) -> Optional[LocalFilter]:
        for f in self.filters:
            if kind in f.kinds:
                return f
        return None

    def update(self, assignments: dict) -> StateEstimate:
        """One correction cycle.

        ``assignments`` maps filter id -> list of measurements.  Filters
        with no measurement drop out of the fusion sums (equivalently they
        would contribute their prior, which is algebraically identical).
        """
        participating = []
        for f in self.filters:
            ms = assignments.get(f.id, [])
            if ms:
                f.estimate = local_update(f, self.master, ms)
                participating.append(f.estimate)
        fused = master_fuse(self.master, participating) if participating else self.master
        self.feedback(fused)
        return fused

    def feedback(self, fused: StateEstimate):
        """Feed the fused estimate back as every filter's next prior."""
        self.master = fused
        for f in self.filters:
            f.estimate = fused
