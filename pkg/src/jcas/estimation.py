"""Uplink pilot signaling and the pilot-matched / LMMSE channel
estimators, plus the per-model channel correlation matrices the rate
bounds consume."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import ArrayGeometry, steering_vector
from .propagation import UserModel, complex_normal
from .errors import SingularCovarianceError

CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class PilotBook:
    """Unit-norm pilot sequences, one column per user, plus per-user
    pilot powers. Columns are DFT columns reused cyclically when
    tau_p < K, so cross-correlations are exactly 0 or 1."""

    tau_p: int
    pilots: np.ndarray  # (tau_p, K)
    powers: np.ndarray  # (K,)

    @property
    def n_users(self):
        return self.pilots.shape[1]

    def gram_sq(self) -> np.ndarray:
        """|phi_i^H phi_k|^2 for all user pairs, shape (K, K)."""
        g = self.pilots.conj().T @ self.pilots
        return np.abs(g) ** 2


def make_pilots(tau_p, k, power=1.0) -> PilotBook:
    """DFT pilot book: orthonormal when tau_p >= K, cyclic reuse
    (controlled contamination) otherwise."""
    if tau_p < 1 or k < 1:
        raise ValueError("tau_p and k must be >= 1")
    dft = np.fft.fft(np.eye(tau_p)) / np.sqrt(tau_p)
    pilots = dft[:, np.arange(k) % tau_p]
    powers = np.broadcast_to(np.asarray(power, dtype=float), (k,)).copy()
    if np.any(powers <= 0):
        raise ValueError("pilot powers must be positive")
    return PilotBook(tau_p=tau_p, pilots=pilots, powers=powers)


def pilot_rx(channels, book: PilotBook, noise_var, rng) -> np.ndarray:
    """Received training matrix Y_p = sum_k sqrt(eta_pk) h_k phi_k^H + W,
    shape (N_A, tau_p), noise entries i.i.d. CN(0, noise_var)."""
    h = np.asarray([ch.h for ch in channels])
    if h.shape[0] != book.n_users:
        raise ValueError(
            f"{h.shape[0]} channels for a {book.n_users}-user pilot book"
        )
    y = (np.sqrt(book.powers)[:, None] * h).T @ book.pilots.conj().T
    if noise_var > 0:
        y = y + complex_normal(rng, y.shape, variance=noise_var)
    return y


def hbar(model: UserModel, geom: ArrayGeometry) -> np.ndarray:
    """Channel correlation E[h h^H] for one user under its model:
    Rayleigh beta*I, LoS beta*a a^H, Rice beta/(K+1) (K a a^H + I)."""
    n_a = geom.n_elements
    if model.kind == "rayleigh":
        return model.beta * np.eye(n_a, dtype=complex)
    a = steering_vector(geom, model.direction)
    rank1 = np.outer(a, a.conj())
    if model.kind == "los":
        return model.beta * rank1
    k = model.rice_k
    return model.beta / (k + 1.0) * (k * rank1 + np.eye(n_a))


@dataclass(frozen=True)
class EstimationResult:
    """Per-user channel estimates; LMMSE results also carry the filter
    E_k and observation covariance R_{y,k} needed by the rate formulas."""

    h_hat: np.ndarray  # (K, N_A)
    estimator: str  # "pm" | "lmmse"
    e_matrices: Optional[np.ndarray] = None  # (K, N_A, N_A)
    r_y: Optional[np.ndarray] = None  # (K, N_A, N_A)


def pm_estimate(y_pilot, book: PilotBook) -> EstimationResult:
    """Pilot-matched estimates h_hat_k = Y_p phi_k / sqrt(eta_pk)."""
    y_pilot = np.asarray(y_pilot)
    if y_pilot.shape[1] != book.tau_p:
        raise ValueError("pilot observation has wrong number of samples")
    h_hat = (y_pilot @ book.pilots).T / np.sqrt(book.powers)[:, None]
    return EstimationResult(h_hat=h_hat, estimator="pm")


def observation_covariances(book: PilotBook, hbars, noise_var) -> np.ndarray:
    """R_{y,k} = sum_i eta_pi |phi_i^H phi_k|^2 Hbar_i + noise_var I."""
    hbars = np.asarray(hbars)
    n_a = hbars.shape[-1]
    weights = (book.powers[:, None] * book.gram_sq()).T  # [k, i]
    r_y = (weights.astype(complex) @ hbars.reshape(len(hbars), -1)).reshape(
        -1, n_a, n_a
    )
    r_y += noise_var * np.eye(n_a)
    return r_y


def lmmse_filters(book: PilotBook, hbars, noise_var):
    """LMMSE filter matrices E_k = sqrt(eta_pk) R_{y,k}^{-1} Hbar_k and
    the covariances R_{y,k}, as (K, N_A, N_A) stacks.

    The solve is a Hermitian positive-definite one; an ill-conditioned
    R_{y,k} (estimated condition above CONDITION_LIMIT) is reported, not
    silently regularized.
    """
    hbars = np.asarray(hbars)
    r_y = observation_covariances(book, hbars, noise_var)
    e_matrices = np.empty_like(r_y)
    for k in range(book.n_users):
        # cheap certified bound first: R_y - noise_var*I is PSD by
        # construction (lambda_min >= noise_var), Gershgorin bounds
        # lambda_max; only when that bound trips do the exact check
        cond_bound = np.inf
        if noise_var > 0:
            cond_bound = np.abs(r_y[k]).sum(axis=1).max() / noise_var
        if cond_bound > CONDITION_LIMIT:
            try:
                chol = np.linalg.cholesky(r_y[k])
            except np.linalg.LinAlgError as exc:
                raise SingularCovarianceError(
                    f"R_y for user {k} is not positive definite"
                ) from exc
            diag = chol.diagonal().real
            if (diag.max() / diag.min()) ** 2 > CONDITION_LIMIT:
                raise SingularCovarianceError(f"R_y for user {k} is ill-conditioned")
        try:
            e_matrices[k] = np.sqrt(book.powers[k]) * np.linalg.solve(
                r_y[k], hbars[k]
            )
        except np.linalg.LinAlgError as exc:
            raise SingularCovarianceError(f"R_y for user {k} is singular") from exc
    return e_matrices, r_y


def lmmse_apply(y_pilot, book: PilotBook, e_matrices) -> EstimationResult:
    """Apply precomputed LMMSE filters to a pilot observation."""
    proj = np.asarray(y_pilot) @ book.pilots
    h_hat = np.einsum("kab,ak->kb", np.asarray(e_matrices).conj(), proj)
    return EstimationResult(
        h_hat=h_hat, estimator="lmmse", e_matrices=e_matrices, r_y=None
    )


def lmmse_estimate(y_pilot, book: PilotBook, hbars, noise_var) -> EstimationResult:
    """LMMSE estimates h_hat_k = E_k^H Y_p phi_k."""
    e_matrices, r_y = lmmse_filters(book, hbars, noise_var)
    result = lmmse_apply(y_pilot, book, e_matrices)
    return EstimationResult(
        h_hat=result.h_hat, estimator="lmmse", e_matrices=e_matrices, r_y=r_y
    )
