"""Closed-form downlink achievable rates (use-and-then-forget bounds)
for both channel estimators, the per-model gamma/delta constants, and a
Monte Carlo sampler that re-derives every expectation term directly.

Conventions: the bound treats w_j = h_hat_j / sqrt(gamma_j) (PM) or
/ sqrt(gamma_tilde_j) (LMMSE) as the effective beam normalization, so
every denominator term is an exact expectation that the sampler in
`mc_rate_bound` can reproduce term by term.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import ArrayGeometry, steering_vector
from .propagation import UserModel, complex_normal
from .estimation import PilotBook, lmmse_filters, observation_covariances, hbar
from .errors import RateModelError


def gamma_pm(hbar_k) -> float:
    """gamma_k = tr(Hbar_k) = beta_k N_A for every channel model."""
    return float(np.trace(hbar_k).real)


def gamma_lmmse(hbar_k, e_k, eta_p_k) -> float:
    """gamma~_k = sqrt(eta_pk) tr(Hbar_k E_k)."""
    # tr(A B) without forming the product
    return float(np.sqrt(eta_p_k) * np.sum(hbar_k * e_k.T).real)


def delta_pm(model: UserModel, n_a) -> float:
    """Fourth-moment correction delta_k = E||h_k||^4 - tr(Hbar_k^2)."""
    if model.kind == "rayleigh":
        return model.beta**2 * n_a**2
    if model.kind == "los":
        return 0.0
    k = model.rice_k
    return (model.beta / (k + 1.0)) ** 2 * n_a**2 * (1.0 + 2.0 * k)


def delta_lmmse(model: UserModel, e_j, geom: ArrayGeometry) -> float:
    """delta~_j^(k) = E|h_k^H E_j^H h_k|^2 - tr(E_j^H Hbar_k E_j Hbar_k)."""
    if model.kind == "los":
        return 0.0
    tr_e = np.trace(e_j)
    if model.kind == "rayleigh":
        return float(model.beta**2 * np.abs(tr_e) ** 2)
    k = model.rice_k
    a = steering_vector(geom, model.direction)
    cross = (a.conj() @ e_j.conj().T @ a) * tr_e
    return float(
        (model.beta / (k + 1.0)) ** 2
        * (np.abs(tr_e) ** 2 + 2.0 * k * cross.real)
    )


def delta_terms(model: UserModel, e_j, geom: ArrayGeometry):
    """(delta_k, delta~_j^(k)) pair for user k's model and filter E_j."""
    return delta_pm(model, geom.n_elements), delta_lmmse(model, e_j, geom)


def _trace_products(stack_a, stack_b) -> np.ndarray:
    """T[j, k] = Re tr(A_j B_k) for stacks of square matrices."""
    j_n = stack_a.shape[0]
    k_n = stack_b.shape[0]
    a_flat = stack_a.reshape(j_n, -1)
    bt_flat = stack_b.transpose(0, 2, 1).reshape(k_n, -1)
    return (a_flat @ bt_flat.T).real


@dataclass(frozen=True)
class RateInputs:
    """Everything the closed forms need for one drop."""

    models: tuple  # K UserModel
    geom: ArrayGeometry
    hbars: np.ndarray  # (K, N_A, N_A)
    eta: np.ndarray  # (K,) downlink per-cell powers
    book: PilotBook
    r_y: np.ndarray  # (K, N_A, N_A)
    e_matrices: Optional[np.ndarray]  # (K, N_A, N_A), LMMSE only
    eta_radar: float
    w_radar: np.ndarray  # (N_A,)
    tau_c: int
    tau_p: int
    sigma_z_sq: float

    def __post_init__(self):
        if self.tau_c <= self.tau_p:
            raise ValueError("tau_c must exceed tau_p")
        if self.sigma_z_sq < 0 or self.eta_radar < 0 or np.any(self.eta < 0):
            raise ValueError("powers and noise must be nonnegative")

    @property
    def tau_d(self):
        return self.tau_c - self.tau_p

    @property
    def prelog(self):
        return self.tau_d / self.tau_c


def build_rate_inputs(
    models,
    geom,
    book,
    noise_var_ul,
    eta,
    eta_radar,
    w_radar,
    tau_c,
    sigma_z_sq,
    with_lmmse=True,
) -> RateInputs:
    """Assemble RateInputs from per-user models and the pilot book."""
    hbars = np.asarray([hbar(m, geom) for m in models])
    if with_lmmse:
        e_matrices, r_y = lmmse_filters(book, hbars, noise_var_ul)
    else:
        e_matrices, r_y = None, observation_covariances(book, hbars, noise_var_ul)
    return RateInputs(
        models=tuple(models),
        geom=geom,
        hbars=hbars,
        eta=np.asarray(eta, dtype=float),
        book=book,
        r_y=r_y,
        e_matrices=e_matrices,
        eta_radar=float(eta_radar),
        w_radar=np.asarray(w_radar),
        tau_c=tau_c,
        tau_p=book.tau_p,
        sigma_z_sq=float(sigma_z_sq),
    )


@dataclass(frozen=True)
class RateReport:
    """Per-user rates with the SINR term breakdown (all (K,) arrays)."""

    estimator: str
    rates: np.ndarray  # bit/s/Hz
    sinr: np.ndarray
    desired: np.ndarray
    interference: np.ndarray  # sum over j of the user terms
    self_term: np.ndarray  # eta_k gamma_k, subtracted
    radar_leakage: np.ndarray  # eta_R w_R^H Hbar_k w_R
    noise: float
    prelog: float


def _radar_leakage(inputs: RateInputs) -> np.ndarray:
    w = inputs.w_radar
    quad = np.einsum("a,kab,b->k", w.conj(), inputs.hbars, w).real
    return inputs.eta_radar * quad


def _assemble(inputs, estimator, desired, term_matrix, gammas_den) -> RateReport:
    """Common denominator assembly: term_matrix[j, k] is user j's
    contribution to user k's denominator (already divided by gamma_j)."""
    interference = term_matrix.sum(axis=0)
    radar = _radar_leakage(inputs)
    den = interference - desired + radar + inputs.sigma_z_sq
    if np.any(den <= 0):
        bad = np.flatnonzero(den <= 0)
        raise RateModelError(
            f"nonpositive SINR denominator for users {bad.tolist()}; "
            "inputs are inconsistent"
        )
    sinr = desired / den
    return RateReport(
        estimator=estimator,
        rates=inputs.prelog * np.log2(1.0 + sinr),
        sinr=sinr,
        desired=desired,
        interference=interference,
        self_term=desired.copy(),
        radar_leakage=radar,
        noise=inputs.sigma_z_sq,
        prelog=inputs.prelog,
    )


def pm_term_matrix(inputs: RateInputs):
    """(term_matrix, gammas) for PM: term_matrix[j, k] is user j's
    denominator contribution to user k, already gamma_j-normalized."""
    n_a = inputs.geom.n_elements
    gammas = np.array([gamma_pm(h) for h in inputs.hbars])
    if np.any(gammas <= 0):
        raise RateModelError("gamma_j must be positive for all users")
    deltas = np.array([delta_pm(m, n_a) for m in inputs.models])
    gram = inputs.book.gram_sq()
    eta_p = inputs.book.powers
    tr_cross = _trace_products(inputs.r_y, inputs.hbars)  # tr(R_{y,j} Hbar_k)
    term = (
        (inputs.eta / eta_p)[:, None]
        * (tr_cross + eta_p[None, :] * deltas[None, :] * gram)
        / gammas[:, None]
    )
    return term, gammas


def lmmse_term_matrix(inputs: RateInputs):
    """(term_matrix, gammas~) for LMMSE, same layout as pm_term_matrix."""
    if inputs.e_matrices is None:
        raise ValueError("RateInputs lacks LMMSE filter matrices")
    gammas = np.array(
        [
            gamma_lmmse(h, e, p)
            for h, e, p in zip(inputs.hbars, inputs.e_matrices, inputs.book.powers)
        ]
    )
    if np.any(gammas <= 0):
        raise RateModelError("gamma~_j must be positive for all users")
    gram = inputs.book.gram_sq()
    eta_p = inputs.book.powers
    he = np.matmul(inputs.hbars, inputs.e_matrices)  # Hbar_j E_j, batched
    tr_cross = _trace_products(he, inputs.hbars)
    tr_cross *= np.sqrt(eta_p)[:, None]
    dtilde = np.array(
        [
            [delta_lmmse(mk, ej, inputs.geom) for mk in inputs.models]
            for ej in inputs.e_matrices
        ]
    )  # [j, k]
    term = (
        inputs.eta[:, None]
        * (tr_cross + eta_p[None, :] * dtilde * gram)
        / gammas[:, None]
    )
    return term, gammas


def rate_pm(inputs: RateInputs) -> RateReport:
    """Closed-form rates under pilot-matched estimation."""
    term, gammas = pm_term_matrix(inputs)
    return _assemble(inputs, "pm", inputs.eta * gammas, term, gammas)


def rate_lmmse(inputs: RateInputs) -> RateReport:
    """Closed-form rates under LMMSE estimation."""
    term, gammas = lmmse_term_matrix(inputs)
    return _assemble(inputs, "lmmse", inputs.eta * gammas, term, gammas)


@dataclass(frozen=True)
class McRateTerms:
    """Sampled counterparts of every closed-form SINR term."""

    estimator: str
    desired: np.ndarray  # (K,)
    term_matrix: np.ndarray  # (j, k) user-j contribution to user k
    radar_leakage: np.ndarray  # (K,)
    noise: float
    trials: int

    def sinr(self) -> np.ndarray:
        den = (
            self.term_matrix.sum(axis=0)
            - self.desired
            + self.radar_leakage
            + self.noise
        )
        return self.desired / den


def mc_rate_bound(
    models,
    geom,
    book: PilotBook,
    noise_var_ul,
    eta,
    eta_radar,
    w_radar,
    sigma_z_sq,
    estimator,
    trials,
    rng,
    batch=2000,
) -> McRateTerms:
    """Directly sample the downlink signal expectations behind the bound.

    Per trial: draw channels and pilot noise, run the selected estimator,
    and accumulate |h_k^H h_hat_j|^2, h_k^H h_hat_k and |h_k^H w_R|^2.
    Returned terms use the same gamma normalization as the closed forms,
    so each entry is directly comparable.
    """
    if trials < 1000:
        raise ValueError("need at least 10^3 trials for stable estimates")
    eta = np.asarray(eta, dtype=float)
    k_users = len(models)
    n_a = geom.n_elements
    hbars = np.asarray([hbar(m, geom) for m in models])
    if estimator == "lmmse":
        e_matrices, _ = lmmse_filters(book, hbars, noise_var_ul)
        gammas = np.array(
            [
                gamma_lmmse(h, e, p)
                for h, e, p in zip(hbars, e_matrices, book.powers)
            ]
        )
    elif estimator == "pm":
        e_matrices = None
        gammas = np.array([gamma_pm(h) for h in hbars])
    else:
        raise ValueError(f"unknown estimator {estimator!r}")

    steering = {}
    for m in models:
        if m.kind in ("los", "rice") and m.direction not in steering:
            steering[m.direction] = steering_vector(geom, m.direction)

    sum_sq = np.zeros((k_users, k_users))
    sum_diag = np.zeros(k_users, dtype=complex)
    sum_radar = np.zeros(k_users)
    w_radar = np.asarray(w_radar)
    done = 0
    while done < trials:
        nb = min(batch, trials - done)
        h = np.empty((nb, k_users, n_a), dtype=complex)
        for k, m in enumerate(models):
            if m.kind == "rayleigh":
                h[:, k] = np.sqrt(m.beta) * complex_normal(rng, (nb, n_a))
            else:
                psi = rng.uniform(0, 2 * np.pi, nb)
                specular = np.exp(1j * psi)[:, None] * steering[m.direction][None, :]
                if m.kind == "los":
                    h[:, k] = np.sqrt(m.beta) * specular
                else:
                    g = complex_normal(rng, (nb, n_a))
                    h[:, k] = np.sqrt(m.beta / (m.rice_k + 1)) * (
                        np.sqrt(m.rice_k) * specular + g
                    )
        y = np.einsum(
            "k,tka,pk->tap", np.sqrt(book.powers), h, book.pilots.conj()
        )
        y += complex_normal(rng, y.shape, variance=noise_var_ul)
        proj = np.einsum("tap,pk->tak", y, book.pilots)  # Y_p phi_k
        if estimator == "pm":
            h_hat = proj.transpose(0, 2, 1) / np.sqrt(book.powers)[None, :, None]
        else:
            h_hat = np.einsum("kab,tak->tkb", e_matrices.conj(), proj)
        cross = np.einsum("tka,tja->tkj", h.conj(), h_hat)
        sum_sq += (np.abs(cross) ** 2).sum(axis=0).T  # accumulate as [j, k]
        sum_diag += np.einsum("tkk->k", cross)
        sum_radar += (np.abs(h.conj() @ w_radar) ** 2).sum(axis=0)
        done += nb

    mean_sq = sum_sq / trials  # [j, k] = E|h_k^H h_hat_j|^2
    desired = eta * np.abs(sum_diag / trials) ** 2 / gammas
    term_matrix = eta[:, None] * mean_sq / gammas[:, None]
    radar = eta_radar * sum_radar / trials
    return McRateTerms(
        estimator=estimator,
        desired=desired,
        term_matrix=term_matrix,
        radar_leakage=radar,
        noise=float(sigma_z_sq),
        trials=trials,
    )
