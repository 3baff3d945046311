"""Downlink communication beamformers and the two surveillance
beamformers: the phased beam (PBR) and its zero-forced variant (ZFR)
that nulls the estimated user channels."""

from dataclasses import dataclass

import numpy as np

from .geometry import ArrayGeometry, Direction, steering_vector
from .errors import DegenerateDirectionError

BASIS_DROP_TOL = 1e-10  # relative to the largest column norm
DEGENERATE_TOL = 1e-8  # residual fraction of ||a|| below which ZFR fails


@dataclass(frozen=True)
class BeamformerSet:
    """Unit-norm transmit beamformers: one per user plus the radar beam."""

    comm: np.ndarray  # (K, N_A)
    radar: np.ndarray  # (N_A,)
    radar_kind: str  # "pbr" | "zfr"


def matched_beamformer(h_hat) -> np.ndarray:
    """Channel-matched beam w = h_hat / ||h_hat||."""
    h_hat = np.asarray(h_hat)
    norm = np.linalg.norm(h_hat)
    if not norm > 0:
        raise ValueError("cannot match a zero channel estimate")
    return h_hat / norm


def pbr_beamformer(geom: ArrayGeometry, direction: Direction) -> np.ndarray:
    """Phased beam a(direction)/sqrt(N_A)."""
    return steering_vector(geom, direction) / np.sqrt(geom.n_elements)


def channel_span_basis(h_hats, drop_tol=BASIS_DROP_TOL) -> np.ndarray:
    """Orthonormal basis of span{h_hat_1, ..., h_hat_K}, rank-revealing:
    singular directions below drop_tol * (largest column norm) are
    discarded, so colinear or duplicate estimates are harmless."""
    columns = np.asarray(h_hats).T  # (N_A, K)
    col_norms = np.linalg.norm(columns, axis=0)
    scale = col_norms.max(initial=0.0)
    if scale == 0.0:
        return np.zeros((columns.shape[0], 0), dtype=complex)
    u, s, _ = np.linalg.svd(columns, full_matrices=False)
    rank = int(np.sum(s > drop_tol * scale))
    return u[:, :rank]


def zfr_beamformer(
    geom: ArrayGeometry, direction: Direction, h_hats, drop_tol=BASIS_DROP_TOL
) -> np.ndarray:
    """Unit-norm projection of a(direction) onto the orthogonal
    complement of the estimated channel span."""
    a = steering_vector(geom, direction)
    basis = channel_span_basis(h_hats, drop_tol=drop_tol)
    residual = a - basis @ (basis.conj().T @ a)
    norm = np.linalg.norm(residual)
    if norm < DEGENERATE_TOL * np.linalg.norm(a):
        raise DegenerateDirectionError(
            "surveillance direction lies in the estimated channel span"
        )
    return residual / norm
