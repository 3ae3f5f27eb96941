"""Mixture density head: diagonal-Gaussian mixtures over a backbone's raw output.

The head maps a raw vector of width M*(1 + 2*D) onto mixture weights, means
and scales; the likelihood path always goes through log-sum-exp so far-tail
targets stay finite.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import LOG_2PI, ShapeMismatch, log_sum_exp

SIGMA_FLOOR = 1e-3


@dataclass
class MixtureParams:
    weights: np.ndarray  # (M,) simplex
    means: np.ndarray    # (M, D)
    scales: np.ndarray   # (M, D), >= SIGMA_FLOOR

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def output_dim(self) -> int:
        return self.means.shape[1]

    def validate(self) -> None:
        if self.means.shape != self.scales.shape or self.means.shape[0] != self.weights.shape[0]:
            raise ShapeMismatch("mixture parameter shapes disagree")
        if np.any(self.weights < 0.0) or abs(float(self.weights.sum()) - 1.0) > 1e-9:
            raise ValueError("mixture weights must be a simplex vector")
        if np.any(self.scales < SIGMA_FLOOR):
            raise ValueError(f"mixture scales must be >= {SIGMA_FLOOR}")


def raw_width(n_components: int, output_dim: int) -> int:
    return n_components * (1 + 2 * output_dim)


def _split_raw(raw, n_components, output_dim):
    m, d = n_components, output_dim
    logits = raw[..., :m]
    means = raw[..., m:m + m * d].reshape(*raw.shape[:-1], m, d)
    log_scales = raw[..., m + m * d:].reshape(*raw.shape[:-1], m, d)
    return logits, means, log_scales


def _softmax(logits, axis=-1):
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def mdn_head(raw, n_components: int, output_dim: int) -> MixtureParams:
    """Map a raw network output onto valid MixtureParams.

    weights = softmax over the first M entries, means pass through, scales =
    exp(raw) + SIGMA_FLOOR.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (raw_width(n_components, output_dim),):
        raise ShapeMismatch(
            f"raw head width {raw.shape} != {raw_width(n_components, output_dim)} "
            f"for M={n_components}, D={output_dim}"
        )
    logits, means, log_scales = _split_raw(raw, n_components, output_dim)
    params = MixtureParams(
        weights=_softmax(logits),
        means=means.copy(),
        scales=np.exp(log_scales) + SIGMA_FLOOR,
    )
    params.validate()
    return params


def _log_component_densities(params: MixtureParams, y: np.ndarray) -> np.ndarray:
    # per-component log(weight * N(y; mean, diag scale^2)), shape (M,)
    z = (y[None, :] - params.means) / params.scales
    log_norm = -0.5 * LOG_2PI - np.log(params.scales)
    with np.errstate(divide="ignore"):
        log_w = np.log(params.weights)
    return log_w + np.sum(log_norm - 0.5 * z * z, axis=1)


def mdn_pdf(params: MixtureParams, y) -> float:
    """Mixture density at y: sum_i w_i * prod_d N(y_d; mean_id, scale_id)."""
    y = np.asarray(y, dtype=float)
    if y.shape != (params.output_dim,):
        raise ShapeMismatch(f"target shape {y.shape} != ({params.output_dim},)")
    return float(np.sum(np.exp(_log_component_densities(params, y))))


def mdn_nll(params: MixtureParams, y) -> float:
    """Negative log-likelihood of y, computed through log-sum-exp."""
    y = np.asarray(y, dtype=float)
    if y.shape != (params.output_dim,):
        raise ShapeMismatch(f"target shape {y.shape} != ({params.output_dim},)")
    return float(-log_sum_exp(_log_component_densities(params, y)))


def mdn_sample(params: MixtureParams, rng) -> np.ndarray:
    """Draw a component by weight, then a diagonal-Gaussian sample from it."""
    cum = np.cumsum(params.weights)
    idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    idx = min(idx, params.n_components - 1)
    return params.means[idx] + params.scales[idx] * rng.standard_normal(params.output_dim)


def mdn_mode(params: MixtureParams) -> np.ndarray:
    """Mean of the heaviest component (ties resolve to the lowest index)."""
    return params.means[int(np.argmax(params.weights))].copy()


def nll_and_grad(raw, y, n_components: int, output_dim: int):
    """Mean NLL over a batch and its gradient w.r.t. the raw head outputs.

    raw: (B, raw_width), y: (B, D). Returns (loss, grad) with grad shaped like
    raw and already divided by the batch size, ready to feed `nn.backward`.
    """
    raw = np.asarray(raw, dtype=float)
    y = np.asarray(y, dtype=float)
    if raw.ndim != 2 or raw.shape[1] != raw_width(n_components, output_dim):
        raise ShapeMismatch("raw batch has the wrong width")
    if y.shape != (raw.shape[0], output_dim):
        raise ShapeMismatch("target batch has the wrong shape")
    batch = raw.shape[0]
    logits, means, log_scales = _split_raw(raw, n_components, output_dim)
    alphas = _softmax(logits)                      # (B, M)
    scales = np.exp(log_scales) + SIGMA_FLOOR      # (B, M, D)
    z = (y[:, None, :] - means) / scales           # (B, M, D)
    with np.errstate(divide="ignore"):
        log_comp = np.log(alphas) + np.sum(
            -0.5 * LOG_2PI - np.log(scales) - 0.5 * z * z, axis=2
        )                                          # (B, M)
    shift = np.max(log_comp, axis=1, keepdims=True)
    lse = shift[:, 0] + np.log(np.sum(np.exp(log_comp - shift), axis=1))
    loss = float(np.mean(-lse))
    resp = np.exp(log_comp - lse[:, None])         # responsibilities (B, M)

    d_logits = (alphas - resp) / batch
    d_means = resp[:, :, None] * (means - y[:, None, :]) / scales ** 2 / batch
    d_log_scales = resp[:, :, None] * (1.0 - z * z) * (scales - SIGMA_FLOOR) / scales / batch
    grad = np.concatenate(
        [d_logits, d_means.reshape(batch, -1), d_log_scales.reshape(batch, -1)], axis=1
    )
    return loss, grad
