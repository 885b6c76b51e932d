"""Dynamic ensemble weighting: per-encoder learning speeds and softmax weights.

The learning speed of encoder i is the ratio of its loss between consecutive steps;
a smaller ratio (faster convergence) yields a smaller weight, so optimization keeps
pressure on the encoders that are lagging. Weights are rescaled by the ensemble
size so they fluctuate around w_init.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveLossError, ShapeMismatchError
from .mathutil import softmax

LOSS_FLOOR = 1e-12


@dataclass(frozen=True)
class EnsembleState:
    prev_losses: np.ndarray | None  # floored losses from the previous step; None at step 0
    speeds: np.ndarray
    weights: np.ndarray
    w_init: float = 1.0
    temperature: float = 1.0

    @property
    def encoder_count(self):
        return self.weights.shape[0]


def init_state(encoder_count, w_init=1.0, temperature=1.0):
    """Step-0 state: speeds all 1, weights all w_init."""
    if encoder_count < 1:
        raise ShapeMismatchError("need at least one encoder")
    return EnsembleState(prev_losses=None,
                         speeds=np.ones(encoder_count),
                         weights=np.full(encoder_count, float(w_init)),
                         w_init=float(w_init),
                         temperature=float(temperature))


def update_weights(state, current_losses):
    """Advance the state by one step of losses; returns the new state."""
    cur = np.asarray(current_losses, dtype=np.float64)
    if cur.shape != (state.encoder_count,):
        raise ShapeMismatchError(
            f"expected {state.encoder_count} losses, got shape {cur.shape}")
    if not np.all(np.isfinite(cur)) or (cur < 0).any():
        raise NonPositiveLossError(f"losses must be finite and >= 0, got {cur}")
    cur = np.maximum(cur, LOSS_FLOOR)
    if state.prev_losses is None:
        speeds = np.ones_like(cur)
    else:
        speeds = cur / state.prev_losses
    t = state.encoder_count
    weights = state.w_init * t * softmax(speeds, state.temperature)
    return EnsembleState(prev_losses=cur, speeds=speeds, weights=weights,
                         w_init=state.w_init, temperature=state.temperature)


def weighted_total(losses, grads, weights):
    """Weighted ensemble loss and gradient.

    total = sum_i W_i * L_i; the aggregated gradient carries the 1/t factor of the
    pseudocode's averaged form (a no-op under the later sign step, kept for fidelity).
    """
    losses = np.asarray(losses, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    t = losses.shape[0]
    if weights.shape != (t,) or len(grads) != t:
        raise ShapeMismatchError(
            f"got {losses.shape[0]} losses, {len(grads)} grads, {weights.shape[0]} weights")
    shape = np.asarray(grads[0]).shape
    total_grad = np.zeros(shape)
    for w, g in zip(weights, grads):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != shape:
            raise ShapeMismatchError(f"gradient shape {g.shape} != {shape}")
        total_grad += w * g
    return float(weights @ losses), total_grad / t
