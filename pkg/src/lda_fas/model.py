"""Small fully-connected embedding network with a hand-written backward pass.

Hidden layers use ReLU, the last layer is affine, and the output is
L2-normalized so every embedding lies on the unit sphere.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractViolation

NORM_EPS = 1e-12


@dataclass
class MlpParams:
    weights: list  # weights[k] has shape (out_k, in_k)
    biases: list
    activation: str = "relu"

    @property
    def layer_sizes(self) -> list:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.activation)

    def validate(self) -> None:
        if not self.weights or len(self.weights) != len(self.biases):
            raise ContractViolation("weights and biases must be non-empty lists of equal length")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ContractViolation(f"layer {k}: weight {w.shape} / bias {b.shape} mismatch")
            if k and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ContractViolation(f"layer {k}: input dim {w.shape[1]} != previous output dim")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ContractViolation(f"layer {k}: non-finite parameters")

    def to_dict(self) -> dict:
        return {
            "activation": self.activation,
            "layer_sizes": self.layer_sizes,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpParams":
        params = cls(
            [np.asarray(w, dtype=np.float64) for w in d["weights"]],
            [np.asarray(b, dtype=np.float64) for b in d["biases"]],
            d.get("activation", "relu"),
        )
        params.validate()
        return params


@dataclass
class ForwardTape:
    inputs: np.ndarray
    preacts: list = field(default_factory=list)
    activations: list = field(default_factory=list)  # activations[k] feeds layer k
    raw: np.ndarray = None  # pre-normalization output
    norms: np.ndarray = None  # max(||raw||, NORM_EPS), shape (B, 1)


@dataclass
class MlpGrads:
    weights: list
    biases: list

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])


def init_params(layer_sizes, seed: int) -> MlpParams:
    """Glorot-uniform weights, zero biases, deterministic in ``seed``."""
    sizes = list(layer_sizes) if layer_sizes is not None else []
    if len(sizes) < 2:
        raise ConfigurationError(f"need at least input and output sizes, got {sizes}")
    if any(int(n) != n or n < 1 for n in sizes):
        raise ConfigurationError(f"layer sizes must be positive integers, got {sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(int(fan_out), int(fan_in))))
        biases.append(np.zeros(int(fan_out)))
    return MlpParams(weights, biases)


def l2_normalize(v: np.ndarray):
    norms = np.maximum(np.linalg.norm(v, axis=-1, keepdims=True), NORM_EPS)
    return v / norms, norms


def forward(params: MlpParams, batch: np.ndarray):
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != params.weights[0].shape[1]:
        raise ContractViolation(f"batch has {x.shape[1]} columns, model expects {params.weights[0].shape[1]}")
    tape = ForwardTape(inputs=x)
    h = x
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        tape.activations.append(h)
        z = h @ w.T + b
        tape.preacts.append(z)
        h = z if k == last else np.maximum(z, 0.0)
    tape.raw = h
    emb, tape.norms = l2_normalize(h)
    return emb, tape


def backward(params: MlpParams, tape: ForwardTape, grad_embeddings: np.ndarray, return_input_grad: bool = False):
    """Parameter gradients of a scalar whose embedding gradient is given."""
    g = np.asarray(grad_embeddings, dtype=np.float64)
    if g.shape != tape.raw.shape:
        raise ContractViolation(f"grad shape {g.shape} != embedding shape {tape.raw.shape}")
    emb = tape.raw / tape.norms
    # d(v/||v||) = (I - f f^T) / ||v||; below the floor the map is v/eps
    radial = np.sum(emb * g, axis=1, keepdims=True)
    floored = (np.linalg.norm(tape.raw, axis=1, keepdims=True) < NORM_EPS)
    delta = np.where(floored, g, g - emb * radial) / tape.norms

    n_layers = len(params.weights)
    gw, gb = [None] * n_layers, [None] * n_layers
    for k in range(n_layers - 1, -1, -1):
        if k != n_layers - 1:
            delta = delta * (tape.preacts[k] > 0)
        gw[k] = delta.T @ tape.activations[k]
        gb[k] = delta.sum(axis=0)
        delta = delta @ params.weights[k]
    grads = MlpGrads(gw, gb)
    if return_input_grad:
        return grads, delta
    return grads
