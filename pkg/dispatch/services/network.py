"""
Feedforward Q-network: ReLU hidden layers, linear output, masked MSE loss,
backpropagation and Adam, plus a self-describing binary model format.

Model file layout (little-endian):
    4s   magic b"SDQN"
    u16  format version
    u16  number of layer dims L
    u32  x L layer dims
    u8   1 if optimizer state follows, else 0
    [u64 step, f64 beta1, f64 beta2, f64 eps]   only with optimizer state
    f64  per layer: weights (fan_in x fan_out, row-major), biases
    f64  per layer: m_weights, m_biases, v_weights, v_biases   only with optimizer state
"""

import struct
from dataclasses import dataclass

import numpy as np

from ..exceptions import ModelFormatError

MODEL_MAGIC = b"SDQN"
MODEL_VERSION = 1

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class MLPParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "MLPParams":
        return MLPParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class AdamState:
    m_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_weights: list[np.ndarray]
    v_biases: list[np.ndarray]
    step: int = 0
    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = ADAM_EPS

    @classmethod
    def zeros_like(cls, params: MLPParams) -> "AdamState":
        return cls(
            m_weights=[np.zeros_like(w) for w in params.weights],
            m_biases=[np.zeros_like(b) for b in params.biases],
            v_weights=[np.zeros_like(w) for w in params.weights],
            v_biases=[np.zeros_like(b) for b in params.biases],
        )

    def copy(self) -> "AdamState":
        return AdamState(
            [m.copy() for m in self.m_weights],
            [m.copy() for m in self.m_biases],
            [v.copy() for v in self.v_weights],
            [v.copy() for v in self.v_biases],
            self.step,
            self.beta1,
            self.beta2,
            self.eps,
        )


@dataclass
class TrainBatch:
    """Inputs with the taken action and its target per row."""

    inputs: np.ndarray
    actions: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        rows = len(self.inputs)
        if len(self.actions) != rows or len(self.targets) != rows:
            raise ValueError("Batch row counts differ")


def init_params(layer_dims: list[int], rng: np.random.Generator) -> MLPParams:
    """He initialization: zero biases, N(0, 2/fan_in) weights."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims, layer_dims[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLPParams(weights, biases)


def _activations(params: MLPParams, inputs: np.ndarray) -> list[np.ndarray]:
    if inputs.shape[-1] != params.weights[0].shape[0]:
        raise ValueError(
            f"Input dimension {inputs.shape[-1]} does not match network "
            f"input {params.weights[0].shape[0]}"
        )
    layers = [inputs]
    last = len(params.weights) - 1
    for index, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = layers[-1] @ w + b
        layers.append(z if index == last else np.maximum(z, 0.0))
    return layers


def forward(params: MLPParams, x) -> np.ndarray:
    """Q-values per action for one input vector or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    return _activations(params, x)[-1]


def gradient(params: MLPParams, batch: TrainBatch) -> tuple[Gradients, float]:
    """Mean squared error on the taken action only, and its gradients."""
    inputs = np.atleast_2d(np.asarray(batch.inputs, dtype=np.float64))
    actions = np.asarray(batch.actions, dtype=np.int64)
    targets = np.asarray(batch.targets, dtype=np.float64)
    rows = np.arange(len(inputs))

    layers = _activations(params, inputs)
    outputs = layers[-1]
    if actions.size and (actions.min() < 0 or actions.max() >= outputs.shape[1]):
        raise ValueError("Action index out of range for this network")

    errors = outputs[rows, actions] - targets
    loss = float(np.mean(errors**2))

    upstream = np.zeros_like(outputs)
    upstream[rows, actions] = 2.0 * errors / len(inputs)

    grad_w = [None] * len(params.weights)
    grad_b = [None] * len(params.weights)
    for index in range(len(params.weights) - 1, -1, -1):
        grad_w[index] = layers[index].T @ upstream
        grad_b[index] = upstream.sum(axis=0)
        if index:
            upstream = (upstream @ params.weights[index].T) * (layers[index] > 0)
    return Gradients(grad_w, grad_b), loss


def adam_step(
    params: MLPParams, state: AdamState, grads: Gradients, lr: float
) -> tuple[MLPParams, AdamState]:
    """Bias-corrected Adam update; returns new params and state."""
    state = state.copy()
    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step

    def update(values, grad, m, v):
        m[:] = state.beta1 * m + (1.0 - state.beta1) * grad
        v[:] = state.beta2 * v + (1.0 - state.beta2) * grad**2
        m_hat = m / correction1
        v_hat = v / correction2
        return values - lr * m_hat / (np.sqrt(v_hat) + state.eps)

    weights = [
        update(w, g, m, v)
        for w, g, m, v in zip(params.weights, grads.weights, state.m_weights, state.v_weights)
    ]
    biases = [
        update(b, g, m, v)
        for b, g, m, v in zip(params.biases, grads.biases, state.m_biases, state.v_biases)
    ]
    return MLPParams(weights, biases), state


def lr_at(step: int, initial: float = 0.01, base: float = 0.96, decay_steps: float = 6000) -> float:
    return initial * base ** (step / decay_steps)


def serialize(params: MLPParams, adam: AdamState | None = None) -> bytes:
    dims = params.layer_dims
    parts = [
        struct.pack("<4sHH", MODEL_MAGIC, MODEL_VERSION, len(dims)),
        struct.pack(f"<{len(dims)}I", *dims),
        struct.pack("<B", adam is not None),
    ]
    arrays = []
    for w, b in zip(params.weights, params.biases):
        arrays += [w, b]
    if adam is not None:
        parts.append(struct.pack("<Qddd", adam.step, adam.beta1, adam.beta2, adam.eps))
        for moments in zip(adam.m_weights, adam.m_biases, adam.v_weights, adam.v_biases):
            arrays += moments
    parts += [np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays]
    return b"".join(parts)


def deserialize(data: bytes) -> tuple[MLPParams, AdamState | None]:
    try:
        magic, version, n_dims = struct.unpack_from("<4sHH", data, 0)
    except struct.error as exc:
        raise ModelFormatError("Model payload too short") from exc
    if magic != MODEL_MAGIC:
        raise ModelFormatError("Not a model payload")
    if version != MODEL_VERSION:
        raise ModelFormatError(f"Model format v{version} unsupported, expected v{MODEL_VERSION}")

    try:
        offset = struct.calcsize("<4sHH")
        dims = list(struct.unpack_from(f"<{n_dims}I", data, offset))
        offset += 4 * n_dims
        (has_adam,) = struct.unpack_from("<B", data, offset)
        offset += 1
        header = None
        if has_adam:
            header = struct.unpack_from("<Qddd", data, offset)
            offset += struct.calcsize("<Qddd")
    except struct.error as exc:
        raise ModelFormatError("Corrupt model header") from exc

    shapes = []
    for fan_in, fan_out in zip(dims, dims[1:]):
        shapes += [(fan_in, fan_out), (fan_out,)]
    if has_adam:
        for fan_in, fan_out in zip(dims, dims[1:]):
            shapes += [(fan_in, fan_out), (fan_out,)] * 2

    expected = offset + 8 * sum(int(np.prod(shape)) for shape in shapes)
    if len(data) != expected:
        raise ModelFormatError(f"Model payload has {len(data)} bytes, expected {expected}")

    arrays = []
    for shape in shapes:
        count = int(np.prod(shape))
        arrays.append(np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64))
        offset += 8 * count

    layers = len(dims) - 1
    params = MLPParams(arrays[0 : 2 * layers : 2], arrays[1 : 2 * layers : 2])
    if not has_adam:
        return params, None

    moments = arrays[2 * layers :]
    step, beta1, beta2, eps = header
    adam = AdamState(
        m_weights=moments[0::4],
        m_biases=moments[1::4],
        v_weights=moments[2::4],
        v_biases=moments[3::4],
        step=step,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )
    return params, adam
