"""
A small multilayer perceptron with hand-written backpropagation and Adam.

Every network in the engine (the noise predictor and both critics) is an
:class:`MlpParams`. Gradients come from :func:`backward` rather than an
autodiff library, so each one can be checked against finite differences with
:func:`gradient_check`. All arithmetic is float64.
"""
import logging
from typing import Callable, List, Optional, Sequence, Tuple
import numpy as np
from qvpo.errors import ContractViolation, NumericalError

logger = logging.getLogger(__name__)

ACTIVATIONS = ["mish", "identity"]


class MlpParams(object):
    """
    Weights and biases of a fully connected network.

    ``weights[i]`` has shape ``(fan_in, fan_out)`` and inputs are row vectors,
    so a layer computes ``x @ W + b``. ``activation`` is applied after every
    layer except the last, whose output is left linear.
    """

    def __init__(self, weights: List[np.ndarray], biases: List[np.ndarray], activation: str = "mish"):
        if activation not in ACTIVATIONS:
            raise ContractViolation("Activation '{}' not recognized".format(activation))
        if not weights or len(weights) != len(biases):
            raise ContractViolation("A network needs one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ContractViolation("Layer {} has weight shape {} and bias shape {}".format(i, w.shape, b.shape))
            if i > 0 and weights[i - 1].shape[1] != w.shape[0]:
                raise ContractViolation("Layer {} expects {} inputs but layer {} produces {}".format(
                                        i, w.shape[0], i - 1, weights[i - 1].shape[1]))
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.activation = activation

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def arrays(self) -> List[np.ndarray]:
        """ All parameter arrays in a fixed order: W0, b0, W1, b1, ... """
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> 'MlpParams':
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.activation)

    def zeros_like(self) -> 'MlpParams':
        return MlpParams([np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases], self.activation)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def __repr__(self) -> str:
        dims = [self.input_dim] + [w.shape[1] for w in self.weights]
        return "<MlpParams {} {}>".format("-".join(map(str, dims)), self.activation)


def init_mlp(input_dim: int,
             output_dim: int,
             rng: np.random.Generator,
             hidden: Sequence[int] = (256, 256),
             activation: str = "mish") -> MlpParams:
    """
    Creates a network with every weight and bias drawn uniformly from
    ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``.

    Args:
        input_dim (int): Length of the input vector.
        output_dim (int): Length of the output vector.
        rng (numpy.random.Generator): Source of the initial values.
        hidden (sequence of int): Width of each hidden layer.
        activation (str): Hidden-layer activation, "mish" or "identity".

    Returns:
        MlpParams: The freshly initialized network.
    """
    dims = [input_dim] + list(hidden) + [output_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpParams(weights, biases, activation)


def mish(z: np.ndarray) -> np.ndarray:
    # softplus via logaddexp stays finite for large |z|
    return z * np.tanh(np.logaddexp(0.0, z))


def _mish_grad(z: np.ndarray) -> np.ndarray:
    tsp = np.tanh(np.logaddexp(0.0, z))
    sigmoid = 0.5 * (1.0 + np.tanh(0.5 * z))
    return tsp + z * (1.0 - tsp * tsp) * sigmoid


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "mish":
        return mish(z)
    return z


def _activate_grad(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "mish":
        return _mish_grad(z)
    return np.ones_like(z)


def _as_batch(params: MlpParams, x: np.ndarray) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[np.newaxis, :]
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ContractViolation("Expected input of length {}, got shape {}".format(params.input_dim, x.shape))
    return x, single


def _forward_cache(params: MlpParams, x: np.ndarray) -> Tuple[List[np.ndarray], List[np.ndarray], np.ndarray]:
    """ Runs the network on a 2-D batch and keeps what backprop needs:
    the input to every layer and every pre-activation. """
    layer_inputs, pre_activations = [], []
    h = x
    last = params.num_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        layer_inputs.append(h)
        z = h @ w + b
        pre_activations.append(z)
        h = z if i == last else _activate(z, params.activation)
    return layer_inputs, pre_activations, h


def forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """
    Evaluates the network. ``x`` is either one input vector or a 2-D batch
    with one input per row; the output has the same rank.
    """
    batch, single = _as_batch(params, x)
    _, _, out = _forward_cache(params, batch)
    return out[0] if single else out


def backward(params: MlpParams, x: np.ndarray, upstream_grad: np.ndarray) -> Tuple[MlpParams, np.ndarray]:
    """
    Computes the exact gradients of ``sum(upstream_grad * forward(params, x))``.

    Args:
        params (MlpParams): The network.
        x (numpy.ndarray): One input vector or a 2-D batch of inputs.
        upstream_grad (numpy.ndarray): Gradient of the loss with respect to the
            network output, shaped like ``forward(params, x)``.

    Returns:
        tuple: Parameter gradients (an :class:`MlpParams`, summed over the batch)
        and the gradient with respect to ``x`` (same shape as ``x``).
    """
    batch, single = _as_batch(params, x)
    upstream = np.asarray(upstream_grad, dtype=np.float64)
    if single:
        upstream = upstream[np.newaxis, :]
    if upstream.shape != (batch.shape[0], params.output_dim):
        raise ContractViolation("Upstream gradient has shape {} but the network output has shape {}".format(
                                upstream.shape, (batch.shape[0], params.output_dim)))
    layer_inputs, pre_activations, _ = _forward_cache(params, batch)
    grad_w = [None] * params.num_layers  # type: List[Optional[np.ndarray]]
    grad_b = [None] * params.num_layers  # type: List[Optional[np.ndarray]]
    delta = upstream
    for i in reversed(range(params.num_layers)):
        if i != params.num_layers - 1:
            delta = delta * _activate_grad(pre_activations[i], params.activation)
        grad_w[i] = layer_inputs[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        delta = delta @ params.weights[i].T
    grads = MlpParams(grad_w, grad_b, params.activation)
    return grads, (delta[0] if single else delta)


class AdamState(object):
    """ First and second moment estimates for every parameter of one network. """

    def __init__(self, first: MlpParams, second: MlpParams, step: int = 0, lr: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.first = first
        self.second = second
        self.step = step
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    @classmethod
    def for_params(cls, params: MlpParams, lr: float = 3e-4) -> 'AdamState':
        return cls(params.zeros_like(), params.zeros_like(), lr=lr)

    def copy(self) -> 'AdamState':
        return AdamState(self.first.copy(), self.second.copy(), self.step, self.lr, self.beta1, self.beta2, self.eps)


def adam_step(state: AdamState, params: MlpParams, grads: MlpParams) -> Tuple[MlpParams, AdamState]:
    """
    Applies one bias-corrected Adam update. Neither input is modified; the
    updated parameters and optimizer state are returned.
    """
    if len(grads.weights) != len(params.weights):
        raise ContractViolation("Gradients have {} layers but the network has {}".format(
                                len(grads.weights), len(params.weights)))
    for layer, (gw, gb) in enumerate(zip(grads.weights, grads.biases)):
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise NumericalError("Non-finite gradient in layer {}".format(layer))

    step = state.step + 1
    correction1 = 1.0 - state.beta1 ** step
    correction2 = 1.0 - state.beta2 ** step
    new_params, first, second = [], [], []
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.first.arrays(), state.second.arrays()):
        if p.shape != g.shape:
            raise ContractViolation("Gradient shape {} does not match parameter shape {}".format(g.shape, p.shape))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        update = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        new_params.append(p - update)
        first.append(m)
        second.append(v)

    def rebuild(arrays):
        return MlpParams(arrays[0::2], arrays[1::2], params.activation)

    new_state = AdamState(rebuild(first), rebuild(second), step, state.lr, state.beta1, state.beta2, state.eps)
    return rebuild(new_params), new_state


def polyak_average(shadow: MlpParams, online: MlpParams, tau: float) -> MlpParams:
    """ Returns ``tau * online + (1 - tau) * shadow`` parameter-wise. """
    arrays = [s * (1.0 - tau) + o * tau for s, o in zip(shadow.arrays(), online.arrays())]
    return MlpParams(arrays[0::2], arrays[1::2], shadow.activation)


LossClosure = Callable[[MlpParams], Tuple[float, MlpParams]]


def gradient_check(closure: LossClosure,
                   params: MlpParams,
                   rng: Optional[np.random.Generator] = None,
                   n_samples: int = 64,
                   h: float = 1e-5,
                   step_scales: Sequence[float] = (1.0, 10.0, 100.0)) -> float:
    """
    Compares the analytic gradient returned by ``closure`` with central
    finite differences on a random subset of parameters.

    The closure must be deterministic: called twice with the same parameters
    it has to return the same loss. Every sampled coordinate is scored with
    ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)``. The central
    difference is taken with step ``h`` and, while the score is not yet below
    ``1e-8``, with the larger steps ``h * scale`` for each of ``step_scales``;
    a coordinate keeps its best score. Larger steps resolve small derivatives
    that round-off in the loss would swamp at ``h``.

    Args:
        closure: Maps parameters to ``(loss, gradients)``.
        params (MlpParams): The point at which to check.
        rng (numpy.random.Generator): Chooses the sampled coordinates.
        n_samples (int): Number of coordinates to check.
        h (float): Smallest finite difference step.
        step_scales: Multiples of ``h`` to try, smallest first.

    Returns:
        float: The largest per-coordinate score.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    _, grads = closure(params)
    arrays = params.arrays()
    sizes = np.array([a.size for a in arrays])
    total = int(sizes.sum())
    picks = rng.choice(total, size=min(n_samples, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for flat in picks:
        which = int(np.searchsorted(offsets, flat, side="right") - 1)
        index = np.unravel_index(int(flat - offsets[which]), arrays[which].shape)
        analytic = grads.arrays()[which][index]

        def perturbed(delta):
            shifted = params.copy()
            shifted.arrays()[which][index] += delta
            return closure(shifted)[0]

        best = np.inf
        for scale in step_scales:
            step = h * scale
            numeric = (perturbed(step) - perturbed(-step)) / (2.0 * step)
            best = min(best, abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8))
            if best < 1e-8:
                break
        worst = max(worst, best)
    logger.debug("gradient check over %d coordinates: max relative error %g", len(picks), worst)
    return worst
