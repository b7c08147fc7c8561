"""
Small differentiable function approximators: dense multi-layer perceptrons
with rectifier hidden layers, exact reverse-mode gradients, the Adam optimizer
and Polyak (soft) target updates.

Everything operates on plain NumPy arrays; inputs are either single vectors
of shape ``(DX,)`` or batches of shape ``(N, DX)``.
"""
from dataclasses import dataclass
from typing import *

import numpy as np  # type: ignore
from sklearn.utils import check_random_state  # type: ignore

from .utils import check_finite

CHECKPOINT_VERSION = 1

ACTIVATIONS = ("identity", "tanh")


@dataclass
class ParamSet:
    """
    Parameters of a dense network.

    Layer ``l`` maps ``h ↦ W_l h + b_l``; all but the last layer are followed
    by a rectifier, the last one by ``final_activation``.

    Parameters
    ----------
    weights : list of arrays of shape (out, in)
    biases : list of arrays of shape (out,)
    final_activation : str
        Either ``"identity"`` or ``"tanh"``.
    """
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    final_activation: str = "identity"

    def __post_init__(self):
        if self.final_activation not in ACTIVATIONS:
            raise NotImplementedError(
                f"Only {ACTIVATIONS} supported as final activation")
        if len(self.weights) != len(self.biases) or len(self.weights) == 0:
            raise ValueError("Need the same positive number of weight "
                             "matrices and bias vectors")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[0], ):
                raise ValueError(f"Layer {l}: weight shape {W.shape} does not "
                                 f"fit bias shape {b.shape}")
            if l > 0 and W.shape[1] != self.weights[l - 1].shape[0]:
                raise ValueError(f"Layer {l} expects {W.shape[1]} inputs but "
                                 f"layer {l - 1} has "
                                 f"{self.weights[l - 1].shape[0]} outputs")

    @property
    def in_dim(self):
        return self.weights[0].shape[1]

    @property
    def out_dim(self):
        return self.weights[-1].shape[0]

    def arrays(self) -> List[np.ndarray]:
        return [a for wb in zip(self.weights, self.biases) for a in wb]

    def map(self, f, *others: "ParamSet") -> "ParamSet":
        """
        Apply ``f`` elementwise (array by array) to this and other,
        shape-identical parameter sets.
        """
        for o in others:
            if o.shapes() != self.shapes():
                raise ValueError("Parameter sets differ in shape")
        return ParamSet(
            [
                f(W, *[o.weights[l] for o in others])
                for l, W in enumerate(self.weights)
            ],
            [
                f(b, *[o.biases[l] for o in others])
                for l, b in enumerate(self.biases)
            ],
            final_activation=self.final_activation)

    def copy(self):
        return self.map(np.copy)

    def zeros_like(self):
        return self.map(np.zeros_like)

    def shapes(self):
        return [a.shape for a in self.arrays()]

    def flat(self) -> np.ndarray:
        return np.concatenate([a.reshape(-1) for a in self.arrays()])

    def with_flat(self, theta: np.ndarray) -> "ParamSet":
        """
        A parameter set of this shape whose values are taken from the flat
        vector ``theta`` (inverse of ``flat``).
        """
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.size(), ):
            raise ValueError(f"Expected {self.size()} values but got "
                             f"{theta.shape}")
        arrays = []
        pos = 0
        for a in self.arrays():
            arrays.append(theta[pos:pos + a.size].reshape(a.shape))
            pos += a.size
        return ParamSet(arrays[0::2],
                        arrays[1::2],
                        final_activation=self.final_activation)

    def size(self) -> int:
        return sum(a.size for a in self.arrays())

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def init_params(sizes: Sequence[int],
                random_state,
                final_activation="identity") -> ParamSet:
    """
    Glorot-uniform initialised weights (``±sqrt(6 / (fan_in + fan_out))``)
    and zero biases.

    Parameters
    ----------
    sizes : sequence of int
        Layer widths including input and output, e.g. ``[DX, 64, 64, Dy]``.
    random_state : int, NumPy (legacy) ``RandomState`` object
    final_activation : str
    """
    random_state = check_random_state(random_state)
    if len(sizes) < 2:
        raise ValueError("Need at least an input and an output size")
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6 / (fan_in + fan_out))
        weights.append(
            random_state.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ParamSet(weights, biases, final_activation=final_activation)


@dataclass
class Tape:
    """
    Activations cached by ``forward`` for ``backward``.
    """
    inputs: List[np.ndarray]
    preacts: List[np.ndarray]
    output: np.ndarray
    single: bool


def forward(params: ParamSet, X: np.ndarray) -> Tuple[np.ndarray, Tape]:
    """
    Evaluate the network.

    Parameters
    ----------
    params : ParamSet
    X : array of shape (DX,) or (N, DX)

    Returns
    -------
    out, tape : array of shape (Dy,) or (N, Dy), Tape
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    H = np.atleast_2d(X)
    if H.shape[1] != params.in_dim:
        raise ValueError(f"Input has {H.shape[1]} features but network "
                         f"expects {params.in_dim}")
    inputs = []
    preacts = []
    L = len(params.weights)
    for l, (W, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(H)
        Z = H @ W.T + b
        preacts.append(Z)
        if l < L - 1:
            H = np.maximum(Z, 0.0)
        elif params.final_activation == "tanh":
            H = np.tanh(Z)
        else:
            H = Z
    tape = Tape(inputs=inputs, preacts=preacts, output=H, single=single)
    return (H[0] if single else H), tape


def backward(params: ParamSet, tape: Tape,
             output_grad: np.ndarray) -> Tuple[ParamSet, np.ndarray]:
    """
    Reverse-mode gradient of ``Σ output · output_grad`` (summed over the
    batch).

    Parameters
    ----------
    params : ParamSet
    tape : Tape
        From the matching ``forward`` call.
    output_grad : array shaped like the output of that call

    Returns
    -------
    grads, input_grad : ParamSet, array shaped like the input
    """
    G = np.atleast_2d(np.asarray(output_grad, dtype=float))
    if G.shape != tape.output.shape:
        raise ValueError(f"Output gradient of shape {G.shape} does not match "
                         f"output of shape {tape.output.shape}")
    L = len(params.weights)
    dWs = [None] * L
    dbs = [None] * L
    for l in reversed(range(L)):
        Z = tape.preacts[l]
        if l == L - 1:
            if params.final_activation == "tanh":
                G = G * (1 - tape.output**2)
        else:
            G = G * (Z > 0)
        dWs[l] = G.T @ tape.inputs[l]
        dbs[l] = G.sum(axis=0)
        G = G @ params.weights[l]
    grads = ParamSet(dWs, dbs, final_activation=params.final_activation)
    return grads, (G[0] if tape.single else G)


@dataclass
class OptimState:
    """
    State of the Adam optimizer for one parameter set.
    """
    m: ParamSet
    v: ParamSet
    lr: float
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: ParamSet, lr: float, **kwargs) -> OptimState:
    return OptimState(m=params.zeros_like(),
                      v=params.zeros_like(),
                      lr=lr,
                      **kwargs)


def clip_grad_norm(grads: ParamSet, max_norm: float) -> ParamSet:
    """
    Rescale the gradient so that its global L2 norm is at most ``max_norm``.
    """
    norm = np.linalg.norm(grads.flat())
    if norm <= max_norm:
        return grads
    return grads.map(lambda g: g * (max_norm / norm))


def adam_update(p, g, m, v, step: int, lr: float, beta1=0.9, beta2=0.999,
                eps=1e-8):
    """
    Adam update of a single array (or scalar) ``p`` with gradient ``g`` and
    moments ``m``, ``v``; ``step`` is the (already incremented) step count.

    Returns
    -------
    p, m, v
    """
    m = beta1 * m + (1 - beta1) * g
    v = beta2 * v + (1 - beta2) * g**2
    m_hat = m / (1 - beta1**step)
    v_hat = v / (1 - beta2**step)
    return p - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


def adam_step(params: ParamSet,
              grads: ParamSet,
              opt: OptimState,
              max_grad_norm: Optional[float] = None,
              lr: Optional[float] = None) -> Tuple[ParamSet, OptimState]:
    """
    One bias-corrected Adam descent step.

    Neither ``params`` nor ``opt`` are modified; new objects are returned.
    If the gradient contains non-finite values, ``FloatingPointError`` is
    raised before anything is computed.

    Parameters
    ----------
    params, grads : ParamSet
    opt : OptimState
    max_grad_norm : float or None
        If given, clip the gradient's global norm first.
    lr : float or None
        Overrides ``opt.lr`` for this step (e.g. for learning rate decay).
    """
    if grads.shapes() != params.shapes():
        raise ValueError("Gradient and parameters differ in shape")
    check_finite("gradient", *grads.arrays())
    if max_grad_norm is not None:
        grads = clip_grad_norm(grads, max_grad_norm)
    lr = opt.lr if lr is None else lr

    step = opt.step + 1
    updated = [
        adam_update(p, g, m, v, step, lr, opt.beta1, opt.beta2, opt.eps)
        for p, g, m, v in zip(params.arrays(), grads.arrays(), opt.m.arrays(),
                              opt.v.arrays())
    ]
    params, m, v = [
        ParamSet(list(arrays[0::2]), list(arrays[1::2]),
                 params.final_activation)
        for arrays in zip(*updated)
    ]
    opt = OptimState(m=m,
                     v=v,
                     lr=opt.lr,
                     step=step,
                     beta1=opt.beta1,
                     beta2=opt.beta2,
                     eps=opt.eps)
    return params, opt


def soft_update(target: ParamSet, main: ParamSet, tau: float) -> ParamSet:
    """
    Polyak averaging ``target ← (1 - τ) target + τ main``.
    """
    if not 0 <= tau <= 1:
        raise ValueError(f"tau must lie in [0, 1] but is {tau}")
    return target.map(lambda t, m: (1 - tau) * t + tau * m, main)


def save_checkpoint(path, networks: Dict[str, ParamSet], scalars=None):
    """
    Store named parameter sets (and optional named scalars) in an ``.npz``
    archive together with a format version and a shape header.
    """
    arrays = {"__version__": np.array(CHECKPOINT_VERSION)}
    for name, params in networks.items():
        arrays[f"{name}/__layers__"] = np.array(len(params.weights))
        arrays[f"{name}/__final__"] = np.array(params.final_activation)
        for l, (W, b) in enumerate(zip(params.weights, params.biases)):
            arrays[f"{name}/W{l}"] = W
            arrays[f"{name}/b{l}"] = b
    for name, value in (scalars or {}).items():
        arrays[f"__scalar__/{name}"] = np.array(value)
    np.savez(path, **arrays)


def load_checkpoint(path) -> Tuple[Dict[str, ParamSet], Dict[str, float]]:
    """
    Inverse of ``save_checkpoint``.
    """
    with np.load(path) as f:
        version = int(f["__version__"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"Unsupported checkpoint version {version}")
        names = sorted({
            k.split("/")[0]
            for k in f.files if "/" in k and not k.startswith("__scalar__")
        })
        networks = {}
        for name in names:
            L = int(f[f"{name}/__layers__"])
            networks[name] = ParamSet(
                [f[f"{name}/W{l}"] for l in range(L)],
                [f[f"{name}/b{l}"] for l in range(L)],
                final_activation=str(f[f"{name}/__final__"]))
        scalars = {
            k.split("/", 1)[1]: f[k].item()
            for k in f.files if k.startswith("__scalar__/")
        }
    return networks, scalars
