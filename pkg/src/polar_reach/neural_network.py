"""Feed-forward controllers: layers, activations and the text file format."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .interval import Interval

__all__ = [
    "Activation",
    "NeuralNetwork",
    "NNFormatError",
    "activation_eval",
    "activation_lipschitz",
    "nn_forward",
    "nn_load",
    "nn_dump",
]


class NNFormatError(ValueError):
    """Malformed network file; ``line`` is 1-based (``None`` at end of file)."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = f"{path or '<network>'}:{line}" if line is not None else (path or "<network>")
        super().__init__(f"{where}: {message}")
        self.line = line
        self.path = path


class Activation(str, Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    IDENTITY = "identity"

    def __call__(self, y):
        return activation_eval(self, y)

    def derivative(self, y: float) -> float:
        if self is Activation.RELU:
            return 1.0 if y > 0 else 0.0
        if self is Activation.SIGMOID:
            s = _sigmoid(y)
            return s * (1.0 - s)
        if self is Activation.TANH:
            return 1.0 - math.tanh(y) ** 2
        return 1.0

    def is_affine_on(self, Y: Interval) -> bool:
        if self is Activation.IDENTITY:
            return True
        if self is Activation.RELU:
            return Y.lo >= 0.0 or Y.hi <= 0.0
        return Y.is_point()


def _sigmoid(y):
    if isinstance(y, np.ndarray):
        out = np.empty_like(y, dtype=float)
        pos = y >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-y[pos]))
        e = np.exp(y[~pos])
        out[~pos] = e / (1.0 + e)
        return out
    if y >= 0:
        return 1.0 / (1.0 + math.exp(-y))
    e = math.exp(y)
    return e / (1.0 + e)


def activation_eval(sigma: Activation, y):
    """Scalar or element-wise evaluation."""
    sigma = Activation(sigma)
    if sigma is Activation.RELU:
        return np.maximum(y, 0.0) if isinstance(y, np.ndarray) else max(float(y), 0.0)
    if sigma is Activation.SIGMOID:
        return _sigmoid(y if isinstance(y, np.ndarray) else float(y))
    if sigma is Activation.TANH:
        return np.tanh(y) if isinstance(y, np.ndarray) else math.tanh(y)
    return y if isinstance(y, np.ndarray) else float(y)


def activation_lipschitz(sigma: Activation, Y: Interval) -> float:
    """Lipschitz constant of ``sigma`` on ``Y`` (max of ``|sigma'|``, padded upward)."""
    sigma = Activation(sigma)
    if sigma is Activation.IDENTITY:
        return 1.0
    if sigma is Activation.RELU:
        return 1.0 if Y.hi > 0.0 else 0.0
    cap = 0.25 if sigma is Activation.SIGMOID else 1.0
    if Y.lo <= 0.0 <= Y.hi:
        return cap
    # sigmoid' and tanh' are even and decrease in |y|
    y = Y.lo if Y.lo > 0.0 else -Y.hi
    return min(cap, sigma.derivative(y) * (1.0 + 1e-12) + 1e-300)


@dataclass(frozen=True)
class NeuralNetwork:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activations: tuple[Activation, ...]

    def __post_init__(self) -> None:
        W = tuple(np.atleast_2d(np.asarray(w, dtype=float)) for w in self.weights)
        B = tuple(np.asarray(b, dtype=float).ravel() for b in self.biases)
        A = tuple(Activation(a) for a in self.activations)
        if not (len(W) == len(B) == len(A)) or not W:
            raise ValueError("need one weight matrix, bias vector and activation per layer")
        for i, (w, b) in enumerate(zip(W, B)):
            if w.shape[0] != b.size:
                raise ValueError(f"layer {i + 1}: {w.shape[0]} rows but {b.size} biases")
            if i and w.shape[1] != W[i - 1].shape[0]:
                raise ValueError(
                    f"layer {i + 1}: expects {w.shape[1]} inputs, previous layer has {W[i - 1].shape[0]}"
                )
        for arr in W + B:
            arr.setflags(write=False)
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "biases", B)
        object.__setattr__(self, "activations", A)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def hidden_sizes(self) -> list[int]:
        return [w.shape[0] for w in self.weights[:-1]]

    def __call__(self, x) -> np.ndarray:
        return nn_forward(self, x)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NeuralNetwork):
            return NotImplemented
        return (
            self.activations == other.activations
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
            and self.num_layers == other.num_layers
        )

    __hash__ = None  # type: ignore[assignment]


def nn_forward(net: NeuralNetwork, x: Sequence[float]) -> np.ndarray:
    """Network output for one input vector, or row-wise for a 2-D batch."""
    y = np.asarray(x, dtype=float)
    batch = y.ndim == 2
    y = y if batch else y.ravel()[None, :]
    if y.shape[1] != net.input_dim:
        raise ValueError(f"input has {y.shape[1]} entries, network expects {net.input_dim}")
    for W, b, sigma in zip(net.weights, net.biases, net.activations):
        y = activation_eval(sigma, y @ W.T + b)
    return y if batch else y[0]


# ---------------------------------------------------------------------------
# file format: one token per line, '#' starts a comment line


class _Lines:
    def __init__(self, text: str, path: str | None):
        self.items = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            s = raw.strip()
            if s and not s.startswith("#"):
                self.items.append((lineno, s))
        self.pos = 0
        self.path = path

    def next(self, what: str) -> tuple[int, str]:
        if self.pos >= len(self.items):
            raise NNFormatError(f"unexpected end of file while reading {what}", None, self.path)
        item = self.items[self.pos]
        self.pos += 1
        return item

    def int(self, what: str) -> int:
        lineno, tok = self.next(what)
        try:
            v = int(tok)
        except ValueError:
            raise NNFormatError(f"expected an integer for {what}, got {tok!r}", lineno, self.path) from None
        if v < 0:
            raise NNFormatError(f"{what} must be non-negative", lineno, self.path)
        return v

    def float(self, what: str) -> float:
        lineno, tok = self.next(what)
        try:
            return float(tok)
        except ValueError:
            raise NNFormatError(f"expected a number for {what}, got {tok!r}", lineno, self.path) from None


def parse_network(text: str, path: str | None = None) -> NeuralNetwork:
    r = _Lines(text, path)
    n_in = r.int("input count")
    n_out = r.int("output count")
    M = r.int("hidden layer count")
    sizes = [n_in] + [r.int(f"size of hidden layer {i + 1}") for i in range(M)] + [n_out]
    acts = []
    for i in range(M + 1):
        lineno, tok = r.next(f"activation of layer {i + 1}")
        try:
            acts.append(Activation(tok.lower()))
        except ValueError:
            raise NNFormatError(f"unknown activation {tok!r}", lineno, path) from None
    weights, biases = [], []
    for i in range(M + 1):
        rows, cols = sizes[i + 1], sizes[i]
        W = np.empty((rows, cols))
        b = np.empty(rows)
        for j in range(rows):
            for l in range(cols):
                W[j, l] = r.float(f"weight ({j + 1},{l + 1}) of layer {i + 1}")
            b[j] = r.float(f"bias {j + 1} of layer {i + 1}")
        weights.append(W)
        biases.append(b)
    if r.pos < len(r.items):
        lineno, tok = r.items[r.pos]
        raise NNFormatError(f"trailing content {tok!r}", lineno, path)
    return NeuralNetwork(tuple(weights), tuple(biases), tuple(acts))


def nn_load(path: str | Path) -> NeuralNetwork:
    path = Path(path)
    return parse_network(path.read_text(), str(path))


def format_network(net: NeuralNetwork) -> str:
    lines = [str(net.input_dim), str(net.output_dim), str(net.num_layers - 1)]
    lines += [str(h) for h in net.hidden_sizes]
    lines += [a.value for a in net.activations]
    for W, b in zip(net.weights, net.biases):
        for j in range(W.shape[0]):
            lines += [repr(float(w)) for w in W[j]]
            lines.append(repr(float(b[j])))
    return "\n".join(lines) + "\n"


def nn_dump(net: NeuralNetwork, path: str | Path) -> None:
    Path(path).write_text(format_network(net))
