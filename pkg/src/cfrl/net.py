"""Minimal dense network engine: forward, exact backprop, Adam.

Everything is double precision numpy. Networks are small (a few thousand
parameters), so the layers are plain (W, b, activation) triples and the
backward pass is written out by hand. ``backward`` also returns the
gradient with respect to the input vector, which the DDPG actor update
needs (the critic's action gradient).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError

SERIAL_VERSION = 1


def relu(x):
    return np.maximum(x, 0.0)


# activation -> (fn, derivative as a function of the pre-activation)
ACTIVATIONS = {
    "relu": (relu, lambda z: (z > 0.0).astype(float)),
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    "identity": (lambda z: z, lambda z: np.ones_like(z)),
}


@dataclass
class Layer:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    activation: str


@dataclass
class DenseNet:
    layers: list[Layer] = field(default_factory=list)

    @property
    def input_dim(self) -> int:
        return self.layers[0].W.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].W.shape[0]

    def parameters(self):
        """Flat list of parameter arrays, layer by layer (W then b)."""
        out = []
        for lay in self.layers:
            out.append(lay.W)
            out.append(lay.b)
        return out

    def copy(self) -> "DenseNet":
        return DenseNet(
            [Layer(l.W.copy(), l.b.copy(), l.activation) for l in self.layers]
        )

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the network. x is (in,) or (batch, in)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.input_dim:
            raise ValueError(
                f"input has {h.shape[1]} features, net expects {self.input_dim}"
            )
        for lay in self.layers:
            z = h @ lay.W.T + lay.b
            h = ACTIVATIONS[lay.activation][0](z)
        return h[0] if single else h

    def backward(self, x: np.ndarray, dL_dy: np.ndarray):
        """Reverse-mode gradients for the loss whose output-gradient is dL_dy.

        Returns ``(grads, dL_dx)`` where grads is a list of (dW, db) per
        layer (summed over the batch) and dL_dx matches x's shape.
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = x[None, :] if single else x
        g = np.asarray(dL_dy, dtype=float)
        g = g[None, :] if single else g
        if h.shape[1] != self.input_dim:
            raise ValueError(
                f"input has {h.shape[1]} features, net expects {self.input_dim}"
            )
        if g.shape != (h.shape[0], self.output_dim):
            raise ValueError(
                f"output gradient shape {g.shape} does not match "
                f"({h.shape[0]}, {self.output_dim})"
            )

        # forward, caching inputs and pre-activations per layer
        inputs, preacts = [], []
        for lay in self.layers:
            inputs.append(h)
            z = h @ lay.W.T + lay.b
            preacts.append(z)
            h = ACTIVATIONS[lay.activation][0](z)

        grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(self.layers)
        for k in range(len(self.layers) - 1, -1, -1):
            lay = self.layers[k]
            dz = g * ACTIVATIONS[lay.activation][1](preacts[k])
            grads[k] = (dz.T @ inputs[k], dz.sum(axis=0))
            g = dz @ lay.W
        return grads, (g[0] if single else g)


def build_net(layer_dims, activations, rng) -> DenseNet:
    """Create a network with the package's initialization conventions.

    Hidden layers draw uniformly in +-1/sqrt(fan_in); the final layer in
    +-3e-3 so that fresh actors/critics start near zero output.
    """
    if len(activations) != len(layer_dims) - 1:
        raise ValueError("need one activation per weight layer")
    layers = []
    for k in range(len(layer_dims) - 1):
        fan_in, fan_out = layer_dims[k], layer_dims[k + 1]
        lim = 3e-3 if k == len(layer_dims) - 2 else 1.0 / np.sqrt(fan_in)
        W = rng.uniform(-lim, lim, size=(fan_out, fan_in))
        b = rng.uniform(-lim, lim, size=fan_out)
        layers.append(Layer(W, b, activations[k]))
    return DenseNet(layers)


def flatten_grads(pairs):
    """[(dW, db), ...] -> flat list matching DenseNet.parameters() order."""
    return [g for dW, db in pairs for g in (dW, db)]


class Adam:
    """Adam over a list of parameter arrays, updated in place."""

    def __init__(self, params, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads) -> None:
        """One bias-corrected update; grads align with the parameter list."""
        grads = list(grads)
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameter list")
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise DivergenceError("non-finite gradient in Adam step")
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, m, v, g in zip(self.params, self.m, self.v, grads):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def soft_update(target: DenseNet, source: DenseNet, tau: float) -> None:
    """theta' <- tau*theta + (1-tau)*theta', in place on the target."""
    for pt, ps in zip(target.parameters(), source.parameters()):
        pt *= 1.0 - tau
        pt += tau * ps


def net_to_dict(net: DenseNet) -> dict:
    return {
        "version": SERIAL_VERSION,
        "layers": [
            {
                "shape": list(lay.W.shape),
                "activation": lay.activation,
                "W": lay.W.ravel().tolist(),  # row-major
                "b": lay.b.tolist(),
            }
            for lay in net.layers
        ],
    }


def net_from_dict(doc: dict) -> DenseNet:
    if doc.get("version") != SERIAL_VERSION:
        raise ValueError(f"unsupported network serialization version: {doc.get('version')}")
    layers = []
    for spec in doc["layers"]:
        shape = tuple(spec["shape"])
        W = np.array(spec["W"], dtype=float).reshape(shape)
        b = np.array(spec["b"], dtype=float)
        layers.append(Layer(W, b, spec["activation"]))
    return DenseNet(layers)


def save_net(net: DenseNet, path) -> None:
    with open(path, "w") as fh:
        json.dump(net_to_dict(net), fh)


def load_net(path) -> DenseNet:
    with open(path) as fh:
        return net_from_dict(json.load(fh))
