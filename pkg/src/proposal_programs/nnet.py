"""Single-hidden-layer sigmoid network with hand-written backpropagation.

``output = W_out @ sigmoid(W_h @ input + b_h) + b_out``.  The four tensors
live in a :class:`~proposal_programs.params.ParamStore` under
``<prefix>h_weights``, ``<prefix>h_biases``, ``<prefix>out_weights`` and
``<prefix>out_biases``.
"""

from typing import NamedTuple

import numpy as np

from .errors import ShapeMismatch


class ForwardCache(NamedTuple):
    input: np.ndarray
    hidden: np.ndarray


class MLP:
    def __init__(self, prefix=""):
        self.prefix = prefix
        self.h_weights = prefix + "h_weights"
        self.h_biases = prefix + "h_biases"
        self.out_weights = prefix + "out_weights"
        self.out_biases = prefix + "out_biases"

    @property
    def names(self):
        return (self.h_weights, self.h_biases, self.out_weights, self.out_biases)

    def init_params(self, store, in_dim, hidden, out_dim, seed=0):
        """Weights ~ Normal(0, 1/sqrt(fan_in)), biases zero."""
        rng = np.random.default_rng(seed)
        store[self.h_weights] = rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(hidden, in_dim))
        store[self.h_biases] = np.zeros(hidden)
        store[self.out_weights] = rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(out_dim, hidden))
        store[self.out_biases] = np.zeros(out_dim)
        return store

    def shapes(self, store):
        wh, bh, wo, bo = (store[n] for n in self.names)
        if wh.ndim != 2 or wo.ndim != 2 or bh.shape != (wh.shape[0],) or wo.shape[1] != wh.shape[0]:
            raise ShapeMismatch("inconsistent hidden-layer shapes")
        if bo.shape != (wo.shape[0],):
            raise ShapeMismatch("out_biases length must equal out_weights rows")
        return wh.shape[1], wh.shape[0], wo.shape[0]

    def forward(self, store, x):
        x = np.asarray(x, dtype=float)
        wh = store[self.h_weights]
        if x.shape != (wh.shape[1],):
            raise ShapeMismatch(f"input of shape {x.shape}, network expects ({wh.shape[1]},)")
        hidden = 1.0 / (1.0 + np.exp(-(wh @ x + store[self.h_biases])))
        out = store[self.out_weights] @ hidden + store[self.out_biases]
        return out, ForwardCache(x, hidden)

    def backward(self, store, cache, output_grad):
        """Gradients of ``output_grad . output`` w.r.t. all four tensors and the input."""
        g = np.asarray(output_grad, dtype=float)
        wo = store[self.out_weights]
        if g.shape != (wo.shape[0],):
            raise ShapeMismatch(f"output gradient of shape {g.shape}, network has {wo.shape[0]} outputs")
        h = cache.hidden
        dh = wo.T @ g
        da = dh * h * (1.0 - h)
        return {
            self.h_weights: np.outer(da, cache.input),
            self.h_biases: da,
            self.out_weights: np.outer(g, h),
            self.out_biases: g.copy(),
            "input": store[self.h_weights].T @ da,
        }

    def param_grads(self, store, cache, output_grad):
        """Like :meth:`backward` but without the input gradient."""
        grads = self.backward(store, cache, output_grad)
        del grads["input"]
        return grads
