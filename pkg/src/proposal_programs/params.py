"""Named real tensors with paired gradient accumulators."""

import numpy as np


class ParamStore:
    """Mapping of parameter name to a float array (scalar, vector or matrix).

    Each entry owns a gradient accumulator of the same shape.  Programs read
    values with ``params["name"]``; the trainer adds gradient contributions
    with :meth:`accumulate`.
    """

    def __init__(self, values=None):
        self.values = {}
        self.grads = {}
        for name, v in (values or {}).items():
            self[name] = v

    def __setitem__(self, name, value):
        arr = np.array(value, dtype=float)
        self.values[name] = arr
        self.grads[name] = np.zeros_like(arr)

    def __getitem__(self, name):
        return self.values[name]

    def __contains__(self, name):
        return name in self.values

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    def names(self):
        return list(self.values)

    def shape(self, name):
        return self.values[name].shape

    def zero_grad(self):
        for g in self.grads.values():
            g[...] = 0.0

    def accumulate(self, contributions, scale=1.0):
        for name, g in contributions.items():
            self.grads[name] += scale * np.asarray(g, dtype=float)

    def zeros_like(self):
        """A dict of zero arrays shaped like every parameter."""
        return {name: np.zeros_like(v) for name, v in self.values.items()}

    def copy(self):
        out = ParamStore()
        for name, v in self.values.items():
            out[name] = v.copy()
            out.grads[name] = self.grads[name].copy()
        return out

    def to_json_obj(self):
        """``{name: [shape, v0, v1, ...]}`` with values flattened in C order."""
        return {name: [list(v.shape)] + [float(e) for e in v.ravel()] for name, v in self.values.items()}

    @classmethod
    def from_json_obj(cls, obj):
        store = cls()
        for name, packed in obj.items():
            shape, flat = packed[0], packed[1:]
            store[name] = np.array(flat, dtype=float).reshape(shape)
        return store

    def allclose(self, other, **kw):
        if set(self.values) != set(other.values):
            return False
        return all(np.allclose(self.values[n], other.values[n], **kw) for n in self.values)

    def __repr__(self):
        shapes = ", ".join(f"{n}{list(v.shape)}" for n, v in self.values.items())
        return f"ParamStore({shapes})"
