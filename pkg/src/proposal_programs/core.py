"""Addresses, values, traces and choice maps.

Addresses are plain strings.  Values are one of four tagged kinds, each
represented by a native Python type:

========  ======================
tag       Python representation
========  ======================
bool      ``bool``
int       ``int``
real      ``float``
vector    ``tuple`` of ``float``
========  ======================

Equality between values never coerces across tags (``True != 1`` and
``1 != 1.0`` here), see :func:`same_value`.
"""

import json
import math
import numbers
from collections.abc import Mapping
from typing import NamedTuple

import numpy as np

from .errors import MissingOutput, OutOfSupportConstraint

TAGS = ("bool", "int", "real", "vector")


def to_value(v):
    """Normalize a Python or numpy scalar/array into a tagged value."""
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    if isinstance(v, (tuple, list, np.ndarray)):
        return tuple(float(e) for e in np.asarray(v, dtype=float).ravel())
    raise TypeError(f"unsupported choice value {v!r} of type {type(v).__name__}")


def value_tag(v):
    t = type(v)
    if t is bool:
        return "bool"
    if t is int:
        return "int"
    if t is float:
        return "real"
    if t is tuple:
        return "vector"
    raise TypeError(f"not a tagged value: {v!r}")


def same_value(a, b):
    return type(a) is type(b) and a == b


class ChoiceRecord(NamedTuple):
    address: str
    value: object
    log_prob: float
    position: int


class Trace:
    """Ordered record of the addressed choices made by one execution.

    ``failed`` marks an execution aborted by an out-of-support constraint;
    such a trace has ``total_log_prob == -inf`` and its last record holds the
    offending constrained value.
    """

    __slots__ = ("records", "total_log_prob", "failed", "_index")

    def __init__(self, records=(), total_log_prob=None, failed=False):
        self.records = tuple(records)
        if total_log_prob is None:
            total_log_prob = math.fsum(r.log_prob for r in self.records)
        self.total_log_prob = total_log_prob
        self.failed = failed
        self._index = None

    def _lookup(self):
        if self._index is None:
            self._index = {r.address: r for r in self.records}
        return self._index

    def __len__(self):
        return len(self.records)

    def __contains__(self, address):
        return address in self._lookup()

    def __getitem__(self, address):
        return self._lookup()[address].value

    def record(self, address):
        return self._lookup()[address]

    def addresses(self):
        return [r.address for r in self.records]

    def choices(self):
        return ChoiceMap._from_trusted({r.address: r.value for r in self.records})

    @property
    def failure(self):
        """The OutOfSupportConstraint that aborted the execution, or ``None``."""
        if not self.failed:
            return None
        last = self.records[-1]
        return OutOfSupportConstraint(last.address, last.value)

    def check(self, tol=1e-9):
        """Assert the structural invariants; used by tests and debug paths."""
        positions = [r.position for r in self.records]
        assert positions == list(range(len(self.records))), positions
        assert len(self._lookup()) == len(self.records), "duplicate address"
        if not self.failed:
            assert all(math.isfinite(r.log_prob) for r in self.records)
            assert abs(sum(r.log_prob for r in self.records) - self.total_log_prob) <= tol

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        if len(self.records) != len(other.records) or self.failed != other.failed:
            return False
        for a, b in zip(self.records, other.records):
            if a.address != b.address or not same_value(a.value, b.value) or a.log_prob != b.log_prob:
                return False
        return self.total_log_prob == other.total_log_prob

    __hash__ = None

    def __repr__(self):
        body = ", ".join(f"{r.address}={r.value!r}" for r in self.records)
        return f"Trace({body}; lp={self.total_log_prob:.6g})"


class ChoiceMap(Mapping):
    """Immutable address to value map, used for output traces and constraints."""

    __slots__ = ("_entries", "_hash")

    def __init__(self, entries=None, **kwargs):
        d = dict(entries or {})
        d.update(kwargs)
        for k in d:
            if not isinstance(k, str) or not k:
                raise ValueError(f"addresses must be nonempty strings, got {k!r}")
        self._entries = {k: to_value(v) for k, v in d.items()}
        self._hash = None

    @classmethod
    def _from_trusted(cls, entries):
        cm = cls.__new__(cls)
        cm._entries = entries
        cm._hash = None
        return cm

    def __getitem__(self, address):
        return self._entries[address]

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def __contains__(self, address):
        return address in self._entries

    def __eq__(self, other):
        if not isinstance(other, Mapping):
            return NotImplemented
        if len(self) != len(other):
            return False
        for k, v in self._entries.items():
            if k not in other or not same_value(v, other[k]):
                return False
        return True

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset((k, type(v).__name__, v) for k, v in self._entries.items()))
        return self._hash

    def merge(self, other):
        """Return a new map with ``other``'s entries overriding ours."""
        d = dict(self._entries)
        d.update(other._entries if isinstance(other, ChoiceMap) else ChoiceMap(other)._entries)
        return ChoiceMap._from_trusted(d)

    def key(self):
        """Canonical sortable key, handy for counting chain occupancy."""
        return tuple(sorted((k, value_tag(v), v) for k, v in self._entries.items()))

    def __repr__(self):
        return f"ChoiceMap({self._entries!r})"


class OutputSelection:
    """A set of output addresses, given explicitly and/or by string prefix.

    >>> sel = OutputSelection(["slope", "intercept"], prefixes=["outlier-"])
    >>> "outlier-3" in sel, "epsilon" in sel
    (True, False)
    """

    __slots__ = ("addresses", "prefixes")

    def __init__(self, addresses=(), prefixes=()):
        if isinstance(addresses, str):
            addresses = (addresses,)
        self.addresses = frozenset(addresses)
        self.prefixes = tuple(prefixes)

    def __contains__(self, address):
        if address in self.addresses:
            return True
        for p in self.prefixes:
            if address.startswith(p):
                return True
        return False

    def __eq__(self, other):
        if not isinstance(other, OutputSelection):
            return NotImplemented
        return self.addresses == other.addresses and set(self.prefixes) == set(other.prefixes)

    def __hash__(self):
        return hash((self.addresses, frozenset(self.prefixes)))

    def matches_exactly(self, keys):
        """True iff ``keys`` is precisely the set of addresses this selection covers."""
        keys = set(keys)
        if not self.addresses <= keys:
            return False
        return all(k in self for k in keys)

    def __repr__(self):
        return f"OutputSelection({sorted(self.addresses)!r}, prefixes={list(self.prefixes)!r})"


def select(*addresses, prefixes=()):
    return OutputSelection(addresses, prefixes)


def restrict(trace, selection):
    """Project ``trace`` onto the addresses in ``selection``."""
    for a in selection.addresses:
        if a not in trace:
            raise MissingOutput(a)
    return ChoiceMap._from_trusted({r.address: r.value for r in trace.records if r.address in selection})


def agrees(trace, z):
    for a, v in z.items():
        if a not in trace or not same_value(trace[a], v):
            return False
    return True


def split_log_prob(trace, selection):
    """Return ``(log_p_out, log_p_in)``, the selected and unselected parts of the trace log probability."""
    out = 0.0
    inner = 0.0
    for r in trace.records:
        if r.address in selection:
            out += r.log_prob
        else:
            inner += r.log_prob
    return out, inner


# JSON (de)serialization --------------------------------------------------------


def _fmt_real(x):
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _encode_value(v):
    tag = value_tag(v)
    if tag == "bool":
        body = "true" if v else "false"
    elif tag == "int":
        body = str(v)
    elif tag == "real":
        body = _fmt_real(v)
    else:
        body = "[" + ",".join(_fmt_real(e) for e in v) + "]"
    return '{"t":"%s","v":%s}' % (tag, body)


def _decode_value(obj):
    tag, v = obj["t"], obj["v"]
    if tag == "bool":
        return bool(v)
    if tag == "int":
        return int(v)
    if tag == "real":
        return float(v)
    if tag == "vector":
        return tuple(float(e) for e in v)
    raise ValueError(f"unknown value tag {tag!r}")


def trace_to_json(trace):
    items = ",".join(
        '{"addr":%s,"value":%s,"lp":%s}' % (json.dumps(r.address), _encode_value(r.value), _fmt_real(r.log_prob))
        for r in trace.records
    )
    return '{"choices":[%s],"total_lp":%s}' % (items, _fmt_real(trace.total_log_prob))


def trace_from_json(text):
    obj = json.loads(text) if isinstance(text, str) else text
    records = [
        ChoiceRecord(c["addr"], _decode_value(c["value"]), float(c["lp"]), i) for i, c in enumerate(obj["choices"])
    ]
    total = float(obj["total_lp"])
    return Trace(records, total, failed=total == -math.inf and any(r.log_prob == -math.inf for r in records))


def choicemap_to_json(z):
    """Same layout as traces, without the probability fields."""
    items = ",".join('{"addr":%s,"value":%s}' % (json.dumps(a), _encode_value(v)) for a, v in z.items())
    return '{"choices":[%s]}' % items


def choicemap_from_json(text):
    obj = json.loads(text) if isinstance(text, str) else text
    return ChoiceMap._from_trusted({c["addr"]: _decode_value(c["value"]) for c in obj["choices"]})


def is_real(v):
    return isinstance(v, numbers.Real) and not isinstance(v, bool)
