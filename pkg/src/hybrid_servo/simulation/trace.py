"""Closed-loop trace container and its CSV serialization.

A trace file is plain comma-separated text. Lines starting with ``#`` carry
``key=value`` metadata (status, dt, n, k, ...), then one header row naming
every column, then one row per record. Floats are written with 17
significant digits so a reload is bit-exact.
"""

import io
from dataclasses import dataclass, field

import numpy as np

from ..errors import TraceFormatError

_FMT = "%.17g"


def column_names(n, k, estimates=False, p=(0, 0, 0)):
    def vec(name, size):
        return [f"{name}_{i}" for i in range(size)]

    m = 3 * k
    cols = ["t", *vec("q", n), *vec("qdot", n), *vec("tau", n), *vec("y", m), *vec("y_d", m),
            *vec("dy", m), *vec("y_fixed", m), *vec("y_dot", m), *vec("y_fixed_dot", m),
            *vec("y_d_dot", m), *vec("s_q", n), "dy_norm", "dydot_norm", "s_norm", "V"]
    if estimates:
        cols += vec("theta_k", p[0]) + vec("theta_m", p[1]) + vec("theta_d", p[2])
    return cols


@dataclass(eq=False)
class TraceLog:
    """Uniformly sampled closed-loop records.

    ``data`` is a (records, columns) float array addressed through
    ``columns``; :meth:`get` returns one column or a group such as ``"q"``.
    """

    columns: list
    data: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float).reshape(-1, len(self.columns))
        self._index = {c: i for i, c in enumerate(self.columns)}

    def __len__(self):
        return self.data.shape[0]

    @property
    def t(self):
        return self.data[:, 0]

    @property
    def status(self):
        return self.meta.get("status", "complete")

    def get(self, name):
        if name in self._index:
            return self.data[:, self._index[name]]
        idx = [i for c, i in self._index.items() if c.rsplit("_", 1)[0] == name and c.rsplit("_", 1)[1].isdigit()]
        if not idx:
            raise KeyError(name)
        return self.data[:, idx]

    def has(self, name):
        try:
            self.get(name)
            return True
        except KeyError:
            return False

    def to_csv(self):
        buf = io.StringIO()
        for key in sorted(self.meta):
            buf.write(f"# {key}={self.meta[key]}\n")
        buf.write(",".join(self.columns) + "\n")
        np.savetxt(buf, self.data, fmt=_FMT, delimiter=",")
        return buf.getvalue()

    def save(self, path):
        with open(path, "w", newline="\n") as f:
            f.write(self.to_csv())

    @classmethod
    def from_csv(cls, text):
        meta = {}
        lines = text.splitlines()
        i = 0
        while i < len(lines) and lines[i].startswith("#"):
            key, sep, value = lines[i][1:].strip().partition("=")
            if not sep:
                raise TraceFormatError(f"bad metadata line {lines[i]!r}")
            meta[key.strip()] = value.strip()
            i += 1
        if i == len(lines):
            raise TraceFormatError("missing header row")
        columns = lines[i].split(",")
        if columns[0] != "t":
            raise TraceFormatError("first column must be 't'")
        rows = []
        for r, line in enumerate(lines[i + 1:]):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != len(columns):
                raise TraceFormatError(f"expected {len(columns)} fields, got {len(parts)}", record=r)
            try:
                rows.append([float(x) for x in parts])
            except ValueError as exc:
                raise TraceFormatError(str(exc), record=r) from None
        data = np.array(rows, dtype=float).reshape(-1, len(columns))
        t = data[:, 0]
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            r = int(np.argmax(np.diff(t) <= 0)) + 1
            raise TraceFormatError("time not strictly increasing", record=r)
        return cls(columns, data, meta)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_csv(f.read())
