"""Bus/line network model: topology, incidence matrix, physical parameters.

A network is a connected graph of ``n`` buses joined by directed edges
(transmission lines).  Each bus carries an inertia ``M_i > 0`` and a damping
``D_i > 0``; each edge carries a stiffness ``B_e > 0`` (power-flow sensitivity
to the angle difference across the line).  Edge direction fixes the sign
convention for angle differences: edge ``(i, j)`` measures ``theta_i -
theta_j``.

Network files are JSON::

    {"buses": n, "edges": [[i, j], ...], "M": [...], "D": [...], "B": [...]}

with 1-based bus numbers in the file and 0-based indices everywhere in code.
All quantities are per-unit.  Keys starting with an underscore are ignored
(used for provenance notes in the bundled data).
"""

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class NetworkModel:
    """Immutable n-bus network with per-bus M, D and per-edge B."""

    n: int
    edges: tuple  # ((i, j), ...) 0-based, i != j
    M: np.ndarray  # (n,) inertia, p.u. s^2
    D: np.ndarray  # (n,) damping, p.u.
    B: np.ndarray  # (m,) line stiffness, p.u.
    C: np.ndarray = field(init=False)  # (n, m) incidence

    def __post_init__(self):
        for name in ("M", "D", "B"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        C = incidence(self.n, self.edges)
        C.flags.writeable = False
        object.__setattr__(self, "C", C)
        _validate(self)

    @property
    def m(self) -> int:
        """Number of edges."""
        return len(self.edges)

    @property
    def src(self) -> np.ndarray:
        return np.array([e[0] for e in self.edges], dtype=np.int64)

    @property
    def dst(self) -> np.ndarray:
        return np.array([e[1] for e in self.edges], dtype=np.int64)

    def laplacian(self) -> np.ndarray:
        """Weighted Laplacian L = C diag(B) C^T (PSD, kernel spanned by ones)."""
        return self.C @ np.diag(self.B) @ self.C.T


def incidence(n: int, edges) -> np.ndarray:
    """Incidence matrix: column for edge (i, j) has +1 at row i, -1 at row j."""
    C = np.zeros((n, len(edges)))
    for e, (i, j) in enumerate(edges):
        C[i, e] = 1.0
        C[j, e] = -1.0
    return C


def _connected(n: int, edges) -> bool:
    if n == 1:
        return True
    adj = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    return bool(seen.all())


def _validate(model: NetworkModel):
    n, m = model.n, model.m
    if n < 1:
        raise ValidationError("buses must be >= 1")
    for e, (i, j) in enumerate(model.edges):
        if not (0 <= i < n and 0 <= j < n):
            raise ValidationError(f"edge {e + 1} references bus outside 1..{n}")
        if i == j:
            raise ValidationError(f"edge {e + 1} is a self-loop")
    for name, arr, length in (
        ("M", model.M, n),
        ("D", model.D, n),
        ("B", model.B, m),
    ):
        if arr.shape != (length,):
            raise ValidationError(f"{name} must have length {length}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"{name} contains non-finite entries")
        bad = np.nonzero(arr <= 0)[0]
        if bad.size:
            raise ValidationError(f"{name}[{bad[0] + 1}] <= 0")
    if not _connected(n, model.edges):
        raise ValidationError("graph disconnected")


def load_network(path) -> NetworkModel:
    """Load and validate a network JSON file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    return network_from_dict(raw, origin=str(path))


def network_from_dict(raw: dict, origin: str = "<dict>") -> NetworkModel:
    """Build a NetworkModel from the documented JSON schema (1-based edges)."""
    missing = [k for k in ("buses", "edges", "M", "D", "B") if k not in raw]
    if missing:
        raise ValidationError(f"{origin}: missing keys {missing}")
    n = int(raw["buses"])
    edges = []
    for e, pair in enumerate(raw["edges"]):
        if len(pair) != 2:
            raise ValidationError(f"{origin}: edge {e + 1} is not a pair")
        i, j = int(pair[0]), int(pair[1])
        if not (1 <= i <= n and 1 <= j <= n):
            raise ValidationError(f"{origin}: edge {e + 1} references bus outside 1..{n}")
        edges.append((i - 1, j - 1))
    return NetworkModel(
        n=n,
        edges=tuple(edges),
        M=np.asarray(raw["M"], dtype=float),
        D=np.asarray(raw["D"], dtype=float),
        B=np.asarray(raw["B"], dtype=float),
    )


def ieee39() -> NetworkModel:
    """The bundled IEEE 39-bus New England case (39 buses, 46 lines).

    Line stiffnesses derive from the standard case reactances (B_e = 1/x_e);
    generator-bus inertias from the usual toolbox H constants; damping is
    150 p.u. on the generator buses 30..39 and 100 p.u. elsewhere.  See the
    ``_provenance`` note inside the data file.
    """
    with resources.files("pdfreq.data").joinpath("ieee39.json").open() as fh:
        raw = json.load(fh)
    return network_from_dict(raw, origin="ieee39.json")
