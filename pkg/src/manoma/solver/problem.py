"""Canonical conic problem container and solver result types.

A problem is stated as

    maximize    c . x  (+ offset)
    subject to  A x = b
                G x + s = h,   s in K

where K is a Cartesian product of nonnegative-orthant, second-order and
(svec-coordinate) PSD cone blocks, in the order listed in ``cones``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# cone kinds
NONNEG = "nn"
SOC = "soc"
PSD = "psd"


def svec_dim(order: int) -> int:
    return order * (order + 1) // 2


def cone_dim(kind: str, size: int) -> int:
    """Vector dimension of one cone block; ``size`` is the row count for
    nn/soc blocks and the matrix order for psd blocks."""
    return svec_dim(size) if kind == PSD else size


@dataclass
class ConicProblem:
    c: np.ndarray                       # objective (maximization sense)
    G: np.ndarray                       # (m, n)
    h: np.ndarray                       # (m,)
    cones: list                         # [(kind, size), ...]
    A: np.ndarray = None                # optional equalities, (p, n)
    b: np.ndarray = None                # (p,)
    obj_offset: float = 0.0
    name: str = "conic"

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.G = np.atleast_2d(np.asarray(self.G, dtype=float))
        self.h = np.asarray(self.h, dtype=float)
        n = self.c.size
        if self.A is None:
            self.A = np.zeros((0, n))
            self.b = np.zeros(0)
        else:
            self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
            self.b = np.asarray(self.b, dtype=float)

    @property
    def num_vars(self) -> int:
        return self.c.size

    @property
    def cone_rows(self) -> int:
        return sum(cone_dim(k, s) for k, s in self.cones)

    def validate(self) -> "ConicProblem":
        n = self.num_vars
        m = self.cone_rows
        if self.G.shape != (m, n):
            raise ValueError(f"G shape {self.G.shape} != cone rows x vars ({m}, {n})")
        if self.h.shape != (m,):
            raise ValueError("h length does not match cone rows")
        if self.A.shape[1] != n or self.b.shape != (self.A.shape[0],):
            raise ValueError("equality block dimensions inconsistent")
        used = np.zeros(n, dtype=bool)
        used |= self.c != 0
        used |= np.any(self.G != 0, axis=0)
        if self.A.size:
            used |= np.any(self.A != 0, axis=0)
        if not used.all():
            raise ValueError(f"variables {np.flatnonzero(~used)} appear nowhere")
        for kind, size in self.cones:
            if kind not in (NONNEG, SOC, PSD) or size < 1:
                raise ValueError(f"bad cone block ({kind}, {size})")
        return self

    def dump_text(self) -> str:
        """Plain-text canonical-form listing for external cross-validation."""
        lines = [f"problem {self.name}",
                 f"vars {self.num_vars}",
                 "maximize " + " ".join(f"{v:.17g}" for v in self.c),
                 f"offset {self.obj_offset:.17g}",
                 f"cones " + " ".join(f"{k}:{s}" for k, s in self.cones)]
        for i in range(self.G.shape[0]):
            row = " ".join(f"{v:.17g}" for v in self.G[i])
            lines.append(f"G[{i}] {row} | h {self.h[i]:.17g}")
        for i in range(self.A.shape[0]):
            row = " ".join(f"{v:.17g}" for v in self.A[i])
            lines.append(f"A[{i}] {row} | b {self.b[i]:.17g}")
        return "\n".join(lines) + "\n"


@dataclass
class ConicSolution:
    status: str                         # optimal | infeasible | unbounded |
                                        # max-iter | numerical-failure
    x: np.ndarray = None
    y: np.ndarray = None
    z: np.ndarray = None
    s: np.ndarray = None
    objective: float = np.nan           # maximization value incl. offset
    primal_residual: float = np.nan
    dual_residual: float = np.nan
    gap: float = np.nan
    rel_gap: float = np.nan
    iterations: int = 0
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"
