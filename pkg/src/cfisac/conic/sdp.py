"""Block SDPs over Hermitian (or real symmetric) matrix variables.

Problems are stated in the form::

    maximize    sum_k Tr(C_k X_k)
    subject to  sum_k Tr(A_ik X_k)  (<=, ==, >=)  b_i
                X_k >= 0

Complex blocks are mapped to real symmetric blocks of twice the size with
:func:`embed_hermitian`.  The problem handed to :func:`solve_conic` is the
Lagrange dual, whose variables are the constraint multipliers; since the
problems here have few constraints and moderately sized blocks, this keeps
the Newton system tiny.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .cones import ConeDims
from .linalg import ContractViolation, check_hermitian
from .solver import Status, Tolerances, solve_conic

SENSES = ("<=", "==", ">=")


def embed_hermitian(H: np.ndarray) -> np.ndarray:
    """Real symmetric embedding ``[[Re H, -Im H], [Im H, Re H]]``."""
    H = check_hermitian(H)
    re, im = H.real, H.imag
    return np.block([[re, -im], [im, re]])


def _unembed(M: np.ndarray) -> np.ndarray:
    n = M.shape[0] // 2
    re = 0.5 * (M[:n, :n] + M[n:, n:])
    im = 0.5 * (M[n:, :n] - M[:n, n:])
    X = re + 1j * im
    return 0.5 * (X + X.conj().T)


@dataclass(frozen=True)
class SdpConstraint:
    coeffs: dict  # block index -> Hermitian matrix
    sense: str
    rhs: float

    def __post_init__(self):
        if self.sense not in SENSES:
            raise ContractViolation(f"unknown constraint sense {self.sense!r}")


@dataclass(frozen=True)
class SdpProblem:
    block_dims: tuple
    objective: tuple  # per-block cost matrix or None
    constraints: tuple
    complex_blocks: tuple | None = None  # default: every block is Hermitian complex

    def __post_init__(self):
        nb = len(self.block_dims)
        if len(self.objective) != nb:
            raise ContractViolation("one objective entry per block required")
        if self.complex_blocks is not None and len(self.complex_blocks) != nb:
            raise ContractViolation("complex_blocks must match block_dims")
        for k, C in enumerate(self.objective):
            if C is not None:
                self._check_block(k, C, "objective")
        for i, con in enumerate(self.constraints):
            for k, A in con.coeffs.items():
                if not 0 <= k < nb:
                    raise ContractViolation(f"constraint {i} refers to missing block {k}")
                self._check_block(k, A, f"constraint {i}")

    def _check_block(self, k, M, what):
        n = self.block_dims[k]
        if np.shape(M) != (n, n):
            raise ContractViolation(f"{what}: block {k} expects {n}x{n}, got {np.shape(M)}")
        check_hermitian(M, f"{what} block {k}")
        if not self.is_complex(k) and np.iscomplexobj(M) and np.abs(np.imag(M)).max() > 0:
            raise ContractViolation(f"{what}: real block {k} given complex data")

    def is_complex(self, k: int) -> bool:
        return True if self.complex_blocks is None else bool(self.complex_blocks[k])

    @property
    def m(self) -> int:
        return len(self.constraints)


@dataclass
class SdpSolution:
    """Outcome of :func:`solve_sdp`.

    ``dual_multipliers`` are the Lagrange multipliers, nonnegative for
    inequality constraints (for both senses) and signed for equalities.
    ``dual_slacks`` are ``Z_k = sum_i y_i A_ik - C_k`` with ``y`` the signed
    dual variables (``y_i = mult_i`` for ``<=``, ``-mult_i`` for ``>=``); at
    optimality ``Z_k >= 0`` and ``Z_k X_k = 0``.
    """

    status: Status
    primal_blocks: list | None
    dual_multipliers: np.ndarray | None
    dual_slacks: list | None
    primal_objective: float
    dual_objective: float
    duality_gap: float
    relative_gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    wall_time: float
    certificate: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == Status.OPTIMAL


@dataclass
class _Compiled:
    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    dims: ConeDims
    row_scale: np.ndarray
    obj_scale: float
    kept: list
    signs: np.ndarray


def _real_block(problem, k, M):
    M = np.asarray(M)
    if problem.is_complex(k):
        return 0.5 * embed_hermitian(M)
    return np.real(M).astype(float)


def _compile(problem: SdpProblem) -> _Compiled:
    nb = len(problem.block_dims)
    rdims = [2 * n if problem.is_complex(k) else n for k, n in enumerate(problem.block_dims)]

    cost = [np.zeros((d, d)) if C is None else _real_block(problem, k, C)
            for k, (C, d) in enumerate(zip(problem.objective, rdims))]
    obj_scale = np.sqrt(sum(np.sum(C * C) for C in cost))
    obj_scale = obj_scale if obj_scale > 0 else 1.0

    kept, rows, signs, scales = [], [], [], []
    for i, con in enumerate(problem.constraints):
        blocks = {k: _real_block(problem, k, A) for k, A in con.coeffs.items()}
        nrm = np.sqrt(sum(np.sum(B * B) for B in blocks.values()))
        if nrm == 0:
            ok = {"<=": 0 <= con.rhs, "==": con.rhs == 0, ">=": 0 >= con.rhs}[con.sense]
            if not ok:
                raise _TriviallyInfeasible(i)
            continue
        kept.append(i)
        rows.append({k: B / nrm for k, B in blocks.items()})
        scales.append(nrm)
        signs.append({"<=": 1.0, "==": 0.0, ">=": -1.0}[con.sense])

    m = len(kept)
    signs = np.array(signs)
    scales = np.array(scales)
    b = np.array([problem.constraints[i].rhs for i in kept]) / scales if m else np.zeros(0)
    n_ineq = int(np.count_nonzero(signs))
    dims = ConeDims(l=n_ineq, s=tuple(rdims))

    G = np.zeros((dims.size, m))
    h = np.zeros(dims.size)
    # orthant rows: y_i >= 0 for '<=', y_i <= 0 for '>='
    r = 0
    for j in range(m):
        if signs[j] != 0:
            G[r, j] = -signs[j]
            r += 1
    off = n_ineq
    for k, d in enumerate(rdims):
        for j in range(m):
            B = rows[j].get(k)
            if B is not None:
                G[off:off + d * d, j] = -B.ravel()
        h[off:off + d * d] = -cost[k].ravel() / obj_scale
        off += d * d
    return _Compiled(b, G, h, dims, scales, obj_scale, kept, signs)


class _TriviallyInfeasible(Exception):
    pass


def solve_sdp(problem: SdpProblem, tols: Tolerances = Tolerances()) -> SdpSolution:
    """Solve a block SDP with the homogeneous interior-point method.

    Constraint rows and the objective are normalized before the solve and
    the results mapped back, so reported objectives and multipliers are in
    the caller's units.
    """
    t0 = time.perf_counter()
    nb = len(problem.block_dims)
    try:
        comp = _compile(problem)
    except _TriviallyInfeasible:
        return SdpSolution(Status.INFEASIBLE, None, None, None, np.nan, np.nan, np.nan, np.nan,
                           np.nan, np.nan, 0, time.perf_counter() - t0)

    if comp.c.size == 0:
        # no constraints left: bounded only if every cost block is NSD
        return _unconstrained(problem, t0)

    sol = solve_conic(comp.c, comp.G, comp.h, comp.dims, tols)
    wall = time.perf_counter() - t0
    if sol.status == Status.UNBOUNDED:
        # a ray of the multiplier problem certifies primal infeasibility
        cert = np.zeros(problem.m)
        cert[comp.kept] = sol.certificate / comp.row_scale
        return SdpSolution(Status.INFEASIBLE, None, None, None, np.nan, np.nan, np.nan, np.nan,
                           np.nan, np.nan, sol.iterations, wall, certificate=cert)
    if sol.status == Status.INFEASIBLE:
        return SdpSolution(Status.UNBOUNDED, None, None, None, np.nan, np.nan, np.nan, np.nan,
                           np.nan, np.nan, sol.iterations, wall)
    if sol.x is None:
        return SdpSolution(sol.status, None, None, None, np.nan, np.nan, np.nan, np.nan,
                           np.nan, np.nan, sol.iterations, wall)

    y = np.zeros(problem.m)
    y[comp.kept] = sol.x * comp.obj_scale / comp.row_scale
    mult = y.copy()
    for j, i in enumerate(comp.kept):
        if comp.signs[j] < 0:
            mult[i] = -y[i]

    X, Z = [], []
    off = comp.dims.l
    for k, n in enumerate(problem.block_dims):
        d = comp.dims.s[k]
        Xr = sol.z[off:off + d * d].reshape(d, d)
        Zr = sol.s[off:off + d * d].reshape(d, d) * comp.obj_scale
        off += d * d
        if problem.is_complex(k):
            X.append(_unembed(Xr))
            Z.append(2.0 * _unembed(Zr))
        else:
            X.append(0.5 * (Xr + Xr.T))
            Z.append(0.5 * (Zr + Zr.T))

    pobj = sum(np.real(np.trace(C @ X[k])) for k, C in enumerate(problem.objective) if C is not None)
    dobj = float(np.dot([c.rhs for c in problem.constraints], y))
    gap = abs(pobj - dobj)
    return SdpSolution(sol.status, X, mult, Z, float(pobj), dobj, gap,
                       gap / max(1.0, abs(pobj)), sol.dual_residual, sol.primal_residual,
                       sol.iterations, wall)


def _unconstrained(problem, t0):
    for k, C in enumerate(problem.objective):
        if C is not None and np.linalg.eigvalsh(np.asarray(C))[-1] > 0:
            return SdpSolution(Status.UNBOUNDED, None, None, None, np.inf, np.inf, np.nan, np.nan,
                               np.nan, np.nan, 0, time.perf_counter() - t0)
    X = [np.zeros((n, n), complex if problem.is_complex(k) else float)
         for k, n in enumerate(problem.block_dims)]
    Z = [np.zeros_like(x) if C is None else -np.asarray(C) for x, C in zip(X, problem.objective)]
    return SdpSolution(Status.OPTIMAL, X, np.zeros(problem.m), Z, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                       0, time.perf_counter() - t0)


def constraint_values(problem: SdpProblem, blocks) -> np.ndarray:
    """Evaluate ``sum_k Tr(A_ik X_k)`` for every constraint directly."""
    return np.array([sum(np.real(np.trace(A @ blocks[k])) for k, A in con.coeffs.items())
                     for con in problem.constraints])


def primal_violation(problem: SdpProblem, blocks) -> np.ndarray:
    """Per-constraint violation (positive means violated) at ``blocks``."""
    vals = constraint_values(problem, blocks)
    out = np.empty(problem.m)
    for i, (con, v) in enumerate(zip(problem.constraints, vals)):
        if con.sense == "<=":
            out[i] = v - con.rhs
        elif con.sense == ">=":
            out[i] = con.rhs - v
        else:
            out[i] = abs(v - con.rhs)
    return out


def write_sdpa(problem: SdpProblem, path) -> None:
    """Dump the real-embedded problem in sparse SDPA format.

    The SDPA dual (``max Tr(F0 Y)`` s.t. ``Tr(Fi Y) = c_i``) is our primal,
    with a diagonal block of slacks for the inequality rows.
    """
    rblocks = []
    for k in range(len(problem.block_dims)):
        rblocks.append(lambda M, k=k: _real_block(problem, k, M))
    rdims = [2 * n if problem.is_complex(k) else n for k, n in enumerate(problem.block_dims)]
    ineq = [i for i, c in enumerate(problem.constraints) if c.sense != "=="]
    nblk = len(rdims) + (1 if ineq else 0)
    struct = rdims + ([-len(ineq)] if ineq else [])

    lines = ['"cfisac block SDP (real embedding)"', str(problem.m), str(nblk),
             " ".join(str(d) for d in struct),
             " ".join(repr(float(c.rhs)) for c in problem.constraints)]

    def emit(matno, blkno, M):
        n = M.shape[0]
        iu, ju = np.triu_indices(n)
        vals = M[iu, ju]
        for a, b, v in zip(iu, ju, vals):
            if v != 0.0:
                lines.append(f"{matno} {blkno} {a + 1} {b + 1} {float(v)!r}")

    for k, C in enumerate(problem.objective):
        if C is not None:
            emit(0, k + 1, rblocks[k](C))
    for i, con in enumerate(problem.constraints):
        for k, A in sorted(con.coeffs.items()):
            emit(i + 1, k + 1, rblocks[k](A))
        if con.sense != "==":
            j = ineq.index(i) + 1
            lines.append(f"{i + 1} {nblk} {j} {j} {1.0 if con.sense == '<=' else -1.0!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_sdpa(path):
    """Parse a sparse SDPA file into ``(c, block_struct, {(matno, blkno): dense})``."""
    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip() and ln.strip()[0] not in '"*']
    m = int(raw[0].split()[0])
    struct = [int(t) for t in raw[2].replace(",", " ").replace("{", " ").replace("}", " ").split()]
    c = np.array([float(t) for t in raw[3].replace(",", " ").split()][:m])
    mats = {}
    for ln in raw[4:]:
        mat, blk, i, j, v = ln.split()
        mat, blk, i, j, v = int(mat), int(blk), int(i) - 1, int(j) - 1, float(v)
        n = abs(struct[blk - 1])
        M = mats.setdefault((mat, blk), np.zeros((n, n)))
        M[i, j] = v
        M[j, i] = v
    return c, struct, mats
