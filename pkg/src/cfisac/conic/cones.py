"""Symmetric-cone algebra used by the interior-point solver.

A cone vector is a flat float array laid out as

    [ nonnegative orthant (l) | second-order cones (q_1, q_2, ...) | PSD blocks ]

PSD blocks are stored as full ``n x n`` matrices flattened in row-major
order, so the plain dot product of two cone vectors is the trace inner
product on those blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla


@dataclass(frozen=True)
class ConeDims:
    """Sizes of the cones making up ``K``."""

    l: int = 0
    q: tuple[int, ...] = ()
    s: tuple[int, ...] = ()

    def __post_init__(self):
        if self.l < 0 or any(k < 1 for k in self.q) or any(k < 1 for k in self.s):
            raise ValueError(f"invalid cone dimensions {self}")

    @property
    def size(self) -> int:
        return self.l + sum(self.q) + sum(k * k for k in self.s)

    @property
    def degree(self) -> int:
        return self.l + len(self.q) + sum(self.s)

    def slices(self):
        """Yield ``(kind, slice, dim)`` for every cone in layout order."""
        off = 0
        if self.l:
            yield "l", slice(0, self.l), self.l
            off = self.l
        for k in self.q:
            yield "q", slice(off, off + k), k
            off += k
        for k in self.s:
            yield "s", slice(off, off + k * k), k
            off += k * k


def _sym(m):
    return 0.5 * (m + m.T)


def identity(dims: ConeDims) -> np.ndarray:
    e = np.zeros(dims.size)
    for kind, sl, k in dims.slices():
        if kind == "l":
            e[sl] = 1.0
        elif kind == "q":
            e[sl.start] = 1.0
        else:
            e[sl] = np.eye(k).ravel()
    return e


def jordan(u: np.ndarray, v: np.ndarray, dims: ConeDims) -> np.ndarray:
    """Jordan product ``u o v``."""
    out = np.empty_like(u)
    for kind, sl, k in dims.slices():
        a, b = u[sl], v[sl]
        if kind == "l":
            out[sl] = a * b
        elif kind == "q":
            out[sl.start] = a @ b
            out[sl.start + 1:sl.stop] = a[0] * b[1:] + b[0] * a[1:]
        else:
            A, B = a.reshape(k, k), b.reshape(k, k)
            out[sl] = _sym(A @ B).ravel()
    return out


def min_eig(u: np.ndarray, dims: ConeDims) -> float:
    """Smallest 'eigenvalue' of ``u`` over all cones (negative means outside)."""
    vals = []
    for kind, sl, k in dims.slices():
        a = u[sl]
        if kind == "l":
            vals.append(a.min())
        elif kind == "q":
            vals.append(a[0] - np.linalg.norm(a[1:]))
        else:
            vals.append(np.linalg.eigvalsh(_sym(a.reshape(k, k)))[0])
    return min(vals) if vals else np.inf


def _soc_max_step(x, d):
    # largest alpha >= 0 with x + alpha d in the cone, x strictly interior
    x0, x1, d0, d1 = x[0], x[1:], d[0], d[1:]
    nx1 = np.linalg.norm(x1)
    c = (x0 - nx1) * (x0 + nx1)
    a = d0 * d0 - d1 @ d1
    b = x0 * d0 - x1 @ d1
    if a == 0.0:
        return -c / (2.0 * b) if b < 0 else np.inf
    disc = b * b - a * c
    if disc < 0.0:
        return np.inf
    sq = np.sqrt(disc)
    if b >= 0:
        den = b + sq
        roots = (-den / a, -c / den if den != 0 else np.inf)
    else:
        num = -b + sq
        roots = (c / num, num / a)
    pos = [r for r in roots if r > 0]
    return min(pos) if pos else np.inf


def max_step(lam: "Scaling", d: np.ndarray) -> float:
    """Largest ``alpha`` keeping ``lambda + alpha d`` in the cone.

    ``lambda`` is the scaled point of an NT scaling, which is diagonal on
    the PSD blocks; that is what makes the PSD case a single eigenvalue
    problem.
    """
    alpha = np.inf
    for (kind, sl, k), lk in zip(lam.dims.slices(), lam.lam_blocks):
        dk = d[sl]
        if kind == "l":
            neg = dk < 0
            if neg.any():
                alpha = min(alpha, np.min(-lk[neg] / dk[neg]))
        elif kind == "q":
            alpha = min(alpha, _soc_max_step(lk, dk))
        else:
            r = 1.0 / np.sqrt(lk)
            m = _sym(dk.reshape(k, k)) * np.outer(r, r)
            t = np.linalg.eigvalsh(m)[0]
            if t < 0:
                alpha = min(alpha, -1.0 / t)
    return alpha


@dataclass
class Scaling:
    """Nesterov-Todd scaling ``W`` with ``W s = W^{-T} z = lambda``.

    Per cone we keep just enough to apply ``W``, ``W^T`` and ``W^{-1}``:
    a diagonal for the orthant, the dense symmetric matrix for each
    second-order cone and the factor ``R^{-1}`` for each PSD block, where
    ``W(X) = R^{-1} X R^{-T}``.
    """

    dims: ConeDims
    lp_d: np.ndarray | None = None
    soc_w: list = field(default_factory=list)
    soc_winv: list = field(default_factory=list)
    psd_rinv: list = field(default_factory=list)
    psd_r: list = field(default_factory=list)
    lam_blocks: list = field(default_factory=list)

    @classmethod
    def compute(cls, s: np.ndarray, z: np.ndarray, dims: ConeDims) -> "Scaling":
        sc = cls(dims)
        for kind, sl, k in dims.slices():
            sk, zk = s[sl], z[sl]
            if kind == "l":
                sc.lp_d = np.sqrt(zk / sk)
                sc.lam_blocks.append(np.sqrt(sk * zk))
            elif kind == "q":
                J = np.ones(k)
                J[1:] = -1.0
                sjs = (sk[0] - np.linalg.norm(sk[1:])) * (sk[0] + np.linalg.norm(sk[1:]))
                zjz = (zk[0] - np.linalg.norm(zk[1:])) * (zk[0] + np.linalg.norm(zk[1:]))
                if sjs <= 0 or zjz <= 0:
                    raise np.linalg.LinAlgError("iterate left the second-order cone")
                beta = (sjs / zjz) ** 0.25
                sb = sk / np.sqrt(sjs)
                zb = zk / np.sqrt(zjz)
                gamma = np.sqrt(0.5 * (1.0 + sb @ zb))
                wb = (sb + J * zb) / (2.0 * gamma)
                v = wb.copy()
                v[0] += 1.0
                v /= np.sqrt(2.0 * (wb[0] + 1.0))
                Jv = J * v
                # W maps s to lambda; W^{-1} = beta (2 v v' - J)
                W = (2.0 * np.outer(Jv, Jv) - np.diag(J)) / beta
                Winv = beta * (2.0 * np.outer(v, v) - np.diag(J))
                sc.soc_w.append(W)
                sc.soc_winv.append(Winv)
                sc.lam_blocks.append(W @ sk)
            else:
                S = _sym(sk.reshape(k, k))
                Z = _sym(zk.reshape(k, k))
                Ls = np.linalg.cholesky(S)
                Lz = np.linalg.cholesky(Z)
                U, sig, Vt = np.linalg.svd(Lz.T @ Ls)
                rs = np.sqrt(sig)
                Lsinv = sla.solve_triangular(Ls, np.eye(k), lower=True)
                sc.psd_rinv.append(rs[:, None] * (Vt @ Lsinv))
                sc.psd_r.append((Ls @ Vt.T) / rs[None, :])
                sc.lam_blocks.append(sig)
        return sc

    @property
    def lam(self) -> np.ndarray:
        out = np.empty(self.dims.size)
        for (kind, sl, k), lk in zip(self.dims.slices(), self.lam_blocks):
            out[sl] = np.diag(lk).ravel() if kind == "s" else lk
        return out

    def _apply(self, u: np.ndarray, mode: str) -> np.ndarray:
        # mode: 'W', 'WT' or 'Winv'; u may be a vector or a matrix of columns
        out = np.empty_like(u)
        qi = si = 0
        for kind, sl, k in self.dims.slices():
            a = u[sl]
            if kind == "l":
                d = self.lp_d if mode != "Winv" else 1.0 / self.lp_d
                out[sl] = d[:, None] * a if a.ndim == 2 else d * a
            elif kind == "q":
                M = self.soc_winv[qi] if mode == "Winv" else self.soc_w[qi]
                out[sl] = M @ a
                qi += 1
            else:
                if mode == "W":
                    L, Rt = self.psd_rinv[si], self.psd_rinv[si].T
                elif mode == "WT":
                    L, Rt = self.psd_rinv[si].T, self.psd_rinv[si]
                else:
                    L, Rt = self.psd_r[si], self.psd_r[si].T
                si += 1
                if a.ndim == 2:
                    ncol = a.shape[1]
                    mats = a.T.reshape(ncol, k, k)
                    out[sl] = (L @ mats @ Rt).reshape(ncol, k * k).T
                else:
                    out[sl] = (L @ a.reshape(k, k) @ Rt).ravel()
        return out

    def W(self, u):
        return self._apply(u, "W")

    def WT(self, u):
        return self._apply(u, "WT")

    def Winv(self, u):
        return self._apply(u, "Winv")

    def lam_solve(self, d: np.ndarray) -> np.ndarray:
        """Solve ``lambda o u = d`` for ``u``."""
        out = np.empty_like(d)
        for (kind, sl, k), lk in zip(self.dims.slices(), self.lam_blocks):
            dk = d[sl]
            if kind == "l":
                out[sl] = dk / lk
            elif kind == "q":
                l0, l1 = lk[0], lk[1:]
                det = (l0 - np.linalg.norm(l1)) * (l0 + np.linalg.norm(l1))
                u0 = (l0 * dk[0] - l1 @ dk[1:]) / det
                out[sl.start] = u0
                out[sl.start + 1:sl.stop] = (dk[1:] - u0 * l1) / l0
            else:
                out[sl] = (2.0 * dk.reshape(k, k) / (lk[:, None] + lk[None, :])).ravel()
        return out
