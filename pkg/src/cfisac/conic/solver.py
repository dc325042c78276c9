"""Homogeneous self-dual interior-point method for dense cone programs.

Primal and dual problems::

    minimize    c'x                     maximize    -h'z
    subject to  G x + s = h             subject to  G'z + c = 0
                s in K                              z in K

The iterates follow the central path of the self-dual embedding with
Nesterov-Todd scaling and a Mehrotra predictor-corrector, so a run ends
either with an optimal pair or with a certificate of primal or dual
infeasibility.  Everything is dense; ``G`` is expected to have full column
rank and few columns compared to its rows.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .cones import ConeDims, Scaling, identity, jordan, max_step, min_eig

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITERS = "max-iters"
    NUMERICAL_FAILURE = "numerical-failure"
    STOPPED = "stopped"


@dataclass
class ConeSolution:
    status: Status
    x: np.ndarray | None
    s: np.ndarray | None
    z: np.ndarray | None
    primal_objective: float
    dual_objective: float
    gap: float
    relative_gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    # certificates: z with G'z = 0, h'z = -1 (primal infeasible);
    # x with Gx + s = 0, c'x = -1 (dual infeasible)
    certificate: np.ndarray | None = None


@dataclass(frozen=True)
class Tolerances:
    feastol: float = 1e-7
    abstol: float = 1e-7
    reltol: float = 1e-7
    max_iters: int = 100
    step: float = 0.99


def _initial_point(c, G, h, dims):
    # least squares tolerates a rank-deficient G (dependent equality rows)
    x = np.linalg.lstsq(G, h, rcond=None)[0]
    s = h - G @ x
    z = -np.linalg.lstsq(G.T, c, rcond=None)[0]
    e = identity(dims)
    for v in (s, z):
        t = -min_eig(v, dims)
        if t >= -1e-8 * max(np.linalg.norm(v), 1.0):
            v += (1.0 + t) * e
    return x, s, z


class _Factor:
    """Cholesky of ``H = Gh' Gh`` with an eigen fallback for near-singular H."""

    def __init__(self, H):
        try:
            self.cho = sla.cho_factor(H, lower=True, check_finite=False)
            self.eig = None
        except np.linalg.LinAlgError:
            w, V = np.linalg.eigh(H)
            keep = w > 1e-14 * max(w.max(), 1e-300)
            if not keep.any():
                raise
            self.cho = None
            self.eig = (w[keep], V[:, keep])

    def solve(self, b):
        if self.cho is not None:
            return sla.cho_solve(self.cho, b, check_finite=False)
        w, V = self.eig
        return V @ ((V.T @ b) / w)


def solve_conic(
    c: np.ndarray,
    G: np.ndarray,
    h: np.ndarray,
    dims: ConeDims,
    tols: Tolerances = Tolerances(),
    callback: Callable[[np.ndarray, np.ndarray, np.ndarray], bool] | None = None,
) -> ConeSolution:
    """Solve a linear cone program; see the module docstring for the form.

    ``callback(x, s, z)`` is called with the current normalized iterate at
    the top of every iteration; returning True stops the run with status
    ``STOPPED``.
    """
    # tau -> 0 on infeasible problems; the resulting inf/nan are expected
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return _solve(c, G, h, dims, tols, callback)


def _solve(c, G, h, dims, tols, callback):
    c = np.asarray(c, float)
    G = np.asarray(G, float)
    h = np.asarray(h, float)
    if G.shape != (dims.size, c.size) or h.shape != (dims.size,):
        raise ValueError(f"inconsistent shapes: G {G.shape}, h {h.shape}, c {c.shape}, cone size {dims.size}")

    e = identity(dims)
    deg = dims.degree
    resx0 = max(1.0, np.linalg.norm(c))
    resz0 = max(1.0, np.linalg.norm(h))

    try:
        x, s, z = _initial_point(c, G, h, dims)
    except np.linalg.LinAlgError:
        return ConeSolution(Status.NUMERICAL_FAILURE, None, None, None, np.nan, np.nan,
                            np.nan, np.nan, np.nan, np.nan, 0)
    tau = kappa = 1.0

    def result(status, it, cert=None):
        if status in (Status.INFEASIBLE, Status.UNBOUNDED):
            return ConeSolution(status, None, None, None, np.nan, np.nan, np.nan, np.nan,
                                np.nan, np.nan, it, cert)
        return ConeSolution(status, x / tau, s / tau, z / tau, pcost, dcost, gap / tau**2,
                            relgap, pres, dres, it)

    pcost = dcost = gap = relgap = pres = dres = np.nan
    for it in range(tols.max_iters + 1):
        Gx = G @ x
        Gtz = G.T @ z
        cx, hz = c @ x, h @ z
        r1 = -(Gtz + c * tau)
        r3 = s + Gx - h * tau
        r4 = kappa + cx + hz
        gap = s @ z
        mu = (gap + tau * kappa) / (deg + 1)
        pcost, dcost = cx / tau, -hz / tau
        pres = np.linalg.norm(r3) / tau / resz0
        dres = np.linalg.norm(r1) / tau / resx0
        if pcost < 0:
            relgap = gap / tau**2 / -pcost
        elif dcost > 0:
            relgap = gap / tau**2 / dcost
        else:
            relgap = np.inf
        pinfres = np.linalg.norm(Gtz) / resx0 / -hz if hz < 0 else np.inf
        dinfres = np.linalg.norm(Gx + s) / resz0 / -cx if cx < 0 else np.inf
        log.debug("it %2d pcost % .8e dcost % .8e gap %.2e pres %.2e dres %.2e k/t %.2e",
                  it, pcost, dcost, gap / tau**2, pres, dres, kappa / tau)

        if pres <= tols.feastol and dres <= tols.feastol and (
                gap / tau**2 <= tols.abstol or relgap <= tols.reltol):
            return result(Status.OPTIMAL, it)
        if pinfres <= tols.feastol:
            return result(Status.INFEASIBLE, it, z / -hz)
        if dinfres <= tols.feastol:
            return result(Status.UNBOUNDED, it, x / -cx)
        if callback is not None and callback(x / tau, s / tau, z / tau):
            return result(Status.STOPPED, it)
        if it == tols.max_iters:
            return result(Status.MAX_ITERS, it)

        try:
            W = Scaling.compute(s, z, dims)
            lam = W.lam
            Gh = W.W(G)
            hh = W.W(h)
            r3h = W.W(r3)
            F = _Factor(Gh.T @ Gh)
        except (np.linalg.LinAlgError, FloatingPointError, ValueError):
            return result(Status.NUMERICAL_FAILURE, it)

        dx1 = F.solve(Gh.T @ hh - c)
        dz1 = Gh @ dx1 - hh
        den = -kappa / tau + c @ dx1 + hh @ dz1

        def newton(eta, ds_rhs, dk_rhs):
            dst = W.lam_solve(ds_rhs)
            t = dst + (1.0 - eta) * r3h
            dx0 = F.solve((1.0 - eta) * r1 - Gh.T @ t)
            dz0 = t + Gh @ dx0
            dtau = (-(1.0 - eta) * r4 - dk_rhs / tau - c @ dx0 - hh @ dz0) / den
            dx = dx0 + dtau * dx1
            dzh = dz0 + dtau * dz1
            dsh = dst - dzh
            dkap = (dk_rhs - kappa * dtau) / tau
            return dx, dsh, dzh, dtau, dkap

        def steplen(dsh, dzh, dtau, dkap):
            a = min(max_step(W, dsh), max_step(W, dzh))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkap < 0:
                a = min(a, -kappa / dkap)
            return a

        ll = jordan(lam, lam, dims)
        # predictor
        dxa, dsa, dza, dta, dka = newton(0.0, -ll, -tau * kappa)
        alpha_aff = min(1.0, steplen(dsa, dza, dta, dka))
        sigma = (1.0 - alpha_aff) ** 3
        # corrector
        ds_rhs = -ll - jordan(dsa, dza, dims) + sigma * mu * e
        dk_rhs = -tau * kappa - dta * dka + sigma * mu
        dx, dsh, dzh, dtau, dkap = newton(sigma, ds_rhs, dk_rhs)
        alpha = min(1.0, tols.step * steplen(dsh, dzh, dtau, dkap))
        if not np.isfinite(alpha) or alpha <= 0:
            return result(Status.NUMERICAL_FAILURE, it)

        x = x + alpha * dx
        s = s + alpha * W.Winv(dsh)
        z = z + alpha * W.WT(dzh)
        tau += alpha * dtau
        kappa += alpha * dkap
        # keep PSD blocks exactly symmetric
        for kind, sl, k in dims.slices():
            if kind == "s":
                for v in (s, z):
                    m = v[sl].reshape(k, k)
                    v[sl] = (0.5 * (m + m.T)).ravel()

    return result(Status.MAX_ITERS, tols.max_iters)
