"""Weighted Fekete points as a discrete oracle for continuum measures.

The n-point minimizer of the discrete weighted energy

    E(z) = sum_{i<j} -log|z_i - z_j| + (n - 1) sum_i psi(z_i)

with psi = phi / t carries the scaled counting measure (t/n) sum delta
that converges weakly to the continuum measure of mass t.  Each point
interacts with the n - 1 others, so the field enters with the same
multiplicity; with two points in the rescaled quadratic field this
reduces to 1/(2d) = d and the minimizer sits at +-1/sqrt(2).  Because
the minimization shares nothing with the endpoint solver, the sup-CDF
distance between discrete and continuum is an end-to-end check on the
whole continuum machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InconsistentConfiguration, NonConvergence
from .fields import ExternalField
from .polynomials import RealPolynomial
from .quadrature import cut_partial_mass
from .state import EquilibriumState, density_at

_GRAD_TOL = 1e-10
_MAX_ITER = 400


@dataclass(frozen=True)
class PointConfiguration:
    """Converged minimizer of the discrete weighted energy.

    points are strictly increasing; field_used is the rescaled field
    psi = phi/t the points minimized against; energy_trace records the
    energy after every accepted step (decreasing within roundoff).
    """

    points: tuple[float, ...]
    n: int
    field_used: RealPolynomial
    energy: float
    gradient_norm: float
    energy_trace: tuple[float, ...]

    def csv(self) -> str:
        lines = ["index,point"]
        lines += [f"{i},{x:.17g}" for i, x in enumerate(self.points)]
        return "\n".join(lines) + "\n"


def _energy(pts: np.ndarray, psi: RealPolynomial) -> float:
    n = len(pts)
    diff = pts[:, None] - pts[None, :]
    iu = np.triu_indices(n, 1)
    gaps = diff[iu]
    if np.any(gaps == 0.0):
        return math.inf
    return float(-np.sum(np.log(np.abs(gaps))) + (n - 1) * np.sum(psi(pts)))


def _gradient(pts: np.ndarray, psi_p: RealPolynomial) -> np.ndarray:
    diff = pts[:, None] - pts[None, :]
    np.fill_diagonal(diff, np.inf)
    return (len(pts) - 1) * psi_p(pts) - np.sum(1.0 / diff, axis=1)


def _hessian(pts: np.ndarray, psi_pp: RealPolynomial) -> np.ndarray:
    diff = pts[:, None] - pts[None, :]
    np.fill_diagonal(diff, np.inf)
    inv2 = 1.0 / diff ** 2
    hess = -inv2
    np.fill_diagonal(hess, (len(pts) - 1) * psi_pp(pts)
                     + np.sum(inv2, axis=1))
    return hess


def _ordered(pts: np.ndarray) -> bool:
    return bool(np.all(np.diff(pts) > 0.0))


def _equispaced_seed(field: ExternalField, t: float, n: int) -> np.ndarray:
    crits = [float(c.real) for c in field.critical_points()]
    center = 0.5 * (min(crits) + max(crits)) if crits else 0.0
    scale = (2 * field.m * max(t, 1e-6)) ** (1.0 / (2 * field.m))
    halfwidth = 2.0 * scale + 0.5 * (max(crits) - min(crits) if crits else 0.0)
    return center + halfwidth * np.linspace(-1.0, 1.0, n)


def _quantile_seed(state: EquilibriumState, n: int) -> np.ndarray:
    """Seed at the (i + 1/2)/n quantiles of the continuum measure."""
    cuts = state.cfg.cuts()
    masses = [cut_partial_mass(state.cfg, state.B, k, v)
              for k, (u, v) in enumerate(cuts)]
    total = sum(masses)
    targets = (np.arange(n) + 0.5) / n * total
    seed = np.empty(n)
    acc = 0.0
    idx = 0
    for k, (u, v) in enumerate(cuts):
        # cumulative mass table on a grid clustered toward the edges
        theta = np.linspace(-0.5 * math.pi, 0.5 * math.pi, 257)
        xs = 0.5 * (u + v) + 0.5 * (v - u) * np.sin(theta)
        w = density_at(state, xs) * 0.5 * (v - u) * np.cos(theta)
        cum = np.concatenate(([0.0], np.cumsum(
            0.5 * (w[1:] + w[:-1]) * np.diff(theta))))
        cum *= masses[k] / cum[-1]
        while idx < n and targets[idx] <= acc + masses[k]:
            seed[idx] = float(np.interp(targets[idx] - acc, cum, xs))
            idx += 1
        acc += masses[k]
    while idx < n:
        seed[idx] = cuts[-1][1]
        idx += 1
    return np.unique(seed) if len(np.unique(seed)) == n else seed


def fekete_points(field: ExternalField, t: float, n: int,
                  state: EquilibriumState | None = None,
                  tol: float = _GRAD_TOL,
                  max_iter: int = _MAX_ITER) -> PointConfiguration:
    """Minimize the discrete weighted energy for n points at mass t.

    Damped Newton on the stationarity system, with the step shortened
    whenever it would break the ordering or raise the energy, and a
    safeguarded gradient move when the Newton direction fails entirely.
    Deterministic for fixed inputs.  Raises NonConvergence if the
    gradient sup-norm does not reach tol.
    """
    if n < 2:
        raise InconsistentConfiguration(f"need at least 2 points, got {n}")
    if t <= 0:
        raise InconsistentConfiguration(f"mass must be positive, got {t}")
    psi = field.phi * (1.0 / t)
    psi_p = psi.derivative()
    psi_pp = psi_p.derivative()
    if state is not None:
        pts = _quantile_seed(state, n)
        if not _ordered(pts):
            pts = _equispaced_seed(field, t, n)
    else:
        pts = _equispaced_seed(field, t, n)

    energy = _energy(pts, psi)
    trace = [energy]
    for _ in range(max_iter):
        grad = _gradient(pts, psi_p)
        gnorm = float(np.max(np.abs(grad)))
        if gnorm < tol:
            return PointConfiguration(
                points=tuple(float(x) for x in pts), n=n, field_used=psi,
                energy=energy, gradient_norm=gnorm,
                energy_trace=tuple(trace))
        try:
            step = np.linalg.solve(_hessian(pts, psi_pp), grad)
        except np.linalg.LinAlgError:
            step = None
        if step is None or float(np.dot(step, grad)) <= 0.0:
            # indefinite Hessian away from the minimizer: steepest
            # descent scaled to a fraction of the smallest spacing
            spacing = float(np.min(np.diff(pts))) if n > 1 else 1.0
            step = grad * (0.25 * spacing / max(gnorm, 1e-300))

        lam = 1.0
        slack = 1e-12 * (1.0 + abs(energy))
        for _half in range(60):
            cand = pts - lam * step
            if _ordered(cand):
                e_new = _energy(cand, psi)
                if e_new <= energy + slack:
                    pts, energy = cand, e_new
                    trace.append(energy)
                    break
            lam *= 0.5
        else:
            raise NonConvergence(
                f"line search failed at gradient norm {gnorm:.3e}")
    raise NonConvergence(
        f"gradient norm {gnorm:.3e} after {max_iter} iterations")


def _continuum_cdf(state: EquilibriumState, x: float,
                   cut_masses: list[float]) -> float:
    acc = 0.0
    for k, (u, v) in enumerate(state.cfg.cuts()):
        if x >= v:
            acc += cut_masses[k]
        elif x > u:
            acc += cut_partial_mass(state.cfg, state.B, k, x)
            break
        else:
            break
    return acc


def compare_to_equilibrium(pts: PointConfiguration,
                           state: EquilibriumState) -> float:
    """Kolmogorov distance between the discrete and continuum measures.

    The counting measure of the points is given total mass t and its
    step CDF is compared against the integrated continuum density; the
    supremum over jump points is exact for a step-versus-continuous
    comparison.
    """
    t, n = state.t, pts.n
    cut_masses = [cut_partial_mass(state.cfg, state.B, k, v)
                  for k, (u, v) in enumerate(state.cfg.cuts())]
    worst = 0.0
    for i, x in enumerate(pts.points):
        f = _continuum_cdf(state, x, cut_masses)
        worst = max(worst, abs(f - t * (i + 1) / n), abs(f - t * i / n))
    return worst
