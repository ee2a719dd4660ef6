"""Curvature of the constraint manifold via the Gauss equation.

The constraint map sends a 14-D joint configuration to a 6-D residual of
the relative gripper transform against a reference snapshot; its zero set
is the 8-D constraint manifold.  At a query point the Jacobian's null
space gives an orthonormal tangent basis, the second fundamental form is
solved from the Jacobian and Hessian, and the Riemann tensor follows from
the Gauss equation in the flat ambient joint metric.  The squared
Frobenius norm of the tensor (the Kretschmann scalar) is the headline
statistic because it cannot cancel.

At points off the manifold the same formulas evaluate the curvature of
the level set through the query point, with the residual norm recorded
alongside.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bimanual as bm
from . import geometry as geo
from . import kinematics as kin
from .autodiff import DiffConfig, hessian_numeric, jacobian_numeric
from .errors import NoTransportPhase, RankDeficient

RANK_TOL = 1e-8


class ConstraintFunction:
    """Vector constraint map with a scalar-generic evaluation path.

    The wrapped function must accept a 1-D array of plain floats or of
    dual scalars and return a sequence of scalars of matching kind; that
    single entry point feeds both derivative engines.
    """

    def __init__(self, fn, n_inputs, n_outputs, model=None, reference_rel=None):
        self._fn = fn
        self.n_inputs = n_inputs
        self.n_outputs = n_outputs
        self.model = model
        self.reference_rel = reference_rel

    def __call__(self, q):
        out = self._fn(np.asarray(q))
        if isinstance(out, np.ndarray) and out.dtype == object:
            return out
        return np.asarray(out, dtype=float) if not isinstance(out, np.ndarray) else out

    def residual_norm(self, q):
        return float(np.linalg.norm(self(np.asarray(q, dtype=float))))


def make_constraint(model, q0):
    """Residual of the relative gripper transform against its value at q0.

    First three components: relative translation offset (meters); last
    three: rotation vector of the relative-rotation discrepancy (radians).
    Zero exactly at q0 and wherever the locked transform is preserved.
    """
    q0 = np.asarray(q0, dtype=float).reshape(14)
    x0 = bm.relative_of_q14(model, q0)
    r0 = x0.rotation.mat
    p0 = x0.translation
    r0_list = [[float(v) for v in row] for row in r0]
    p0_list = [float(v) for v in p0]

    def fn(q):
        if isinstance(q, np.ndarray) and q.dtype == object:
            rl, tl = kin.forward_kinematics_generic(model.left, q[:7])
            rr, tr = kin.forward_kinematics_generic(model.right, q[7:14])
            # relative transform: left gripper in the right gripper frame
            d = [tl[0] - tr[0], tl[1] - tr[1], tl[2] - tr[2]]
            p = geo.gmat_t_vec(rr, d)
            rx = geo.gmat_mul(geo.gmat_transpose(rr), rl)
            rres = geo.gmat_mul(geo.gmat_transpose(r0_list), rx)
            w = geo.gso3_log(rres)
            return np.array([p[0] - p0_list[0], p[1] - p0_list[1],
                             p[2] - p0_list[2], w[0], w[1], w[2]],
                            dtype=object)
        q = np.asarray(q, dtype=float)
        x = bm.relative_of_q14(model, q)
        w = geo.so3_log(r0.T @ x.rotation.mat)
        return np.concatenate([x.translation - p0, w])

    return ConstraintFunction(fn, 14, 6, model=model, reference_rel=x0)


def constraint_for_episode(model, episode):
    """Constraint anchored at the first transport knot's commanded
    configuration (the configuration holding the box when carrying starts)."""
    transport = episode.transport_indices()
    if not transport:
        raise NoTransportPhase("episode has no transport phase to anchor on")
    return make_constraint(model, episode.steps[transport[0]].act[:14])


@dataclass
class ManifoldFrame:
    """Orthonormal tangent/normal split of the ambient space at q."""

    q: np.ndarray
    jac: np.ndarray
    tangent_basis: np.ndarray
    normal_basis: np.ndarray
    sigma_min: float
    cond_j: float


def frame_at(f, q, cfg=DiffConfig(), rank_tol=RANK_TOL):
    """Tangent/normal bases from a rank-revealing SVD of the Jacobian."""
    q = np.asarray(q, dtype=float)
    jac = jacobian_numeric(f, q, cfg)
    m = jac.shape[0]
    _, s, vt = np.linalg.svd(jac, full_matrices=True)
    if s[m - 1] <= rank_tol:
        raise RankDeficient("constraint Jacobian rank deficient", float(s[m - 1]))
    return ManifoldFrame(q=q, jac=jac, tangent_basis=vt[m:].T,
                         normal_basis=vt[:m].T, sigma_min=float(s[m - 1]),
                         cond_j=float(s[0] / s[m - 1]))


def second_fundamental_form(frame, hess):
    """II in normal-basis coordinates: (dim_t, dim_t, m).

    For tangent directions u_i, u_j the normal coordinates n solve
    (J N) n = -(u_i^T H u_j) per constraint output; symmetric in (i, j).
    """
    t = frame.tangent_basis
    n = frame.normal_basis
    v = np.einsum("aij,ip,jq->pqa", hess, t, t)
    jn = frame.jac @ n
    m = jn.shape[0]
    dim_t = t.shape[1]
    sol = np.linalg.solve(jn, -v.reshape(-1, m).T)
    ii = sol.T.reshape(dim_t, dim_t, m)
    return 0.5 * (ii + ii.transpose(1, 0, 2))


@dataclass
class CurvatureResult:
    kretschmann: float
    riemann: np.ndarray
    residual_norm: float
    frame: ManifoldFrame


def riemann_and_kretschmann(f, q, cfg=DiffConfig(), rank_tol=RANK_TOL):
    """Riemann tensor (orthonormal tangent basis) and Kretschmann scalar.

    Gauss equation in the flat ambient metric:
    R_ijkl = <II_ik, II_jl> - <II_il, II_jk>.  Off the manifold the level
    set through q is measured and the residual norm reported.
    """
    q = np.asarray(q, dtype=float)
    frame = frame_at(f, q, cfg, rank_tol)
    hess = hessian_numeric(f, q, cfg)
    ii = second_fundamental_form(frame, hess)
    riemann = (np.einsum("ika,jla->ijkl", ii, ii)
               - np.einsum("ila,jka->ijkl", ii, ii))
    return CurvatureResult(kretschmann=float(np.sum(riemann * riemann)),
                           riemann=riemann,
                           residual_norm=f.residual_norm(q),
                           frame=frame)


def rollout_curvature_series(f, episode, cfg=DiffConfig(), rank_tol=RANK_TOL,
                             knot_stride=1):
    """Per-transport-knot curvature record list plus rank-deficient gaps.

    Returns (records, gaps): records are dicts {t, kretschmann, residual,
    cond_j}; gaps lists the knot times skipped as rank deficient.
    """
    transport = episode.transport_indices()
    if not transport:
        raise NoTransportPhase("episode has no transport-phase knots")
    records = []
    gaps = []
    for idx in transport[::knot_stride]:
        t = episode.steps[idx].t
        q = episode.steps[idx].act[:14]
        try:
            res = riemann_and_kretschmann(f, q, cfg, rank_tol)
        except RankDeficient as exc:
            gaps.append({"t": t, "sigma_min": exc.sigma_min})
            continue
        records.append({"t": t, "kretschmann": res.kretschmann,
                        "residual": res.residual_norm,
                        "cond_j": res.frame.cond_j})
    return records, gaps


def curvature_offset_slope(f, q, cfg=DiffConfig(), eps_list=(1e-4, 3e-4, 1e-3, 3e-3)):
    """Diagnostic probe: log-log slope of |K(q + eps n) - K(q)| vs eps.

    n is the first normal direction at q.  Reported, never asserted: the
    leading order of the off-manifold error is an empirical question.
    """
    q = np.asarray(q, dtype=float)
    base = riemann_and_kretschmann(f, q, cfg)
    n = base.frame.normal_basis[:, 0]
    eps = np.asarray(eps_list, dtype=float)
    dk = np.array([abs(riemann_and_kretschmann(f, q + e * n, cfg).kretschmann
                       - base.kretschmann) for e in eps])
    mask = dk > 0
    if mask.sum() < 2:
        return float("nan")
    slope = np.polyfit(np.log(eps[mask]), np.log(dk[mask]), 1)[0]
    return float(slope)
