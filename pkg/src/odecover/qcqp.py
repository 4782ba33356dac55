"""Least squares under ellipsoidal constraints.

Solves

    minimize    (1 / 2m) |y - Z alpha - G pi|^2
    subject to  pi^T Q_k pi <= r_k      for every k

over an unconstrained intercept block ``alpha`` and weights ``pi``.

The intercept is profiled out by projecting onto the orthogonal complement
of ``range(Z)``.  A single ellipsoid reduces to a trust-region subproblem that
is solved exactly from one SVD.  Several ellipsoids are handled by projected
Newton ascent on the concave dual in the multipliers; each dual evaluation is
a least-squares solve on the stacked matrix ``[A / sqrt(m); sqrt(lam_k) L_k^T]``
with ``Q_k = L_k L_k^T``, so ``A^T A`` is never formed.

Lagrangian convention: ``L = f(pi) + 1/2 sum_k lam_k (pi^T Q_k pi - r_k)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .errors import MaxIterations

EIG_RTOL = 1e-13
KKT_ACCEPT = 1e-8
RIDGE = 1e-13


@dataclass
class QcqpResult:
    alpha: np.ndarray
    pi: np.ndarray
    multipliers: np.ndarray
    objective: float
    constraint_values: np.ndarray
    slacks: np.ndarray
    kkt_residual: float
    iterations: int
    converged: bool
    method: str
    fitted: np.ndarray = field(repr=False, default=None)

    def diagnostics(self) -> dict:
        return {
            "objective": self.objective,
            "constraint_slacks": self.slacks.tolist(),
            "multipliers": self.multipliers.tolist(),
            "kkt_residual": self.kkt_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "method": self.method,
        }


def psd_factor(Q: np.ndarray, rtol: float = EIG_RTOL) -> np.ndarray:
    """``L`` with ``Q ~= L L^T``, keeping eigenvalues above ``rtol * max``."""
    w, V = np.linalg.eigh(0.5 * (Q + Q.T))
    top = max(w[-1], 0.0)
    keep = w > rtol * top if top > 0 else np.zeros_like(w, bool)
    return V[:, keep] * np.sqrt(w[keep])


class _Profile:
    """Projection onto the orthogonal complement of the intercept columns."""

    def __init__(self, Z, m):
        if Z is None or Z.shape[1] == 0:
            self.Zq = np.zeros((m, 0))
        else:
            q, r = np.linalg.qr(Z)
            rank = int(np.sum(np.abs(np.diag(r)) > 1e-12 * max(1.0, np.abs(r).max())))
            self.Zq = q[:, :rank]
        self.Z = Z

    def apply(self, v):
        return v - self.Zq @ (self.Zq.T @ v)

    def intercept(self, resid):
        if self.Z is None or self.Z.shape[1] == 0:
            return np.zeros(0)
        return np.linalg.lstsq(self.Z, resid, rcond=None)[0]


class TrustRegionLS:
    """``min (1/2m)|b - B u|^2`` subject to ``|u|^2 <= r`` for many ``b``.

    The SVD of ``B`` is computed once; each solve is a scalar root-find on the
    multiplier.
    """

    def __init__(self, B: np.ndarray, m: int | None = None):
        self.m = B.shape[0] if m is None else m
        U, s, Wt = np.linalg.svd(B, full_matrices=False)
        keep = s > EIG_RTOL * (s[0] if s.size else 0.0)
        self.U, self.s, self.Wt = U[:, keep], s[keep], Wt[keep]

    def coefficients(self, b):
        return self.U.T @ b

    def norm2(self, beta, lam):
        return float(np.sum((self.s * beta / (self.s ** 2 + self.m * lam)) ** 2))

    def multiplier(self, beta, r):
        if r <= 0:
            return np.inf
        if self.norm2(beta, 0.0) <= r:
            return 0.0
        hi = float(np.linalg.norm(self.s * beta)) / (self.m * np.sqrt(r))
        # 1/|u| is concave and increasing in lam, which makes the bracket well behaved
        f = lambda lam: 1.0 / np.sqrt(r) - 1.0 / np.sqrt(self.norm2(beta, lam))
        return optimize.brentq(f, 0.0, hi * (1 + 1e-12), xtol=1e-300, rtol=1e-15, maxiter=500)

    def solve(self, b, r, floor: float = 0.0):
        """Minimizer and multiplier; coefficients of ``b`` below ``floor`` count as round-off."""
        beta = self.coefficients(b)
        if floor > 0:
            beta = np.where(np.abs(beta) <= floor, 0.0, beta)
        lam = self.multiplier(beta, r)
        if np.isinf(lam):
            return np.zeros(self.Wt.shape[1]), lam
        u = self.Wt.T @ (self.s * beta / (self.s ** 2 + self.m * lam))
        return u, lam

    def shrink_factors(self, lam):
        """Eigenvalues of the fitted-value smoother on ``range(B)``."""
        return self.s ** 2 / (self.s ** 2 + self.m * lam)


def _normalize(ellipsoids, n):
    out = []
    for Q, r in ellipsoids:
        Q = np.eye(n) if Q is None else np.asarray(Q, float)
        if Q.shape != (n, n):
            raise ValueError("ellipsoid matrix shape does not match the number of weights")
        if r < 0:
            raise ValueError("ellipsoid radii must be non-negative")
        out.append((0.5 * (Q + Q.T), float(r)))
    return out


def _null_basis(Qs, n):
    """Orthonormal basis of the common null space of the given PSD matrices."""
    N = np.eye(n)
    for Q in Qs:
        if N.shape[1] == 0:
            break
        Qr = N.T @ Q @ N
        w, V = np.linalg.eigh(0.5 * (Qr + Qr.T))
        top = max(abs(w).max(), 1e-300)
        N = N @ V[:, w <= 1e-12 * max(top, np.abs(Q).max())]
    return N


class _ProjectedNewton:
    """Projected Newton ascent on a concave dual over ``lam >= 0``.

    Subclasses provide ``rs`` and ``evaluate(lam) -> (dual, grad, x, q, factor)``
    and ``hessian(x, factor)``.
    """

    def solve(self, lam0, tol=1e-11, max_iter=200, lam_cap=np.inf):
        lam = np.maximum(np.asarray(lam0, float), 0.0)
        dual, grad, pi, q, fac = self.evaluate(lam)
        scale = 1.0 + self.rs
        it = stalled = 0
        for it in range(1, max_iter + 1):
            at_bound = (lam <= 0) & (grad <= 0)
            free = ~at_bound
            viol = np.where(lam > 0, np.abs(grad), np.maximum(grad, 0.0)) / scale
            if np.all(viol <= tol):
                return lam, pi, q, it, True
            H = self.hessian(pi, fac)
            direction = np.zeros_like(lam)
            if free.any():
                Hf = H[np.ix_(free, free)]
                mu = 1e-14 * max(1e-300, np.abs(np.diag(Hf)).max())
                try:
                    direction[free] = np.linalg.solve(Hf - mu * np.eye(Hf.shape[0]), -grad[free])
                except np.linalg.LinAlgError:
                    direction[free] = grad[free]
                if grad[free] @ direction[free] <= 0:  # not an ascent direction
                    direction[free] = grad[free]
            t, accepted = 1.0, False
            for _ in range(60):
                cand = np.maximum(lam + t * direction, 0.0)
                c_dual, c_grad, c_pi, c_q, c_fac = self.evaluate(cand)
                if c_dual >= dual + 1e-4 * float(grad @ (cand - lam)) - 1e-15 * abs(dual):
                    accepted = True
                    break
                t *= 0.5
            if not accepted or np.any(cand > lam_cap):
                break
            step = np.abs(cand - lam)
            gain = c_dual - dual
            lam, dual, grad, pi, q, fac = cand, c_dual, c_grad, c_pi, c_q, c_fac
            if np.all(step <= 1e-15 * lam) and it > 5:
                break
            # round-off level progress: the dual has flattened out numerically
            stalled = stalled + 1 if gain <= 1e-13 * max(abs(dual), 1e-300) else 0
            if stalled >= 5:
                break
        viol = np.where(lam > 0, np.abs(grad), np.maximum(grad, 0.0)) / scale
        return lam, pi, q, it, bool(np.all(viol <= 1e-8))




class _DualSolver(_ProjectedNewton):
    """Dual of the ridge-regularized multi-ellipsoid least-squares problem."""

    def __init__(self, A, b, Qs, rs, m):
        self.A, self.b, self.Qs, self.rs, self.m = A, b, Qs, np.asarray(rs, float), m
        self.Ls = [psd_factor(Q) for Q in Qs]
        self.n = A.shape[1]
        self.evals = 0
        # a vanishing ridge keeps the Lagrangian minimizer unique, so the dual stays smooth
        top = np.linalg.norm(A, 2) ** 2 / m if A.size else 0.0
        top = max([top] + [L.shape[1] and float(np.linalg.norm(L, 2) ** 2) for L in self.Ls])
        self.ridge = RIDGE * max(top, 1e-300)
        self.pi_ls = np.linalg.lstsq(A, b, rcond=None)[0]

    def inner(self, lam):
        # SVD of the stacked square-root system; normal equations would square its condition number
        self.evals += 1
        rows = [self.A / np.sqrt(self.m), np.sqrt(self.ridge) * np.eye(self.n)]
        rows += [np.sqrt(l) * L.T for l, L in zip(lam, self.Ls) if l > 0]
        S = np.vstack(rows)
        rhs = np.zeros(S.shape[0])
        rhs[: self.A.shape[0]] = self.b / np.sqrt(self.m)
        U, s, Vt = np.linalg.svd(S, full_matrices=False)
        keep = s > 1e-12 * (s[0] if s.size else 0.0)
        U, s, Vt = U[:, keep], s[keep], Vt[keep]
        pi = Vt.T @ ((U.T @ rhs) / s)
        return pi, (s, Vt)

    def evaluate(self, lam):
        pi, fac = self.inner(lam)
        q = np.array([pi @ Q @ pi for Q in self.Qs])
        # objective minus its unconstrained minimum, free of cancellation
        excess = self.A @ (pi - self.pi_ls)
        f = 0.5 * excess @ excess / self.m + 0.5 * self.ridge * float(pi @ pi)
        dual = f + 0.5 * float(lam @ (q - self.rs))
        grad = 0.5 * (q - self.rs)
        return dual, grad, pi, q, fac

    def hessian(self, pi, fac):
        s, Vt = fac
        G = np.column_stack([Q @ pi for Q in self.Qs])
        W = (Vt @ G) / s[:, None]
        return -(W.T @ W)


class _LsSetSolver(_ProjectedNewton):
    """Minimum-norm point of the least-squares solution set ``pi_ls + N nu`` inside the ellipsoids.

    Used when the constrained optimum lies on that set, where the ridge dual
    carries multipliers at round-off scale.
    """

    def __init__(self, pi_ls, N, Qs, rs):
        self.pi_ls, self.N, self.rs = pi_ls, N, np.asarray(rs, float)
        self.Qn = [N.T @ Q @ N for Q in Qs]
        self.c = [N.T @ (Q @ pi_ls) for Q in Qs]
        self.e = np.array([pi_ls @ Q @ pi_ls for Q in Qs])
        self.eye = np.eye(N.shape[1])

    def evaluate(self, lam):
        H = self.eye + sum(l * Q for l, Q in zip(lam, self.Qn))
        fac = linalg.cho_factor(H, lower=True)
        rhs = -sum((l * c for l, c in zip(lam, self.c)), np.zeros(H.shape[0]))
        nu = linalg.cho_solve(fac, rhs)
        q = np.array([nu @ Q @ nu + 2 * c @ nu + e for Q, c, e in zip(self.Qn, self.c, self.e)])
        dual = 0.5 * float(nu @ nu) + 0.5 * float(lam @ (q - self.rs))
        return dual, 0.5 * (q - self.rs), nu, q, fac

    def hessian(self, nu, fac):
        G = np.column_stack([Q @ nu + c for Q, c in zip(self.Qn, self.c)])
        return -(G.T @ linalg.cho_solve(fac, G))

    def pi(self, nu):
        return self.pi_ls + self.N @ nu


def _polish_on_ls_set(solver: _DualSolver, lam, max_iter):
    """Exact optimum with zero multipliers when the least-squares solution set meets every ellipsoid.

    Only tried when the design has a null space and the ridge dual settled at
    multipliers comparable to the ridge itself.  Returns None otherwise.
    """
    A = solver.A
    U, s, Vt = np.linalg.svd(A, full_matrices=True)
    tol = max(A.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    if rank == A.shape[1]:
        return None
    sizes = np.array([np.linalg.norm(Q, 2) for Q in solver.Qs])
    if np.any(lam * sizes > 1e6 * solver.ridge):
        return None
    N = Vt[rank:].T
    ls = _LsSetSolver(solver.pi_ls, N, solver.Qs, solver.rs)
    mu, nu, q, _, ok = ls.solve(np.zeros(len(solver.Qs)), max_iter=max_iter, lam_cap=1e12)
    if not ok or np.any(q > solver.rs * (1 + 1e-12)):
        return None
    return ls.pi(nu)


def _warm_start(A, b, Qs, rs, m):
    """Per-constraint multipliers from single-ellipsoid solves, used to seed the dual."""
    lam = np.zeros(len(Qs))
    for k, (Q, r) in enumerate(zip(Qs, rs)):
        L = psd_factor(Q)
        if L.shape[1] == 0:
            continue
        # constrained directions u = L^T pi; unconstrained ones are profiled out
        Linv = np.linalg.pinv(L.T)
        N = _null_basis([Q], Q.shape[0])
        A0 = A @ N
        if A0.shape[1]:
            q0, _ = np.linalg.qr(A0)
            proj = lambda v: v - q0 @ (q0.T @ v)
        else:
            proj = lambda v: v
        B = proj(A @ Linv)
        tr = TrustRegionLS(B, m)
        lam[k] = tr.multiplier(tr.coefficients(proj(b)), r)
    return np.where(np.isfinite(lam), lam, 0.0)


def _estimate_multipliers(A, b, m, Qs, rs, pi, active_tol=1e-6):
    """Nonnegative least-squares fit of the stationarity condition over near-active constraints."""
    lam = np.zeros(len(Qs))
    q = np.array([pi @ Q @ pi for Q in Qs])
    act = [k for k in range(len(Qs)) if rs[k] > 0 and q[k] >= rs[k] * (1 - active_tol)]
    if act:
        grad_f = -A.T @ (b - A @ pi) / m
        M = np.column_stack([Qs[k] @ pi for k in act])
        lam[act] = optimize.nnls(M, -grad_f)[0]
    return lam


def _kkt(A, b, m, Qs, rs, pi, lam):
    grad_f = -A.T @ (b - A @ pi) / m
    cons_grads = [Q @ pi for Q in Qs]
    station = grad_f + sum(l * g for l, g in zip(lam, cons_grads))
    denom = 1.0 + np.abs(grad_f).max(initial=0.0) + sum(
        l * np.abs(g).max(initial=0.0) for l, g in zip(lam, cons_grads))
    q = np.array([pi @ Q @ pi for Q in Qs])
    comp = max((abs(l * (qi - r)) / (1.0 + r) / max(1.0, l) for l, qi, r in zip(lam, q, rs)), default=0.0)
    feas = max((max(qi - r, 0.0) / (1.0 + r) for qi, r in zip(q, rs)), default=0.0)
    return max(np.abs(station).max(initial=0.0) / denom, comp, feas)


def _apg(A, b, Qs, rs, m, pi0, max_iter=20000, tol=1e-10):
    """Accelerated projected gradient with Dykstra projection onto the ellipsoid intersection."""
    projs = [_EllipsoidProjector(Q, r) for Q, r in zip(Qs, rs)]

    def project(v):
        if len(projs) == 1:
            return projs[0](v)
        x = v.copy()
        incs = [np.zeros_like(v) for _ in projs]
        for _ in range(500):
            x_old = x
            for i, P in enumerate(projs):
                y = P(x + incs[i])
                incs[i] = x + incs[i] - y
                x = y
            if np.linalg.norm(x - x_old) <= 1e-14 * (1 + np.linalg.norm(x)):
                break
        return x

    lip = np.linalg.norm(A, 2) ** 2 / m
    step = 1.0 / max(lip, 1e-300)
    x = project(pi0)
    yk, t = x.copy(), 1.0
    it = 0
    for it in range(1, max_iter + 1):
        g = -A.T @ (b - A @ yk) / m
        x_new = project(yk - step * g)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        yk = x_new + (t - 1) / t_new * (x_new - x)
        if np.linalg.norm(x_new - x) <= tol * (1 + np.linalg.norm(x)):
            x = x_new
            return x, it, True
        x, t = x_new, t_new
    return x, it, False


def _apg_fallback(A, b, Qs, rs, m, w, lam, converged):
    """First-order refinement from the Newton iterate; keeps whichever point has the smaller KKT residual."""
    w2, _, ok = _apg(A, b, Qs, rs, m, w)
    lam2 = _estimate_multipliers(A, b, m, Qs, rs, w2)
    if _kkt(A, b, m, Qs, rs, w2, lam2) < _kkt(A, b, m, Qs, rs, w, lam):
        return w2, lam2, ok
    return w, lam, converged


class _EllipsoidProjector:
    """Euclidean projection onto ``{v : v^T Q v <= r}``."""

    def __init__(self, Q, r):
        self.w, self.V = np.linalg.eigh(Q)
        self.w = np.maximum(self.w, 0.0)
        self.r = r

    def __call__(self, v):
        c = self.V.T @ v
        if np.sum(self.w * c * c) <= self.r:
            return v
        g = lambda mu: np.sum(self.w * (c / (1 + mu * self.w)) ** 2) - self.r
        hi = 1.0
        while g(hi) > 0:
            hi *= 4.0
        mu = optimize.brentq(g, 0.0, hi, xtol=1e-300, rtol=1e-15)
        return self.V @ (c / (1 + mu * self.w))


def qcqp_solve(
    design: np.ndarray,
    response: np.ndarray,
    intercept_cols: np.ndarray | None,
    ellipsoids: list,
    method: str = "dual-newton",
    max_iter: int = 200,
) -> QcqpResult:
    """Solve the ellipsoid-constrained least-squares program.

    Parameters
    ----------
    design : (m, n) array ``G``.
    response : (m,) array ``y``.
    intercept_cols : (m, p) array ``Z`` of unconstrained columns, or None.
    ellipsoids : list of ``(Q_k, r_k)``; ``Q_k = None`` means the identity.
    method : ``"dual-newton"`` (default) or ``"apg"``.

    Returns a :class:`QcqpResult`.  The returned weights are always feasible:
    a final rescaling absorbs round-off, after which the intercept is refit.
    """
    G = np.asarray(design, float)
    y = np.asarray(response, float)
    m, n = G.shape
    Z = None if intercept_cols is None else np.asarray(intercept_cols, float).reshape(m, -1)
    ells = _normalize(ellipsoids, n)
    Qs = [Q for Q, _ in ells]
    rs = np.array([r for _, r in ells])
    prof = _Profile(Z, m)
    A, b = prof.apply(G), prof.apply(y)

    # zero radii pin pi to the common null space of those forms
    N = _null_basis([Q for Q, r in ells if r == 0], n) if np.any(rs == 0) else np.eye(n)
    An = A @ N
    Qn = [N.T @ Q @ N for Q in Qs]
    lam = np.zeros(len(ells))
    converged, iterations = True, 0

    if N.shape[1] == 0:
        w = np.zeros(0)
    elif method == "apg":
        w, iterations, converged = _apg(An, b, Qn, rs, m, np.zeros(N.shape[1]))
        lam = _estimate_multipliers(An, b, m, Qn, rs, w)
    elif len(ells) == 1 and rs[0] > 0:
        L = psd_factor(Qn[0])
        Nq = _null_basis([Qn[0]], N.shape[1])
        if Nq.shape[1]:
            q0, _ = np.linalg.qr(An @ Nq)
            proj = lambda v: v - q0 @ (q0.T @ v)
        else:
            proj = lambda v: v
        Linv = np.linalg.pinv(L.T)
        tr = TrustRegionLS(proj(An @ Linv), m)
        u, lam0 = tr.solve(proj(b), rs[0])
        w = Linv @ u
        if Nq.shape[1]:
            w = w + Nq @ np.linalg.lstsq(An @ Nq, b - An @ w, rcond=None)[0]
        lam[0] = lam0
        iterations = 1
    elif len(ells) == 0:
        w = np.linalg.lstsq(An, b, rcond=None)[0]
    else:
        active = rs > 0
        solver = _DualSolver(An, b, [Qn[k] for k in np.nonzero(active)[0]], rs[active], m)
        lam_act = np.zeros(int(active.sum()))
        pi0, _ = solver.inner(lam_act)
        q0 = np.array([pi0 @ Q @ pi0 for Q in solver.Qs])
        if np.any(q0 > rs[active]):
            lam_act = _warm_start(An, b, solver.Qs, rs[active], m)
        lam_act, w, _, iterations, converged = solver.solve(lam_act, max_iter=max_iter)
        lam[active] = lam_act
        polished = _polish_on_ls_set(solver, lam_act, max_iter)
        if polished is not None:
            w, lam[:] = polished, 0.0
            converged = True
        elif _kkt(An, b, m, Qn, rs, w, lam) > KKT_ACCEPT:
            w, lam, converged = _apg_fallback(An, b, Qn, rs, m, w, lam, converged)

    pi = N @ w
    q = np.array([pi @ Q @ pi for Q in Qs])
    ratio = [np.sqrt(r / qi) for qi, r in zip(q, rs) if qi > r]
    if ratio:
        pi = pi * min(ratio) * (1 - 1e-15)
        q = np.array([pi @ Q @ pi for Q in Qs])
    fitted_pi = G @ pi
    alpha = prof.intercept(y - fitted_pi)
    fitted = fitted_pi + (Z @ alpha if Z is not None and Z.shape[1] else 0.0)
    resid = y - fitted
    kkt = _kkt(An, b, m, Qn, rs, N.T @ pi, lam)
    # a stalled line search at a KKT point is still a solution
    converged = converged or kkt <= KKT_ACCEPT
    if not converged:
        warnings.warn(str(MaxIterations(f"QCQP stopped after {iterations} iterations; "
                                        f"KKT residual {kkt:.3g}")), RuntimeWarning, stacklevel=2)
    return QcqpResult(
        alpha=alpha,
        pi=pi,
        multipliers=lam,
        objective=0.5 * float(resid @ resid) / m,
        constraint_values=q,
        slacks=rs - q,
        kkt_residual=float(kkt),
        iterations=int(iterations),
        converged=bool(converged),
        method=method,
        fitted=fitted,
    )
