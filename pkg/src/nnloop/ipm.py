"""Dense interior-point core for linear matrix-inequality programs.

Solves

    minimize    c' y
    subject to  S_b(y) = G0_b + sum_i y_i G_{b,i}  is PSD   for every block b,
                lb <= y <= ub                               (entries may be inf),

starting from a strictly feasible ``y0``, by path-following on the log-det
barrier: for a decreasing sequence of centering parameters mu the iterate is
driven to an approximate minimizer of

    c' y / mu  -  sum_b log det S_b(y)  -  sum log (y - lb)  -  sum log (ub - y)

with damped Newton steps; mu shrinks geometrically once the Newton decrement
certifies approximate centering.  The Newton matrix

    H_ij = sum_b <G_{b,i}, S_b^-1 G_{b,j} S_b^-1> + bound terms

is assembled densely, which is adequate for a few hundred scalar variables
and total matrix order in the low hundreds.

At a mu-centered point the matrices X_b = mu S_b(y)^-1 (and the analogous
bound multipliers) are feasible dual multipliers up to O(mu): the
complementarity gap equals mu times the barrier parameter nu, and the
stationarity residual ||c - A*(X)|| is of order mu times the Newton
decrement.  Both are reported, and along mu -> 0 the multipliers converge to
an optimal dual solution - or, for phase-1 style feasibility problems with a
negative optimum, to a Farkas certificate ray.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

_STEP_FRACTION = 0.98
_CENTER_TOL = 0.5
_MU_SHRINK = 0.1


@dataclass(frozen=True)
class ConeBlock:
    """One affine-PSD constraint G0 + sum_i y_i coeffs[i] >= 0."""

    name: str
    G0: np.ndarray           # (k, k)
    coeffs: np.ndarray       # (m, k, k)

    @property
    def order(self) -> int:
        return self.G0.shape[0]


@dataclass
class IPMResult:
    status: str              # "converged" | "stopped" | "max_iter" | "numerical"
    y: np.ndarray
    X: list = field(default_factory=list)
    x_lo: np.ndarray | None = None
    x_hi: np.ndarray | None = None
    objective: float = np.nan
    gap: float = np.nan
    rel_gap: float = np.nan
    pinf: float = np.nan
    mu: float = np.nan
    iterations: int = 0


def _chol_all(blocks, y):
    mats = []
    for blk in blocks:
        S = blk.G0 + np.tensordot(y, blk.coeffs, axes=1)
        mats.append(np.linalg.cholesky(0.5 * (S + S.T)))
    return mats


def _logdet(L_all) -> float:
    return 2.0 * sum(float(np.sum(np.log(np.diag(L)))) for L in L_all)


def _max_step(L: np.ndarray, D: np.ndarray) -> float:
    """Largest a with L L' + a D > 0, given the Cholesky factor L."""
    W = solve_triangular(L, D, lower=True)
    W = solve_triangular(L, W.T, lower=True)
    lam = np.linalg.eigvalsh(0.5 * (W + W.T))[0]
    if lam >= 0.0:
        return np.inf
    return -1.0 / lam


def solve_conic(blocks, c, y0, lb=None, ub=None, *, tol=1e-8,
                max_iter=300, verbose=False, stop=None) -> IPMResult:
    """Run the barrier path-following iteration from a strictly feasible y0.

    ``stop`` is an optional early-exit predicate on the iterate, checked at
    approximately centered points; when it fires the result carries status
    "stopped" with the current point (used by feasibility phases that only
    need a strictly interior point, not an optimum).
    """
    c = np.asarray(c, dtype=float)
    m = c.shape[0]
    y = np.array(y0, dtype=float)
    if y.shape != (m,):
        raise ValueError("y0 length must match c")
    lb = np.full(m, -np.inf) if lb is None else np.asarray(lb, dtype=float)
    ub = np.full(m, np.inf) if ub is None else np.asarray(ub, dtype=float)
    i_lo = np.where(np.isfinite(lb))[0]
    i_hi = np.where(np.isfinite(ub))[0]
    if np.any(y[i_lo] <= lb[i_lo]) or np.any(y[i_hi] >= ub[i_hi]):
        raise ValueError("y0 must satisfy the bounds strictly")
    try:
        L_all = _chol_all(blocks, y)
    except np.linalg.LinAlgError as exc:
        raise ValueError("y0 is not strictly feasible for the matrix blocks") from exc

    flats = [blk.coeffs.reshape(m, -1) for blk in blocks]
    nu = sum(blk.order for blk in blocks) + i_lo.size + i_hi.size
    mu = max(1.0, abs(float(c @ y)) / nu)
    last_center = None  # (y, mu, L_all) at the most recent centered point

    def result(status, it, mu_now, L_now, y_now):
        Sinv_all = []
        for blk, L in zip(blocks, L_now):
            Linv = solve_triangular(L, np.eye(blk.order), lower=True)
            Sinv_all.append(Linv.T @ Linv)
        X = [mu_now * Sinv for Sinv in Sinv_all]
        x_lo = np.zeros(m)
        x_hi = np.zeros(m)
        x_lo[i_lo] = mu_now / (y_now[i_lo] - lb[i_lo])
        x_hi[i_hi] = mu_now / (ub[i_hi] - y_now[i_hi])
        gap = mu_now * nu
        obj = float(c @ y_now)
        adj = np.zeros(m)
        for flat, Xb in zip(flats, X):
            adj += flat @ Xb.ravel()
        adj[i_lo] += x_lo[i_lo]
        adj[i_hi] -= x_hi[i_hi]
        pinf = float(np.max(np.abs(c - adj))) / (1.0 + float(np.max(np.abs(c))))
        return IPMResult(status=status, y=y_now, X=X, x_lo=x_lo, x_hi=x_hi,
                         objective=obj, gap=gap,
                         rel_gap=gap / (1.0 + abs(obj)), pinf=pinf,
                         mu=mu_now, iterations=it)

    def degraded(status, it):
        """Fall back to the last centered point, whose multipliers are sound."""
        if last_center is not None:
            yc, muc, Lc = last_center
            return result(status, it, muc, Lc, yc)
        return result(status, it, mu, L_all, y)

    it = 0
    while it < max_iter:
        it += 1
        s_lo = y[i_lo] - lb[i_lo]
        s_hi = ub[i_hi] - y[i_hi]

        # Barrier gradient pieces and the Newton matrix at the current y.
        # With Ghat_i = Linv G_i Linv', H_ij = <Ghat_i, Ghat_j> is assembled
        # from two batched GEMMs and one Gram product, symmetric by design.
        grad_a = np.zeros(m)
        H = np.zeros((m, m))
        for blk, L, flat in zip(blocks, L_all, flats):
            Linv = solve_triangular(L, np.eye(blk.order), lower=True)
            Sinv = Linv.T @ Linv
            grad_a += flat @ Sinv.ravel()
            Ghat = np.matmul(np.matmul(Linv[None, :, :], blk.coeffs),
                             Linv.T[None, :, :]).reshape(m, -1)
            H += Ghat @ Ghat.T
        if i_lo.size:
            grad_a[i_lo] += 1.0 / s_lo
            H[i_lo, i_lo] += 1.0 / s_lo**2
        if i_hi.size:
            grad_a[i_hi] -= 1.0 / s_hi
            H[i_hi, i_hi] += 1.0 / s_hi**2

        jitter = 0.0
        base = max(float(np.trace(H)) / m, 1.0)
        while True:
            try:
                fac = cho_factor(H + jitter * np.eye(m), lower=True)
                break
            except np.linalg.LinAlgError:
                jitter = max(jitter * 10.0, 1e-14 * base)
                if jitter > 1e-4 * base:
                    return degraded("numerical", it)

        # Shrink mu while the current point is centered for it.
        while True:
            rhs = grad_a - c / mu
            dy = cho_solve(fac, rhs)
            lam = float(np.sqrt(max(rhs @ dy, 0.0)))
            if lam > _CENTER_TOL:
                break
            last_center = (y.copy(), mu, list(L_all))
            obj = float(c @ y)
            if verbose:
                print(f"  it {it:3d}  centered  mu {mu:.3e}  obj {obj:+.6e}")
            if stop is not None and stop(y):
                return result("stopped", it, mu, L_all, y)
            if mu * nu <= tol * (1.0 + abs(obj)):
                return result("converged", it, mu, L_all, y)
            mu *= _MU_SHRINK

        # Newton step: start from the fraction-to-boundary limit and
        # backtrack on the barrier merit (Armijo on f = c'y/mu - barriers).
        alpha = 1.0
        dS_all = [np.tensordot(dy, blk.coeffs, axes=1) for blk in blocks]
        for L, dS in zip(L_all, dS_all):
            alpha = min(alpha, _STEP_FRACTION * _max_step(L, dS))
        if i_lo.size:
            neg = dy[i_lo] < 0.0
            if np.any(neg):
                alpha = min(alpha, _STEP_FRACTION *
                            float(np.min(s_lo[neg] / -dy[i_lo][neg])))
        if i_hi.size:
            pos = dy[i_hi] > 0.0
            if np.any(pos):
                alpha = min(alpha, _STEP_FRACTION *
                            float(np.min(s_hi[pos] / dy[i_hi][pos])))

        f_cur = float(c @ y) / mu - _logdet(L_all)
        if i_lo.size:
            f_cur -= float(np.sum(np.log(s_lo)))
        if i_hi.size:
            f_cur -= float(np.sum(np.log(s_hi)))

        y_prev, L_prev = y, L_all
        lam2 = lam * lam
        ok = False
        for _ in range(60):
            y_try = y_prev + alpha * dy
            try:
                L_try = _chol_all(blocks, y_try)
            except np.linalg.LinAlgError:
                alpha *= 0.5
                continue
            f_try = float(c @ y_try) / mu - _logdet(L_try)
            if i_lo.size:
                f_try -= float(np.sum(np.log(y_try[i_lo] - lb[i_lo])))
            if i_hi.size:
                f_try -= float(np.sum(np.log(ub[i_hi] - y_try[i_hi])))
            if f_try <= f_cur - 1e-4 * alpha * lam2:
                ok = True
                break
            alpha *= 0.5
        if verbose:
            print(f"  it {it:3d}  mu {mu:.3e}  lam {lam:.3e}  "
                  f"alpha {alpha:.3e}  obj {float(c @ y_prev):+.6e}")
        if not ok or alpha < 1e-14:
            return degraded("numerical", it)
        y, L_all = y_try, L_try

    return result("max_iter", it, mu, L_all, y)
