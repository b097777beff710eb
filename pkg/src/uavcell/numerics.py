"""Dense numerical kernels shared by the solvers.

Four independent pieces: a Hermitian generalized eigensolver wrapper, a
small interior-point QP for Euclidean projection onto a polytope, an
exhaustive search over binary assignment maps, and a log-barrier Newton
solver for smooth convex programs built from structured constraint rows.
All kernels are stateless and safe to call from parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


class SingularMatrixError(np.linalg.LinAlgError):
    """The quotient denominator matrix is not positive definite."""


class InfeasiblePolytopeError(ValueError):
    """The constraint polytope is empty; projection has no target."""


class InfeasibleProgramError(ValueError):
    """No strictly feasible point exists for the convex program."""


class NumericsError(RuntimeError):
    """A solver failed to converge; carries an iteration trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class SearchSpaceError(ValueError):
    """Assignment enumeration would exceed the configured cap."""


# ---------------------------------------------------------------------------
# generalized eigenpair
# ---------------------------------------------------------------------------

def leading_gen_eigpair(a_mat, b_mat):
    """Maximizer of the quotient z^H A z / z^H B z over unit-norm z.

    Parameters
    ----------
    a_mat : Hermitian matrix.
    b_mat : Hermitian positive-definite matrix (noise terms keep the
        solver covariances well away from singular).

    Returns
    -------
    (value, vector): the largest generalized eigenvalue and its unit
    eigenvector. The first entry of significant magnitude is rotated to
    be real positive so repeated calls give identical output.
    """
    a_mat = np.asarray(a_mat)
    b_mat = np.asarray(b_mat)
    n = a_mat.shape[0]
    try:
        w, v = scipy.linalg.eigh(a_mat, b_mat, subset_by_index=[n - 1, n - 1],
                                 check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"denominator matrix not positive definite: {exc}")
    vec = v[:, 0]
    vec = vec / np.linalg.norm(vec)
    return float(w[0]), _fix_phase(vec)


def _fix_phase(vec, tol=1e-12):
    # rotate the first significant entry to the positive real axis
    mags = np.abs(vec)
    cutoff = tol * mags.max()
    idx = int(np.argmax(mags > cutoff))
    entry = vec[idx]
    if np.abs(entry) > 0:
        vec = vec * (entry.conjugate() / np.abs(entry))
        # kill the residual imaginary dust on the anchor entry
        vec[idx] = vec[idx].real
    return vec


# ---------------------------------------------------------------------------
# polytope projection (dense primal-dual interior-point QP)
# ---------------------------------------------------------------------------

@dataclass
class LinearConstraintSet:
    """Polytope {x : ineq_coeffs @ x <= ineq_bounds, eq_coeffs @ x = eq_bounds}."""

    dim: int
    ineq_coeffs: np.ndarray
    ineq_bounds: np.ndarray
    eq_coeffs: np.ndarray = None
    eq_bounds: np.ndarray = None

    def __post_init__(self):
        self.ineq_coeffs = np.atleast_2d(np.asarray(self.ineq_coeffs, dtype=float))
        self.ineq_bounds = np.asarray(self.ineq_bounds, dtype=float).ravel()
        if self.eq_coeffs is None:
            self.eq_coeffs = np.zeros((0, self.dim))
            self.eq_bounds = np.zeros(0)
        else:
            self.eq_coeffs = np.atleast_2d(np.asarray(self.eq_coeffs, dtype=float))
            self.eq_bounds = np.asarray(self.eq_bounds, dtype=float).ravel()
        for arr in (self.ineq_coeffs, self.ineq_bounds, self.eq_coeffs, self.eq_bounds):
            if not np.all(np.isfinite(arr)):
                raise ValueError("constraint coefficients must be finite")
        if self.ineq_coeffs.shape != (len(self.ineq_bounds), self.dim):
            raise ValueError("inequality shape mismatch")
        if self.eq_coeffs.shape != (len(self.eq_bounds), self.dim):
            raise ValueError("equality shape mismatch")


def project_onto_polytope(point, constraints, tol=1e-8, max_iter=60):
    """Euclidean projection of `point` onto a polytope.

    Solves min 0.5*||x - point||^2 subject to the linear constraints with
    a dense Mehrotra-style primal-dual interior-point method, then snaps
    the iterate onto its exact active face whenever the active-set
    refinement can verify the KKT system. KKT residuals at exit are
    below 1e-8 either way. An empty polytope raises
    InfeasiblePolytopeError (classified exactly with an LP phase-I when
    the interior-point iteration cannot settle).
    """
    p = np.asarray(point, dtype=float).ravel()
    cons = constraints
    if cons.dim != p.size:
        raise ValueError("point dimension does not match constraint set")
    cached = getattr(cons, "_scaled_rows", None)
    if cached is None:
        G = cons.ineq_coeffs.copy()
        h = cons.ineq_bounds.copy()
        # row scaling keeps complementarity products comparable across rows
        scale = np.maximum(np.abs(G).max(axis=1), np.abs(h))
        scale = np.where(scale > 0, scale, 1.0)
        G /= scale[:, None]
        h /= scale
        G, h = _drop_redundant_parallel(G, h)
        cons._scaled_rows = (G, h)
    else:
        G, h = cached
    A = cons.eq_coeffs
    b = cons.eq_bounds
    m, n = G.shape
    neq = A.shape[0]
    if m == 0 and neq == 0:
        return p.copy()

    x = p.copy()
    s = np.maximum(h - G @ x, 1.0)
    lam = np.ones(m)
    nu = np.zeros(neq)

    with np.errstate(all="ignore"):
        for _ in range(max_iter):
            r_d = x - p + G.T @ lam + (A.T @ nu if neq else 0.0)
            r_p = G @ x + s - h
            r_e = A @ x - b if neq else np.zeros(0)
            mu = lam @ s / m
            if (np.abs(r_d).max() < tol and np.abs(r_p).max() < tol
                    and (neq == 0 or np.abs(r_e).max() < tol)
                    and mu < 1e-8):
                # snap onto the exact face when the refinement verifies;
                # a degenerate corner it cannot certify still leaves every
                # KKT residual at or under the advertised 1e-8
                polished = _polish(p, x, G, h, A, b, max_rounds=48)
                return polished if polished is not None else x

            d = lam / s
            if not np.isfinite(d).all():
                break
            H = np.eye(n) + (G.T * d) @ G

            def kkt_solve(rhs_x, rhs_e):
                if neq == 0:
                    return _psd_solve(H, rhs_x), np.zeros(0)
                kkt = np.block([[H, A.T], [A, np.zeros((neq, neq))]])
                sol = np.linalg.solve(kkt, np.concatenate([rhs_x, rhs_e]))
                return sol[:n], sol[n:]

            try:
                # affine scaling (predictor) direction
                rhs = -r_d + G.T @ (lam - d * r_p)
                dx_aff, dnu_aff = kkt_solve(rhs, -r_e)
                ds_aff = -r_p - G @ dx_aff
                dlam_aff = -lam - d * ds_aff

                alpha_aff = _step_length(s, ds_aff, lam, dlam_aff, 1.0)
                mu_aff = (lam + alpha_aff * dlam_aff) @ (
                    s + alpha_aff * ds_aff) / m
                sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0

                # corrector with the centering term
                r_c = dlam_aff * ds_aff - sigma * mu
                rhs = -r_d + G.T @ (lam - d * r_p + r_c / s)
                dx, dnu = kkt_solve(rhs, -r_e)
            except np.linalg.LinAlgError:
                break
            ds = -r_p - G @ dx
            # complementarity linearization: lam*ds + s*dlam = -(lam*s + r_c)
            dlam = -(lam * s + r_c + lam * ds) / s
            if not (np.isfinite(dx).all() and np.isfinite(dlam).all()):
                break

            alpha = _step_length(s, ds, lam, dlam, 0.99)
            x += alpha * dx
            s += alpha * ds
            lam += alpha * dlam
            if neq:
                nu += alpha * dnu

    # did not settle: classify emptiness exactly before blaming conditioning
    from scipy.optimize import linprog
    check = linprog(np.zeros(n), A_ub=G, b_ub=h,
                    A_eq=A if neq else None, b_eq=b if neq else None,
                    bounds=[(None, None)] * n, method="highs")
    if check.status == 2:
        raise InfeasiblePolytopeError("projection target polytope is empty")
    # feasible, so let the verified active-set refinement finish the job
    seed = x if np.isfinite(x).all() else np.asarray(check.x, dtype=float)
    polished = _polish(p, seed, G, h, A, b, max_rounds=8 * (m + 2))
    if polished is not None:
        return polished
    raise NumericsError("projection interior-point did not converge")


def _drop_redundant_parallel(G, h, cos_tol=1e-12):
    """Keep only the tightest of any exactly-parallel inequality rows.

    Big-M rows regularly collapse onto single-variable directions that
    the box rows already cover; the duplicates change nothing about the
    feasible set but make every active-set gram on that face singular.
    Vacuous all-zero rows with nonnegative bounds are dropped too.
    """
    norms = np.linalg.norm(G, axis=1)
    zero = norms <= 0
    if zero.any():
        if (h[zero] < 0).any():
            # 0 <= negative bound: keep one marker row so the emptiness
            # is classified downstream instead of silently vanishing
            return G, h
        G, h, norms = G[~zero], h[~zero], norms[~zero]
    m = G.shape[0]
    if m <= 1:
        return G, h
    unit = G / norms[:, None]
    ratio = h / norms
    same_dir = unit @ unit.T >= 1.0 - cos_tol
    alive = np.ones(m, dtype=bool)
    keep = np.zeros(m, dtype=bool)
    for i in np.argsort(ratio, kind="stable"):
        if alive[i]:
            keep[i] = True
            alive &= ~same_dir[i]
    if keep.all():
        return G, h
    return G[keep], h[keep]


def _polish(p, x, G, h, A, b, max_rounds=16):
    """Snap the interior-point iterate onto its exact active face.

    Active-set refinement seeded by the rows the iterate has made nearly
    active: project onto the face, drop rows with negative multipliers,
    add violated ones, and accept only a KKT-verified candidate (which
    is then the exact projection, convexity making KKT sufficient).
    Returns None when no verified candidate emerges.
    """
    neq = A.shape[0]
    active = (h - G @ x) <= 1e-6
    for _ in range(max_rounds):
        n_act = int(active.sum())
        if n_act == 0 and neq == 0:
            if (G @ p - h).max() <= 1e-9:
                return p
            active[int(np.argmax(G @ p - h))] = True
            continue
        C = np.vstack([G[active], A]) if neq else G[active]
        r = np.concatenate([G[active] @ p - h[active],
                            A @ p - b]) if neq else G[active] @ p - h[active]
        gram = C @ C.T
        try:
            shift = 1e-13 * max(gram.trace(), 1.0)
            mult = scipy.linalg.cho_solve(
                scipy.linalg.cho_factor(gram + shift * np.eye(len(r)),
                                        check_finite=False), r,
                check_finite=False)
        except scipy.linalg.LinAlgError:
            mult, *_ = np.linalg.lstsq(gram, r, rcond=None)
        cand = p - C.T @ mult
        lam_face = mult[:n_act]
        if n_act and lam_face.min() < -1e-9:
            # a pinned variable puts two opposing rows in the active set;
            # only the difference of their multipliers is determined, so
            # rebalance such pairs to the nonnegative split before taking
            # a negative value as a drop certificate
            rows = G[active]
            norms = np.linalg.norm(rows, axis=1)
            units = rows / norms[:, None]
            opposed = units @ units.T <= -(1.0 - 1e-12)
            pairs = np.argwhere(np.triu(opposed, 1))
            for i, j in pairs:
                diff = lam_face[i] * norms[i] - lam_face[j] * norms[j]
                lam_face[i] = max(diff, 0.0) / norms[i]
                lam_face[j] = max(-diff, 0.0) / norms[j]
            if lam_face.min() < -1e-9:
                idx = np.flatnonzero(active)
                active[idx[int(np.argmin(lam_face))]] = False
                continue
        viol = G @ cand - h
        j = int(np.argmax(viol)) if viol.size else 0
        if viol.size and viol[j] > 1e-9:
            if active[j]:
                return None  # numerically stuck corner
            active[j] = True
            continue
        if neq and np.abs(A @ cand - b).max() > 1e-9:
            return None
        return cand
    return None


def _psd_solve(H, rhs):
    try:
        c, low = scipy.linalg.cho_factor(H, check_finite=False)
    except scipy.linalg.LinAlgError:
        c, low = scipy.linalg.cho_factor(H + 1e-12 * np.eye(H.shape[0]),
                                         check_finite=False)
    return scipy.linalg.cho_solve((c, low), rhs, check_finite=False)


def _step_length(s, ds, lam, dlam, frac):
    alpha = 1.0
    neg = ds < 0
    if neg.any():
        alpha = min(alpha, (-s[neg] / ds[neg]).min())
    neg = dlam < 0
    if neg.any():
        alpha = min(alpha, (-lam[neg] / dlam[neg]).min())
    return min(1.0, frac * alpha)


# ---------------------------------------------------------------------------
# exhaustive binary assignment search
# ---------------------------------------------------------------------------

def enumerate_binary_assignments(num_bs, num_uav, feasibility, objective=None,
                                 cap=1_000_000):
    """Exhaustive search over assignment maps (each UAV picks a BS or none).

    `feasibility` and `objective` are batched callables over a choices
    array of shape (count, num_uav) holding 0 for "off" and c for BS c-1;
    feasibility returns a boolean vector, objective a score vector. The
    default objective is the number of assigned UAVs. Ties resolve to the
    lexicographically smallest choice tuple, which prefers lower BS
    indices. Returns (matrix, score) with matrix of shape (G, U).
    """
    count = (num_bs + 1) ** num_uav
    if count > cap:
        raise SearchSpaceError(f"{count} assignment maps exceed cap {cap}")
    if num_uav == 0:
        return np.zeros((num_bs, 0)), 0.0
    grids = np.meshgrid(*[np.arange(num_bs + 1)] * num_uav, indexing="ij")
    choices = np.stack([g.ravel() for g in grids], axis=1)
    ok = np.asarray(feasibility(choices), dtype=bool)
    if objective is None:
        score = (choices > 0).sum(axis=1).astype(float)
    else:
        score = np.asarray(objective(choices), dtype=float)
    score = np.where(ok, score, -np.inf)
    best = int(np.argmax(score))  # first hit wins: product order is lexicographic
    if not ok[best]:
        raise InfeasiblePolytopeError("no assignment map passed the feasibility test")
    matrix = np.zeros((num_bs, num_uav))
    for u, c in enumerate(choices[best]):
        if c > 0:
            matrix[c - 1, u] = 1.0
    return matrix, float(score[best])


# ---------------------------------------------------------------------------
# structured convex rows + log-barrier solver
# ---------------------------------------------------------------------------

@dataclass
class LinearRows:
    """Rows coeffs @ v <= bounds."""

    coeffs: np.ndarray
    bounds: np.ndarray


@dataclass
class ExpSumRow:
    """const + affine . v + sum_k coefs_k * exp(expos_k . v) <= 0 with coefs > 0."""

    const: float
    coefs: np.ndarray
    expos: np.ndarray
    affine: np.ndarray = None


@dataclass
class LogRow:
    """const + affine . v - ln(offset + v[x_index]) <= 0."""

    const: float
    affine: np.ndarray
    x_index: int
    offset: float


@dataclass
class SmoothConvexProgram:
    """Linear objective (maximized) over structured smooth convex rows.

    Every row type supplies value/gradient/Hessian in closed form, which
    is what the barrier Newton iteration consumes. Box bounds may be
    infinite on either side.
    """

    dim: int
    objective: np.ndarray
    rows: list
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        if self.lower is None:
            self.lower = np.full(self.dim, -np.inf)
        if self.upper is None:
            self.upper = np.full(self.dim, np.inf)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)


@dataclass
class BarrierOptions:
    gap_tol: float = 1e-6
    t_init: float = 1.0
    mu_factor: float = 10.0
    newton_cap: int = 50
    warm_newton_cap: int = 80
    decrement_tol: float = 1e-9
    armijo: float = 0.25
    backtrack: float = 0.5


@dataclass
class BarrierResult:
    x: np.ndarray
    objective: float
    newton_steps: int
    stages: int
    trace: list = field(default_factory=list)


class _Compiled:
    """Flattened row data for vectorized barrier evaluations."""

    def __init__(self, program):
        n = program.dim
        lin_c, lin_b = [], []
        for i in range(n):
            if np.isfinite(program.lower[i]):
                row = np.zeros(n)
                row[i] = -1.0
                lin_c.append(row)
                lin_b.append(-program.lower[i])
            if np.isfinite(program.upper[i]):
                row = np.zeros(n)
                row[i] = 1.0
                lin_c.append(row)
                lin_b.append(program.upper[i])
        exp_rows, log_rows = [], []
        for row in program.rows:
            if isinstance(row, LinearRows):
                lin_c.extend(np.atleast_2d(row.coeffs))
                lin_b.extend(np.ravel(row.bounds))
            elif isinstance(row, ExpSumRow):
                exp_rows.append(row)
            elif isinstance(row, LogRow):
                log_rows.append(row)
            else:
                raise TypeError(f"unknown row type {type(row)!r}")
        self.n = n
        self.L = np.array(lin_c).reshape(len(lin_b), n)
        self.lb = np.array(lin_b)
        self.e_const = np.array([r.const for r in exp_rows])
        self.e_aff = np.array([r.affine if r.affine is not None else np.zeros(n)
                               for r in exp_rows]).reshape(len(exp_rows), n)
        counts = [len(r.coefs) for r in exp_rows]
        self.e_ptr = np.concatenate([[0], np.cumsum(counts)])[:-1].astype(int)
        if exp_rows:
            self.E = np.concatenate([np.atleast_2d(r.expos) for r in exp_rows])
            self.e_coef = np.concatenate([np.ravel(r.coefs) for r in exp_rows])
            self.e_row = np.repeat(np.arange(len(exp_rows)), counts)
        else:
            self.E = np.zeros((0, n))
            self.e_coef = np.zeros(0)
            self.e_row = np.zeros(0, dtype=int)
        self.g_const = np.array([r.const for r in log_rows])
        self.g_aff = np.array([r.affine for r in log_rows]).reshape(len(log_rows), n)
        self.g_xi = np.array([r.x_index for r in log_rows], dtype=int)
        self.g_off = np.array([r.offset for r in log_rows])
        self.m = len(self.lb) + len(exp_rows) + len(log_rows)

    def values(self, v):
        parts = []
        if len(self.lb):
            parts.append(self.L @ v - self.lb)
        if len(self.e_const):
            with np.errstate(over="ignore"):
                terms = self.e_coef * np.exp(self.E @ v)
            sums = np.add.reduceat(terms, self.e_ptr) if len(terms) else np.zeros(0)
            parts.append(self.e_const + self.e_aff @ v + sums)
        if len(self.g_const):
            # outside the log domain the row is violated, not undefined
            with np.errstate(invalid="ignore", divide="ignore"):
                logs = np.log(self.g_off + v[self.g_xi])
            row = self.g_const + self.g_aff @ v - logs
            parts.append(np.where(np.isnan(row), np.inf, row))
        return np.concatenate(parts) if parts else np.zeros(0)

    def barrier_grad_hess(self, v):
        """Gradient and Hessian of -sum ln(-f_i) at a strictly feasible v."""
        n = self.n
        g = np.zeros(n)
        H = np.zeros((n, n))
        if len(self.lb):
            fl = self.L @ v - self.lb
            u = 1.0 / (-fl)
            g += self.L.T @ u
            H += (self.L.T * u ** 2) @ self.L
        if len(self.e_const):
            terms = self.e_coef * np.exp(self.E @ v)
            sums = np.add.reduceat(terms, self.e_ptr)
            fe = self.e_const + self.e_aff @ v + sums
            u = 1.0 / (-fe)
            grad_rows = self.e_aff + np.add.reduceat(self.E * terms[:, None],
                                                     self.e_ptr)
            g += grad_rows.T @ u
            H += (self.E.T * (terms * u[self.e_row])) @ self.E
            H += (grad_rows.T * u ** 2) @ grad_rows
        if len(self.g_const):
            x = v[self.g_xi]
            fg = self.g_const + self.g_aff @ v - np.log(self.g_off + x)
            u = 1.0 / (-fg)
            grad_rows = self.g_aff.copy()
            inv = 1.0 / (self.g_off + x)
            for r in range(len(self.g_const)):
                grad_rows[r, self.g_xi[r]] -= inv[r]
            g += grad_rows.T @ u
            H += (grad_rows.T * u ** 2) @ grad_rows
            np.add.at(H, (self.g_xi, self.g_xi), u * inv ** 2)
        return g, H


def solve_convex_barrier(program, start=None, options=None):
    """Maximize a linear objective over smooth convex rows by log-barrier.

    Path-following with Newton centering and backtracking line search;
    the barrier parameter grows by a factor of 10 per stage until the
    duality measure m/t drops below the gap tolerance. Without `start`, a
    strictly feasible point is found first by slack minimization. With
    `start`, a single stage at the final barrier parameter is tried first
    (so a warm start at the optimum returns after a couple of Newton
    steps), falling back to the full schedule if that stalls.
    """
    opts = options or BarrierOptions()
    comp = _Compiled(program)
    if comp.m == 0:
        raise ValueError("program has no constraints; objective is unbounded")
    warm = start is not None
    if warm and comp.values(np.asarray(start, dtype=float)).max() >= 0:
        warm = False  # stale warm start; recover a strict point instead
        start = None
    if not warm:
        start = _phase_one(program, comp, opts)
    v = np.asarray(start, dtype=float).copy()
    vals = comp.values(v)
    if vals.max() >= 0:
        raise ValueError("start point is not strictly feasible")
    c = program.objective

    t_final = comp.m / opts.gap_tol
    trace = []
    if warm:
        try:
            v_out, steps = _center(comp, c, v.copy(), t_final,
                                   opts.warm_newton_cap, opts, trace)
            return BarrierResult(v_out, float(c @ v_out), steps, 1, trace)
        except NumericsError:
            trace = []  # warm jump stalled; restart on the staged schedule
    total = 0
    stages = 0
    t_bar = opts.t_init
    while True:
        v, steps = _center(comp, c, v, t_bar, opts.newton_cap, opts, trace)
        total += steps
        stages += 1
        if comp.m / t_bar <= opts.gap_tol:
            break
        t_bar *= opts.mu_factor
    return BarrierResult(v, float(c @ v), total, stages, trace)


def _center(comp, c, v, t_bar, cap, opts, trace):
    def phi(point, vals=None):
        if vals is None:
            vals = comp.values(point)
        if not np.all(vals < 0):
            return np.inf
        return -t_bar * (c @ point) - np.log(-vals).sum()

    steps = 0
    for _ in range(cap):
        g_bar, H_bar = comp.barrier_grad_hess(v)
        g = -t_bar * c + g_bar
        try:
            direction = -_psd_solve(H_bar, g)
        except np.linalg.LinAlgError:
            raise NumericsError("barrier Hessian factorization failed", trace)
        decrement = -g @ direction
        if decrement <= 2 * opts.decrement_tol:
            return v, steps
        base = phi(v)
        alpha = 1.0
        while alpha > 1e-13:
            cand = v + alpha * direction
            if phi(cand) <= base - opts.armijo * alpha * decrement:
                break
            alpha *= opts.backtrack
        else:
            raise NumericsError("barrier line search failed (non-descent)", trace)
        v = v + alpha * direction
        steps += 1
        trace.append((t_bar, steps, float(decrement), alpha))
    raise NumericsError(f"Newton cap {cap} hit at barrier parameter {t_bar}", trace)


def _phase_one(program, comp, opts):
    """Strictly feasible point via slack minimization over (v, s)."""
    n = program.dim
    lower = np.where(np.isfinite(program.lower), program.lower, -1.0)
    upper = np.where(np.isfinite(program.upper), program.upper, 1.0)
    v0 = 0.5 * (lower + upper)
    vals = comp.values(v0)
    s0 = (vals.max() if len(vals) else 0.0) + 1.0

    aug_rows = []
    slack = np.zeros(n + 1)
    slack[n] = -1.0
    for row in program.rows:
        if isinstance(row, LinearRows):
            coeffs = np.atleast_2d(row.coeffs)
            ext = np.hstack([coeffs, -np.ones((coeffs.shape[0], 1))])
            aug_rows.append(LinearRows(ext, np.ravel(row.bounds)))
        elif isinstance(row, ExpSumRow):
            aff = row.affine if row.affine is not None else np.zeros(n)
            aug_rows.append(ExpSumRow(row.const, row.coefs,
                                      np.hstack([np.atleast_2d(row.expos),
                                                 np.zeros((len(row.coefs), 1))]),
                                      np.concatenate([aff, [-1.0]])))
        else:
            aug_rows.append(LogRow(row.const, np.concatenate([row.affine, [-1.0]]),
                                   row.x_index, row.offset))
    aug = SmoothConvexProgram(
        dim=n + 1,
        objective=slack,
        rows=aug_rows,
        lower=np.concatenate([program.lower, [-np.inf]]),
        upper=np.concatenate([program.upper, [s0 + 1.0]]),
    )
    aug_comp = _Compiled(aug)
    v = np.concatenate([v0, [s0]])
    t_bar = opts.t_init
    trace = []
    while True:
        v, _ = _center(aug_comp, slack, v, t_bar, opts.newton_cap, opts, trace)
        if v[n] < -1e-9 or aug_comp.m / t_bar <= opts.gap_tol:
            break
        t_bar *= opts.mu_factor
    if v[n] >= 0:
        raise InfeasibleProgramError("phase-I found no strictly feasible point")
    point = v[:n]
    if comp.values(point).max() >= 0:
        raise InfeasibleProgramError("phase-I point not strictly feasible")
    return point
