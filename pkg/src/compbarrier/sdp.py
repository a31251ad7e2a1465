"""Standard-form semidefinite feasibility/optimization solver.

A self-contained primal-dual path-following interior-point method over the
homogeneous self-dual embedding, with Nesterov-Todd scaling and dense linear
algebra.  Problems here are small (blocks up to ~60x60, a few thousand
equality constraints), so there is no sparse Cholesky machinery; the Schur
complement is formed densely and factorized with LAPACK.

Primal form:

    min  <C, X> + c_f' u
    s.t. <A_i, X> + f_i' u = b_i,   i = 1..m
         X  block-diagonal PSD,  u free

Free scalar columns are optional; they host coefficient unknowns of the SOS
layer without the usual difference-of-positives split.

Infeasibility is certified by an improving dual ray y with
sum_i y_i A_i >= 0 (PSD within eig_tol), F'y = 0 and b'y < 0.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, eigh, solve_triangular

__all__ = [
    "SdpConstraint",
    "SdpProblem",
    "SdpSolution",
    "SdpTolerances",
    "solve",
    "dump_problem",
]

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical-failure"

_SYM_CHECK_TOL = 1e-12


@dataclass
class SdpTolerances:
    residual_tol: float = 1e-8
    eig_tol: float = 1e-7
    gap_tol: float = 1e-8
    max_iters: int = 200

    def validate(self):
        if min(self.residual_tol, self.eig_tol, self.gap_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


class SdpConstraint:
    """One affine equality: sum_b <A_b, X_b> + f'u = rhs.

    Entries are triplets (row, col, value) per block; a triplet with
    row != col denotes the symmetric pair of matrix entries, both equal
    to `value`.
    """

    __slots__ = ("entries", "free", "rhs", "label")

    def __init__(self, entries=None, free=None, rhs=0.0, label=""):
        self.entries = {}
        for blk, triplets in (entries or {}).items():
            canon = {}
            for i, j, v in triplets:
                i, j = int(i), int(j)
                key = (min(i, j), max(i, j))
                canon[key] = canon.get(key, 0.0) + float(v)
            self.entries[int(blk)] = [(i, j, v) for (i, j), v in canon.items() if v != 0.0]
        self.free = {int(k): float(v) for k, v in (free or {}).items() if v != 0.0}
        self.rhs = float(rhs)
        self.label = label

    @staticmethod
    def from_dense(matrices, rhs, label=""):
        """Build from dense symmetric per-block matrices (may include None)."""
        entries = {}
        for blk, mat in enumerate(matrices):
            if mat is None:
                continue
            mat = np.asarray(mat, dtype=float)
            if mat.shape[0] != mat.shape[1]:
                raise ValueError(f"block {blk}: coefficient matrix is not square")
            if np.max(np.abs(mat - mat.T), initial=0.0) > _SYM_CHECK_TOL * max(
                1.0, np.max(np.abs(mat), initial=0.0)
            ):
                raise ValueError(f"block {blk}: coefficient matrix is not symmetric")
            triplets = []
            d = mat.shape[0]
            for i in range(d):
                for j in range(i, d):
                    if mat[i, j] != 0.0:
                        triplets.append((i, j, mat[i, j]))
            if triplets:
                entries[blk] = triplets
        return SdpConstraint(entries, rhs=rhs, label=label)

    def dense(self, block_dims):
        out = []
        for blk, d in enumerate(block_dims):
            mat = np.zeros((d, d))
            for i, j, v in self.entries.get(blk, []):
                mat[i, j] = v
                mat[j, i] = v
            out.append(mat)
        return out


class SdpProblem:
    """Block-diagonal SDP data: block dims, equality constraints, objective."""

    def __init__(self, block_dims, constraints, objective=None, n_free=0,
                 free_objective=None):
        self.block_dims = [int(d) for d in block_dims]
        if any(d < 1 for d in self.block_dims):
            raise ValueError("block dimensions must be >= 1")
        self.constraints = list(constraints)
        self.n_free = int(n_free)
        self.objective = objective  # SdpConstraint-like entries or None
        self.free_objective = (
            np.zeros(self.n_free) if free_objective is None else np.asarray(free_objective, float)
        )
        for k, con in enumerate(self.constraints):
            for blk in con.entries:
                if blk < 0 or blk >= len(self.block_dims):
                    raise ValueError(f"constraint {k}: unknown block {blk}")
                d = self.block_dims[blk]
                for i, j, _ in con.entries[blk]:
                    if not (0 <= i < d and 0 <= j < d):
                        raise ValueError(f"constraint {k}: index out of block range")
            for idx in con.free:
                if not (0 <= idx < self.n_free):
                    raise ValueError(f"constraint {k}: free index {idx} out of range")

    @property
    def n_constraints(self):
        return len(self.constraints)

    def scaled_by(self, factor):
        """A copy with every constraint (matrices and rhs) multiplied by factor."""
        cons = []
        for con in self.constraints:
            cons.append(
                SdpConstraint(
                    {b: [(i, j, v * factor) for i, j, v in t] for b, t in con.entries.items()},
                    free={k: v * factor for k, v in con.free.items()},
                    rhs=con.rhs * factor,
                    label=con.label,
                )
            )
        return SdpProblem(self.block_dims, cons, objective=self.objective,
                          n_free=self.n_free, free_objective=self.free_objective)


@dataclass
class SdpSolution:
    status: str
    blocks: list = field(default_factory=list)
    y: np.ndarray | None = None
    free: np.ndarray | None = None
    primal_residual: float = math.inf
    dual_residual: float = math.inf
    iterations: int = 0
    dual_ray: np.ndarray | None = None
    message: str = ""

    @property
    def min_eigenvalue(self) -> float:
        if not self.blocks:
            return 0.0
        return min(float(np.linalg.eigvalsh(b).min()) for b in self.blocks)


def dump_problem(problem: SdpProblem, fh=None) -> str:
    """Write the problem in a simple line-oriented text format.

    Layout: a `blocks` line, a `nfree` line, then per constraint one
    `con <k> <label>` line followed by `e <block> <row> <col> <value>`
    entry lines, `f <index> <value>` free-column lines and a final
    `rhs <value>` line.
    """
    out = io.StringIO()
    out.write("blocks " + " ".join(str(d) for d in problem.block_dims) + "\n")
    out.write(f"nfree {problem.n_free}\n")
    for k, con in enumerate(problem.constraints):
        out.write(f"con {k} {con.label}\n")
        for blk in sorted(con.entries):
            for i, j, v in sorted(con.entries[blk]):
                out.write(f"e {blk} {i} {j} {v!r}\n")
        for idx in sorted(con.free):
            out.write(f"f {idx} {con.free[idx]!r}\n")
        out.write(f"rhs {con.rhs!r}\n")
    text = out.getvalue()
    if fh is not None:
        fh.write(text)
    return text


# -- svec helpers --------------------------------------------------------------


class _BlockIndex:
    """Precomputed upper-triangle indexing for one block dimension."""

    def __init__(self, d):
        self.d = d
        self.iu, self.ju = np.triu_indices(d)
        self.scale = np.where(self.iu == self.ju, 1.0, math.sqrt(2.0))
        self.n = d * (d + 1) // 2

    def svec(self, mat):
        return mat[self.iu, self.ju] * self.scale

    def svec_batch(self, mats):
        return mats[:, self.iu, self.ju] * self.scale[None, :]

    def smat(self, vec):
        out = np.zeros((self.d, self.d))
        vals = vec / self.scale
        out[self.iu, self.ju] = vals
        out = out + out.T
        out[np.diag_indices(self.d)] *= 0.5
        return out


class _CompiledBlock:
    """Constraint data restricted to one PSD block."""

    def __init__(self, dim, rows, svec_rows, dense_mats):
        self.dim = dim
        self.idx = _BlockIndex(dim)
        self.rows = rows            # constraint indices touching this block
        self.A = svec_rows          # (len(rows), n_svec)
        self.mats = dense_mats      # (len(rows), dim, dim)


def _compile(problem: SdpProblem):
    blocks = []
    m = problem.n_constraints
    for blk, d in enumerate(problem.block_dims):
        rows = []
        for k, con in enumerate(problem.constraints):
            if con.entries.get(blk):
                rows.append(k)
        idx = _BlockIndex(d)
        A = np.zeros((len(rows), idx.n))
        mats = np.zeros((len(rows), d, d))
        pos_of = {(int(i), int(j)): p for p, (i, j) in enumerate(zip(idx.iu, idx.ju))}
        for r, k in enumerate(rows):
            for i, j, v in problem.constraints[k].entries[blk]:
                p = pos_of[(i, j)]
                A[r, p] = v * (1.0 if i == j else math.sqrt(2.0))
                mats[r, i, j] = v
                mats[r, j, i] = v
        blocks.append(_CompiledBlock(d, np.array(rows, dtype=int), A, mats))
    F = np.zeros((m, problem.n_free))
    for k, con in enumerate(problem.constraints):
        for idx_, v in con.free.items():
            F[k, idx_] = v
    b = np.array([con.rhs for con in problem.constraints])
    # objective (svec per block + free part)
    c_blocks = []
    if problem.objective is not None:
        dense = problem.objective.dense(problem.block_dims)
        for blk, d in enumerate(problem.block_dims):
            c_blocks.append(_BlockIndex(d).svec(dense[blk]))
    else:
        for d in problem.block_dims:
            c_blocks.append(np.zeros(d * (d + 1) // 2))
    return blocks, F, b, c_blocks


def _max_step(mat, dmat, chol_l):
    """sup {a : mat + a*dmat PSD}, given mat = L L'."""
    z = solve_triangular(chol_l, dmat, lower=True)
    z = solve_triangular(chol_l, z.T, lower=True)
    lam = eigh(0.5 * (z + z.T), eigvals_only=True)[0]
    if lam >= 0:
        return math.inf
    return -1.0 / lam


def solve(problem: SdpProblem, tol: SdpTolerances | None = None) -> SdpSolution:
    """Run the interior-point method; deterministic for identical inputs."""
    tol = tol or SdpTolerances()
    tol.validate()

    m = problem.n_constraints
    if m == 0 and problem.n_free == 0:
        return SdpSolution(FEASIBLE, [np.eye(d) for d in problem.block_dims],
                           y=np.zeros(0), free=np.zeros(0),
                           primal_residual=0.0, dual_residual=0.0)

    # row equilibration: scale each constraint to unit max coefficient
    row_scale = np.ones(m)
    for k, con in enumerate(problem.constraints):
        mx = max((abs(v) for t in con.entries.values() for _, _, v in t), default=0.0)
        mx = max(mx, max((abs(v) for v in con.free.values()), default=0.0))
        mx = max(mx, abs(con.rhs))
        if mx > 0:
            row_scale[k] = 1.0 / mx
    scaled = SdpProblem(
        problem.block_dims,
        [
            SdpConstraint(
                {b: [(i, j, v * row_scale[k]) for i, j, v in t] for b, t in con.entries.items()},
                free={f: v * row_scale[k] for f, v in con.free.items()},
                rhs=con.rhs * row_scale[k],
                label=con.label,
            )
            for k, con in enumerate(problem.constraints)
        ],
        objective=problem.objective,
        n_free=problem.n_free,
        free_objective=problem.free_objective,
    )

    blocks, F, b, c_blocks = _compile(scaled)
    nf = problem.n_free
    n_dim = sum(problem.block_dims)
    has_obj = problem.objective is not None or np.any(problem.free_objective)
    cf = scaled.free_objective.astype(float)
    c_is_zero = all(not np.any(c) for c in c_blocks) and not np.any(cf)

    X = [np.eye(blk.dim) for blk in blocks]
    S = [np.eye(blk.dim) for blk in blocks]
    y = np.zeros(m)
    u = np.zeros(nf)
    tau, kappa = 1.0, 1.0

    cnorm = 1.0 + max(
        (float(np.max(np.abs(c), initial=0.0)) for c in c_blocks), default=0.0
    )

    def apply_A(Xmats):
        out = np.zeros(m)
        for blk, Xb in zip(blocks, Xmats):
            if len(blk.rows):
                out[blk.rows] += blk.A @ blk.idx.svec(Xb)
        return out

    def apply_AT(yvec):
        return [blk.idx.smat(blk.A.T @ yvec[blk.rows]) if len(blk.rows)
                else np.zeros((blk.dim, blk.dim)) for blk in blocks]

    def inner_c(Xmats):
        return sum(float(c_blocks[i] @ blocks[i].idx.svec(Xmats[i])) for i in range(len(blocks)))

    def extract_feasible(it):
        Xs = [0.5 * (Xb + Xb.T) / tau for Xb in X]
        ys = y / tau * row_scale  # undo row scaling for the reported dual
        us = u / tau
        # primal residual per row, relative to that row's data magnitude
        # (row equilibration makes this the violation in scaled units)
        pres = 0.0
        for k, con in enumerate(problem.constraints):
            val = -con.rhs
            for blk, t in con.entries.items():
                Xb = Xs[blk]
                for i, j, v in t:
                    val += v * Xb[i, j] * (1.0 if i == j else 2.0)
            for fidx, v in con.free.items():
                val += v * us[fidx]
            pres = max(pres, abs(val) * row_scale[k])
        dres = 0.0
        ATy = apply_AT(y / tau)
        for i, blk in enumerate(blocks):
            Cb = blk.idx.smat(c_blocks[i])
            dres = max(dres, float(np.max(np.abs(Cb - ATy[i] - S[i] / tau), initial=0.0)))
        dres /= cnorm
        return SdpSolution(FEASIBLE, Xs, y=ys, free=us,
                           primal_residual=pres, dual_residual=dres, iterations=it)

    def try_certify_infeasible(it):
        bty = float(b @ y)
        if bty <= 0:
            return None
        yhat = y / bty
        scale_ref = 1.0 + max(float(np.max(np.abs(blk.A.T @ yhat[blk.rows]), initial=0.0))
                              if len(blk.rows) else 0.0 for blk in blocks)
        if nf and float(np.max(np.abs(F.T @ yhat), initial=0.0)) > tol.eig_tol * scale_ref:
            return None
        for blk in blocks:
            if not len(blk.rows):
                continue
            Sray = -blk.idx.smat(blk.A.T @ yhat[blk.rows])
            lam_min = float(eigh(Sray, eigvals_only=True)[0])
            if lam_min < -tol.eig_tol * scale_ref:
                return None
        # report in terms of the original data, with the documented sign
        # convention: sum_i ray_i A_i >= 0 and b' ray < 0
        ray = -(yhat * row_scale)
        ray = ray / max(1.0, float(np.max(np.abs(ray))))
        return SdpSolution(INFEASIBLE, iterations=it, dual_ray=ray,
                           message="dual improving ray found")

    mu = (sum(float(np.trace(Xb @ Sb)) for Xb, Sb in zip(X, S)) + tau * kappa) / (n_dim + 1)
    mu0 = mu
    consecutive_tiny = 0

    for it in range(tol.max_iters):
        # residuals of the homogeneous model
        p_res = apply_A(X) + (F @ u if nf else 0.0) - b * tau
        ATy_mats = apply_AT(y)
        d_mats = [blocks[i].idx.smat(c_blocks[i]) * tau - ATy_mats[i] - S[i]
                  for i in range(len(blocks))]
        df_res = (cf * tau - F.T @ y) if nf else np.zeros(0)
        gap_res = float(b @ y) - inner_c(X) - float(cf @ u) - kappa

        rel_p = float(np.max(np.abs(p_res), initial=0.0)) / tau
        rel_d = max(
            (float(np.max(np.abs(dm), initial=0.0)) for dm in d_mats), default=0.0
        ) / (tau * cnorm)
        if nf:
            rel_d = max(rel_d, float(np.max(np.abs(df_res), initial=0.0)) / (tau * cnorm))
        pobj = inner_c(X) / tau + float(cf @ u) / tau
        dobj = float(b @ y) / tau
        rel_gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))

        converged = rel_p <= tol.residual_tol and rel_d <= tol.residual_tol
        if has_obj:
            converged = converged and rel_gap <= tol.gap_tol
        if converged:
            return extract_feasible(it)

        if kappa > 10.0 * tau or mu < 1e-14 * mu0:
            cert = try_certify_infeasible(it)
            if cert is not None:
                return cert
            if c_is_zero and tau < 1e-12:
                return SdpSolution(NUMERICAL_FAILURE, iterations=it,
                                   message="homogeneous model collapsed without a verifiable ray")

        # -- factorizations ---------------------------------------------------
        try:
            Lx = [cholesky(Xb, lower=True) for Xb in X]
            Ls = [cholesky(Sb, lower=True) for Sb in S]
        except np.linalg.LinAlgError:
            return SdpSolution(NUMERICAL_FAILURE, iterations=it,
                               message="iterate lost positive definiteness")

        W, Winv, Sinv = [], [], []
        for i, blk in enumerate(blocks):
            T = Ls[i].T @ X[i] @ Ls[i]
            w_eig, V = eigh(0.5 * (T + T.T))
            w_eig = np.maximum(w_eig, 1e-300)
            Thalf = (V * np.sqrt(w_eig)) @ V.T
            Thalf_inv = (V / np.sqrt(w_eig)) @ V.T
            Linv = solve_triangular(Ls[i], np.eye(blk.dim), lower=True)
            W.append(Linv.T @ Thalf @ Linv)
            Winv.append(Ls[i] @ Thalf_inv @ Ls[i].T)
            Sinv.append(Linv.T @ Linv)

        # Schur complement  M = A (W (.) W) A'
        M = np.zeros((m, m))
        for i, blk in enumerate(blocks):
            if not len(blk.rows):
                continue
            T = np.matmul(np.matmul(W[i][None, :, :], blk.mats), W[i][None, :, :])
            Q = blk.idx.svec_batch(T)
            M[np.ix_(blk.rows, blk.rows)] += Q @ blk.A.T
        M = 0.5 * (M + M.T)

        Lm = None
        jitter = 0.0
        base = max(float(np.trace(M)) / max(m, 1), 1.0)
        for attempt in range(4):
            try:
                Lm = cho_factor(M + jitter * np.eye(m), lower=True)
                break
            except np.linalg.LinAlgError:
                jitter = base * (1e-12 if jitter == 0.0 else 0.0) + jitter * 100.0
        if Lm is None:
            return SdpSolution(NUMERICAL_FAILURE, iterations=it,
                               message="Schur complement factorization failed")

        if nf:
            Z = cho_solve(Lm, F)
            Su = F.T @ Z
            try:
                Lu = cho_factor(0.5 * (Su + Su.T), lower=True)
            except np.linalg.LinAlgError:
                return SdpSolution(NUMERICAL_FAILURE, iterations=it,
                                   message="free-variable block is rank deficient")

        def kkt_solve(r_y, r_u):
            """Solve [[M, F], [F', 0]] (dy, du) = (r_y, r_u)."""
            t = cho_solve(Lm, r_y)
            if nf:
                du = cho_solve(Lu, F.T @ t - r_u)
                dy = t - Z @ du
            else:
                du = np.zeros(0)
                dy = t
            return dy, du

        def ginv_apply(mats):
            return [W[i] @ mats[i] @ W[i] for i in range(len(blocks))]

        def newton(sigma_mu, tk_target, extra_tk=0.0):
            """Direction for complementarity targets sigma_mu*I and tk_target."""
            R = [sigma_mu * Sinv[i] - X[i] for i in range(len(blocks))]
            r_tk = tk_target - tau * kappa + extra_tk

            GinvD = ginv_apply(d_mats)      # G^{-1} d
            A_r = apply_A(R)
            A_GinvD = apply_A(GinvD)
            h0 = -p_res - A_r + A_GinvD
            h1 = apply_A(ginv_apply([blocks[i].idx.smat(c_blocks[i]) for i in range(len(blocks))])) + b

            dy0, du0 = kkt_solve(h0, df_res)
            dy1, du1 = kkt_solve(h1, cf if nf else np.zeros(0))

            ATdy0 = apply_AT(dy0)
            ATdy1 = apply_AT(dy1)
            Cmats = [blocks[i].idx.smat(c_blocks[i]) for i in range(len(blocks))]
            w0 = [W[i] @ (ATdy0[i] - d_mats[i]) @ W[i] + R[i] for i in range(len(blocks))]
            w1 = [W[i] @ (ATdy1[i] - Cmats[i]) @ W[i] for i in range(len(blocks))]

            num = -gap_res - float(b @ dy0) + inner_c(w0) + float(cf @ du0) + r_tk / tau
            den = float(b @ dy1) - inner_c(w1) - float(cf @ du1) + kappa / tau
            dtau = num / den if den != 0.0 else 0.0

            dy = dy0 + dtau * dy1
            du = du0 + dtau * du1
            dX = [w0[i] + dtau * w1[i] for i in range(len(blocks))]
            dS = [Winv[i] @ (R[i] - dX[i]) @ Winv[i] for i in range(len(blocks))]
            dX = [0.5 * (Dx + Dx.T) for Dx in dX]
            dS = [0.5 * (Ds + Ds.T) for Ds in dS]
            dkappa = (r_tk - kappa * dtau) / tau
            return dX, dy, du, dS, dtau, dkappa

        def max_alpha(dX, dS, dtau, dkappa):
            a = math.inf
            for i in range(len(blocks)):
                a = min(a, _max_step(X[i], dX[i], Lx[i]))
                a = min(a, _max_step(S[i], dS[i], Ls[i]))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        # predictor
        dXa, dya, dua, dSa, dtaua, dkappaa = newton(0.0, 0.0)
        alpha_a = min(1.0, 0.995 * max_alpha(dXa, dSa, dtaua, dkappaa))
        tr = sum(
            float(np.trace((X[i] + alpha_a * dXa[i]) @ (S[i] + alpha_a * dSa[i])))
            for i in range(len(blocks))
        )
        mu_aff = (tr + (tau + alpha_a * dtaua) * (kappa + alpha_a * dkappaa)) / (n_dim + 1)
        sigma = min(0.999, max(1e-10, (max(mu_aff, 0.0) / mu) ** 3))

        # corrector (second-order term kept on the scalar pair only)
        dX, dy, du, dS, dtau, dkappa = newton(sigma * mu, sigma * mu,
                                              extra_tk=-dtaua * dkappaa)
        alpha = min(1.0, 0.98 * max_alpha(dX, dS, dtau, dkappa))
        if not math.isfinite(alpha) or alpha <= 1e-10:
            consecutive_tiny += 1
            if consecutive_tiny >= 3:
                return SdpSolution(NUMERICAL_FAILURE, iterations=it,
                                   message="step size collapsed")
        else:
            consecutive_tiny = 0

        X = [X[i] + alpha * dX[i] for i in range(len(blocks))]
        S = [S[i] + alpha * dS[i] for i in range(len(blocks))]
        y = y + alpha * dy
        u = u + alpha * du if nf else u
        tau += alpha * dtau
        kappa += alpha * dkappa
        mu = (sum(float(np.trace(Xb @ Sb)) for Xb, Sb in zip(X, S)) + tau * kappa) / (n_dim + 1)

    return SdpSolution(NUMERICAL_FAILURE, iterations=tol.max_iters,
                       message="iteration cap reached without convergence")
