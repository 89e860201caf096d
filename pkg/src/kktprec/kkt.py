"""KKT systems for linear source inversion and their preconditioners.

The inverse problem: recover a source q on a rectangle from pointwise
observations of the state u solving the Poisson problem A u = q (Dirichlet
walls via Nitsche), with Tikhonov regularization alpha * ||R q||^2 where
R*R is a shifted Neumann Laplacian. First-order optimality gives one
symmetric indefinite system in (q, u, eta):

    [ alpha*RR   0      -W  ] [ q  ]   [ 0    ]
    [ 0          BtB    A   ] [ u  ] = [ Bt y ]
    [ -W         A      0   ] [ eta]   [ 0    ]

with W the mass matrix, A the stiffness matrix, B pointwise observation.

The block-diagonal augmented-Lagrangian (BDAL) preconditioner is

    P = diag( alpha*RR + rho*Wt,  BtB + rho*At Wt^{-1} A,  (1/rho)*Wt )

where Wt is the mass matrix (exact kind) or its row-sum lumping (lumped
kinds) and rho defaults to sqrt(alpha). MINRES with P needs only
applications of P^{-1}, built here from cached factorizations or inner CG
depending on the kind.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dense import CholeskySolver, dense_solve_symmetric_indefinite
from .fem import (
    DEFAULT_NITSCHE_GAMMA,
    DEFAULT_REG_SHIFT,
    assemble_mass,
    assemble_observation,
    assemble_regularization,
    assemble_stiffness_nitsche,
    lump_mass,
)
from .krylov import LinearOperator, inner_solve_to_tol, pcg
from .mesh import ObservationSet, TriMesh
from .sparse import (
    DimensionMismatchError,
    SparseMatrix,
    sparse_add_scaled,
    sparse_transpose,
    sparse_triple_diag,
    spmv,
)

BDAL_EXACT = "bdal-exact"
BDAL_LUMPED_EXACT = "bdal-lumped-exact"
BDAL_LUMPED_INEXACT = "bdal-lumped-inexact"
REDUCED_REGULARIZATION = "reduced-regularization"

BDAL_KINDS = (BDAL_EXACT, BDAL_LUMPED_EXACT, BDAL_LUMPED_INEXACT)
PRECONDITIONER_KINDS = BDAL_KINDS + (REDUCED_REGULARIZATION,)

EXACT_SOLVE_TOL = 1e-12


class UnknownPreconditionerError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemOperators:
    """Assembled discrete operators of one source-inversion instance."""

    mesh: TriMesh
    mass: SparseMatrix
    mass_lumped: np.ndarray
    forward: SparseMatrix  # Nitsche stiffness, SPD
    reg: SparseMatrix  # R*R = Neumann stiffness + t * mass, SPD
    observation: SparseMatrix
    obs: ObservationSet
    t: float
    gamma0: float

    @property
    def n(self) -> int:
        return self.mesh.n_vertices


def assemble_problem(
    mesh: TriMesh,
    obs: ObservationSet,
    t: float = DEFAULT_REG_SHIFT,
    gamma0: float = DEFAULT_NITSCHE_GAMMA,
) -> ProblemOperators:
    mass = assemble_mass(mesh)
    return ProblemOperators(
        mesh=mesh,
        mass=mass,
        mass_lumped=lump_mass(mass),
        forward=assemble_stiffness_nitsche(mesh, gamma0=gamma0),
        reg=assemble_regularization(mesh, t=t),
        observation=assemble_observation(mesh, obs),
        obs=obs,
        t=t,
        gamma0=gamma0,
    )


@dataclass(frozen=True)
class KktSystem:
    """One assembled KKT system; blocks are stored unscaled, alpha separately."""

    reg: SparseMatrix  # R*R (the (1,1) block is alpha * reg)
    btb: SparseMatrix  # Bt B
    forward: SparseMatrix  # A
    mass: SparseMatrix  # W
    alpha: float
    rhs: np.ndarray
    ops: ProblemOperators

    @property
    def n(self) -> int:
        return self.mass.nrows

    @property
    def dim(self) -> int:
        return 3 * self.n


def build_kkt(ops: ProblemOperators, alpha: float, y: np.ndarray) -> KktSystem:
    """Assemble the optimality system for data y at regularization alpha."""
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (ops.observation.nrows,):
        raise DimensionMismatchError(
            f"data length {y.shape} does not match {ops.observation.nrows} observations"
        )
    n = ops.n
    bt = sparse_transpose(ops.observation)
    btb = sparse_triple_diag(ops.observation, np.ones(ops.observation.nrows))
    rhs = np.zeros(3 * n)
    rhs[n : 2 * n] = spmv(bt, y)
    return KktSystem(
        reg=ops.reg,
        btb=btb,
        forward=ops.forward,
        mass=ops.mass,
        alpha=alpha,
        rhs=rhs,
        ops=ops,
    )


def apply_kkt(sys: KktSystem, z: np.ndarray) -> np.ndarray:
    """Blockwise product of the KKT operator with (q, u, eta)."""
    n = sys.n
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (3 * n,):
        raise DimensionMismatchError(f"KKT operator expects length {3 * n}")
    q, u, eta = z[:n], z[n : 2 * n], z[2 * n :]
    out = np.empty(3 * n)
    out[:n] = sys.alpha * spmv(sys.reg, q) - spmv(sys.mass, eta)
    out[n : 2 * n] = spmv(sys.btb, u) + spmv(sys.forward, eta)
    out[2 * n :] = -spmv(sys.mass, q) + spmv(sys.forward, u)
    return out


def kkt_operator(sys: KktSystem) -> LinearOperator:
    return LinearOperator(sys.dim, sys.dim, lambda z: apply_kkt(sys, z))


def kkt_dense(sys: KktSystem) -> np.ndarray:
    """Materialize the 3n x 3n KKT matrix (desk scale)."""
    n = sys.n
    k = np.zeros((3 * n, 3 * n))
    reg = sys.reg.to_dense()
    btb = sys.btb.to_dense()
    a = sys.forward.to_dense()
    w = sys.mass.to_dense()
    k[:n, :n] = sys.alpha * reg
    k[:n, 2 * n :] = -w
    k[n : 2 * n, n : 2 * n] = btb
    k[n : 2 * n, 2 * n :] = a
    k[2 * n :, :n] = -w
    k[2 * n :, n : 2 * n] = a
    return k


def reference_solution(sys: KktSystem, tol: float = 1e-10) -> np.ndarray:
    """Direct dense solve of the full KKT system, refined to
    ||K z - rhs|| <= tol * ||rhs||. Intended for desk-scale references."""
    if float(np.linalg.norm(sys.rhs)) == 0.0:
        return np.zeros(sys.dim)
    return dense_solve_symmetric_indefinite(kkt_dense(sys), sys.rhs, tol=tol)


class _SparseCholesky:
    """Dense Cholesky of a sparse SPD block, refined against the sparse matrix."""

    def __init__(self, m: SparseMatrix, tol: float):
        self._m = m
        self._tol = tol
        self._chol = CholeskySolver(m.to_dense())

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self._chol.solve(r, tol=self._tol)


@dataclass
class Preconditioner:
    """One preconditioner instance; apply the inverse via bdal_apply_inverse
    or as_operator(). kind is one of PRECONDITIONER_KINDS."""

    kind: str
    rho: float
    inner_tol: float
    dim: int
    _apply_inverse: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def as_operator(self) -> LinearOperator:
        return LinearOperator(self.dim, self.dim, self._apply_inverse)


def _bdal_blocks(sys: KktSystem, rho: float, lumped: bool):
    """Assemble block 1 and block 2 (explicit form) for the given mass choice."""
    if lumped:
        w_diag = sys.ops.mass_lumped
        mass_term = SparseMatrix.diagonal(w_diag)
    else:
        w_diag = None
        mass_term = sys.mass
    block1 = sparse_add_scaled(sys.reg, mass_term, sys.alpha, rho)
    lumped_inv = 1.0 / (w_diag if w_diag is not None else sys.ops.mass_lumped)
    block2_lumped = sparse_add_scaled(
        sys.btb, sparse_triple_diag(sys.forward, lumped_inv), 1.0, rho
    )
    return block1, block2_lumped, w_diag


def build_preconditioner(
    sys: KktSystem,
    kind: str,
    rho: float | None = None,
    inner_tol: float = 1e-2,
) -> Preconditioner:
    """Build a BDAL preconditioner for the KKT system.

    rho defaults to sqrt(alpha). Exact kinds solve their blocks to 1e-12
    (cached factorizations; the non-lumped kind inverts its implicit second
    block by nested CG with inner mass solves). The inexact kind runs
    Jacobi-CG to inner_tol on both sparse blocks.
    """
    if kind not in BDAL_KINDS:
        raise UnknownPreconditionerError(
            f"kind {kind!r} is not one of {BDAL_KINDS} (reduced regularization "
            "preconditioning lives on the reduced Hessian)"
        )
    if rho is None:
        rho = float(np.sqrt(sys.alpha))
    if rho <= 0.0:
        raise ValueError("rho must be positive")
    if not (0.0 < inner_tol < 1.0):
        raise ValueError("inner_tol must lie in (0, 1)")
    n = sys.n

    if kind == BDAL_EXACT:
        block1, block2_lumped, _ = _bdal_blocks(sys, rho, lumped=False)
        solve1 = _SparseCholesky(block1, EXACT_SOLVE_TOL)
        mass_solver = _SparseCholesky(sys.mass, EXACT_SOLVE_TOL)
        # Implicit block 2: each application performs one mass solve. The
        # explicit lumped block is spectrally close, so its factorization
        # preconditions the nested CG.
        lumped_guide = _SparseCholesky(block2_lumped, EXACT_SOLVE_TOL)

        def apply_block2(z: np.ndarray) -> np.ndarray:
            az = spmv(sys.forward, z)
            return spmv(sys.btb, z) + rho * spmv(sys.forward, mass_solver(az))

        block2_op = LinearOperator(n, n, apply_block2)
        guide_op = LinearOperator(n, n, lumped_guide)

        def solve2(r: np.ndarray) -> np.ndarray:
            report = pcg(block2_op, guide_op, r, tol=EXACT_SOLVE_TOL, maxit=50 * n)
            return report.solution

        def solve3(r: np.ndarray) -> np.ndarray:
            return rho * mass_solver(r)

    else:
        block1, block2, w_diag = _bdal_blocks(sys, rho, lumped=True)
        if kind == BDAL_LUMPED_EXACT:
            solve1 = _SparseCholesky(block1, EXACT_SOLVE_TOL)
            solve2 = _SparseCholesky(block2, EXACT_SOLVE_TOL)
        else:
            solve1 = lambda r: inner_solve_to_tol(block1, r, inner_tol)
            solve2 = lambda r: inner_solve_to_tol(block2, r, inner_tol)
        inv_w = 1.0 / w_diag

        def solve3(r: np.ndarray) -> np.ndarray:
            return rho * (inv_w * r)

    def apply_inverse(r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        if r.shape != (3 * n,):
            raise DimensionMismatchError(f"preconditioner expects length {3 * n}")
        out = np.empty(3 * n)
        out[:n] = solve1(r[:n])
        out[n : 2 * n] = solve2(r[n : 2 * n])
        out[2 * n :] = solve3(r[2 * n :])
        return out

    return Preconditioner(
        kind=kind, rho=rho, inner_tol=inner_tol, dim=3 * n, _apply_inverse=apply_inverse
    )


def bdal_apply_inverse(p: Preconditioner, r: np.ndarray) -> np.ndarray:
    """x = P^{-1} r, blockwise."""
    return p._apply_inverse(r)


@dataclass
class ReducedHessianOperator:
    """Matrix-free reduced Hessian H = J^T J + alpha * R*R with J = B A^{-1} W.

    Applying H does a forward solve A u = W q, observation, an adjoint solve
    (A is symmetric, so the same matrix), and a mass-weighted pullback. PDE
    solves run to forward_solve_tol.
    """

    forward: SparseMatrix
    mass: SparseMatrix
    btb: SparseMatrix
    reg: SparseMatrix
    alpha: float
    forward_solve_tol: float = EXACT_SOLVE_TOL
    _reg_solver: CholeskySolver | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.mass.nrows

    def apply(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (self.n,):
            raise DimensionMismatchError(f"reduced Hessian expects length {self.n}")
        u = inner_solve_to_tol(self.forward, spmv(self.mass, q), self.forward_solve_tol)
        w = inner_solve_to_tol(self.forward, spmv(self.btb, u), self.forward_solve_tol)
        return spmv(self.mass, w) + self.alpha * spmv(self.reg, q)

    def as_operator(self) -> LinearOperator:
        return LinearOperator(self.n, self.n, self.apply)

    def rhs(self, y: np.ndarray, observation: SparseMatrix) -> np.ndarray:
        """Reduced right-hand side J^T y = W A^{-1} B^T y."""
        bty = spmv(sparse_transpose(observation), np.asarray(y, dtype=np.float64))
        return spmv(self.mass, inner_solve_to_tol(self.forward, bty, self.forward_solve_tol))


def reduced_hessian(sys: KktSystem, forward_solve_tol: float = EXACT_SOLVE_TOL) -> ReducedHessianOperator:
    return ReducedHessianOperator(
        forward=sys.forward,
        mass=sys.mass,
        btb=sys.btb,
        reg=sys.reg,
        alpha=sys.alpha,
        forward_solve_tol=forward_solve_tol,
    )


def reduced_hessian_apply(h: ReducedHessianOperator, q: np.ndarray) -> np.ndarray:
    return h.apply(q)


def regularization_prec_apply(h: ReducedHessianOperator, r: np.ndarray) -> np.ndarray:
    """Solve alpha * (R*R) x = r to 1e-12; the baseline preconditioner."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (h.n,):
        raise DimensionMismatchError(f"regularization preconditioner expects length {h.n}")
    if h._reg_solver is None:
        h._reg_solver = CholeskySolver(h.reg.to_dense())
    return h._reg_solver.solve(r / h.alpha, tol=EXACT_SOLVE_TOL)


def regularization_prec_operator(h: ReducedHessianOperator) -> LinearOperator:
    return LinearOperator(h.n, h.n, lambda r: regularization_prec_apply(h, r))


def synthesize_data(ops: ProblemOperators, q_true: np.ndarray, tol: float = EXACT_SOLVE_TOL) -> np.ndarray:
    """Noise-free observations of the state generated by q_true."""
    u_true = inner_solve_to_tol(ops.forward, spmv(ops.mass, np.asarray(q_true, dtype=np.float64)), tol)
    return spmv(ops.observation, u_true)
