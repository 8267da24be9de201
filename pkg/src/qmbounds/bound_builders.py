"""Builders for the estimation-bound SDPs and their closed-form companions.

The main entry points translate a StatisticalModel into standard-form
problems for sdp_core: a block-embedded program whose optimum is the
attainable-MSE bound over separable measurements, and a factorized
program for the asymptotic collective bound.  Recovery helpers pull the
optimal estimator operators back out of solved problems.

Rank deficiency is the load-bearing design concern here.  When the state
has a kernel, the naive block program has cost-free recession directions
(the kernel diagonal of the error operator), its infimum is approached
but never attained, and an interior-point method limps along the ray.
The default path therefore compresses the error-operator rows onto the
support of the state, which removes every free direction while leaving
the infimum unchanged; the uncompressed path (available via a flag, and
the literal printed construction) gets a tiny objective penalty on the
recession directions instead so that it remains solvable.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .linalg import derealify, herm_eig, hermitize, psd_sqrt, realify, trace_abs
from .model import StatisticalModel, sld
from .sdp_core import SDPProblem, SDPSolution, make_problem, solve, write_sdpa

RANK_TOL = 1e-10
DEFAULT_JUNK_PENALTY = 1e-9
DEFAULT_TOL = 1e-9


class BoundError(RuntimeError):
    """Build or solve failure; carries the constructed problem when one exists."""

    def __init__(self, message, problem=None):
        super().__init__(message)
        self.problem = problem


@dataclass(frozen=True)
class BasisSet:
    """Orthonormal Hermitian operator basis with the scaled identity first.

    When built against a support projector of rank r < d the basis spans
    only the quotient by operators supported entirely inside the kernel,
    dropping (d-r)^2 elements.
    """

    dim: int
    ops: tuple[np.ndarray, ...]
    reduced: bool
    kept: int


@dataclass(frozen=True)
class NHMeta:
    """Layout of a built estimation-bound program, for recovery and tests."""

    num_params: int
    dim: int
    compressed: bool
    block_offsets: tuple[int, ...]
    block_sizes: tuple[int, ...]
    support_ranks: tuple[int, ...]
    rotations: tuple[np.ndarray, ...]
    group_counts: dict[str, int]
    junk_blocks: dict[int, np.ndarray]
    theta: tuple[float, ...]


@dataclass(frozen=True)
class BoundResult:
    value: float
    kind: str
    X: tuple[np.ndarray, ...]
    L: np.ndarray | None
    gap: float
    solver_stats: dict
    problem: SDPProblem | None = None
    solution: SDPSolution | None = None


def _traceless_gellmann(d: int) -> list[np.ndarray]:
    ops = []
    for j in range(d):
        for k in range(j + 1, d):
            m = np.zeros((d, d), dtype=complex)
            m[j, k] = m[k, j] = 1 / np.sqrt(2)
            ops.append(m)
            m = np.zeros((d, d), dtype=complex)
            m[j, k] = 1j / np.sqrt(2)
            m[k, j] = -1j / np.sqrt(2)
            ops.append(m)
    for l in range(1, d):
        m = np.zeros((d, d), dtype=complex)
        for i in range(l):
            m[i, i] = 1.0
        m[l, l] = -l
        ops.append(m / np.sqrt(l * (l + 1)))
    return ops


def gellmann_basis(d: int, support_projector: np.ndarray | None = None) -> BasisSet:
    """Orthonormal Hermitian basis of d x d operators, identity/sqrt(d) first.

    With a rank-r support projector the returned set spans the quotient of
    operator space by the kernel-supported operators: the scaled identity,
    the traceless operators inside the support, and the support-kernel
    cross operators, d^2 - (d-r)^2 elements in total.
    """
    if d < 1:
        raise BoundError(f"basis dimension must be >= 1, got {d}")
    eye = np.eye(d, dtype=complex)
    if support_projector is None:
        ops = [eye / np.sqrt(d)] + _traceless_gellmann(d)
        return BasisSet(dim=d, ops=tuple(ops), reduced=False, kept=len(ops))
    p = np.asarray(support_projector, dtype=complex)
    if p.shape != (d, d) or np.max(np.abs(p - p.conj().T)) > 1e-10 or np.max(
        np.abs(p @ p - p)
    ) > 1e-8:
        raise BoundError("support_projector must be a Hermitian orthogonal projector")
    w, u = herm_eig(p)
    supp = u[:, w > 0.5]
    kern = u[:, w <= 0.5]
    r = supp.shape[1]
    if r == d:
        ops = [eye / np.sqrt(d)] + _traceless_gellmann(d)
        return BasisSet(dim=d, ops=tuple(ops), reduced=False, kept=len(ops))
    if r == 0:
        raise BoundError("support_projector has rank zero")
    ops = [eye / np.sqrt(d)]
    if r > 1:
        ops.extend(hermitize(supp @ g @ supp.conj().T) for g in _traceless_gellmann(r))
    for i in range(r):
        for m in range(d - r):
            uv = np.outer(supp[:, i], kern[:, m].conj())
            ops.append(hermitize((uv + uv.conj().T) / np.sqrt(2)))
            ops.append(hermitize((1j * uv - 1j * uv.conj().T) / np.sqrt(2)))
    return BasisSet(dim=d, ops=tuple(ops), reduced=True, kept=len(ops))


def _resolve_blocks(model: StatisticalModel, use_blocks: bool | None):
    if use_blocks is None:
        use_blocks = model.block_dims is not None
    if use_blocks and model.block_dims is not None:
        offs = []
        start = 0
        for b in model.block_dims:
            offs.append((start, b))
            start += b
        return offs
    return [(0, model.dim)]


def _support_rotation(s_block: np.ndarray):
    """Eigenvectors of the state block reordered support-first."""
    w, u = herm_eig(s_block)
    mask = w > RANK_TOL
    order = np.concatenate([np.where(mask)[0], np.where(~mask)[0]])
    return int(mask.sum()), u[:, order], w[order]


def _place(shape_offsets, entries) -> np.ndarray:
    """Assemble a Hermitian matrix from (row_block, col_block, mat) triples.

    shape_offsets maps a block index to (offset, size); the adjoint mirror
    of every off-diagonal entry is filled in automatically.
    """
    total = shape_offsets[-1][0] + shape_offsets[-1][1]
    full = np.zeros((total, total), dtype=complex)
    for bi, bj, mat in entries:
        oi, si = shape_offsets[bi]
        oj, sj = shape_offsets[bj]
        full[oi : oi + si, oj : oj + sj] += mat
        if bi != bj:
            full[oj : oj + sj, oi : oi + si] += mat.conj().T
    return full


def _feasible_estimators(model: StatisticalModel) -> list[np.ndarray]:
    """Exactly unbiased starting estimators from the SLD data.

    theta_j * P + sum_k (J^-1)_kj L_k satisfies both expectation pin
    families when the Fisher matrix is invertible; a pseudo-inverse keeps
    the hint usable (if inexact) otherwise.
    """
    data = sld(model)
    fisher = data.fisher
    w = np.linalg.eigvalsh(fisher)
    if w[0] > 1e-9 * max(1.0, w[-1]):
        jinv = np.linalg.inv(fisher)
    else:
        jinv = np.linalg.pinv(fisher, rcond=1e-9)
    wS, uS = herm_eig(model.state)
    keep = uS[:, wS > RANK_TOL]
    proj = hermitize(keep @ keep.conj().T)
    n = model.num_params
    return [
        hermitize(
            model.theta[j] * proj
            + sum(jinv[k, j] * data.operators[k] for k in range(n))
        )
        for j in range(n)
    ]


def _build_nh_compressed(model, blocks):
    """Support-compressed block program.

    Variable per model block: [[L, X], [X^T, 1]] with the error rows
    restricted to the support of the state block (L is nr x nr, each X
    slot is r x d).  The estimator's kernel-kernel corner and the kernel
    rows of L never enter the objective or the expectation pins, and any
    PSD-feasible point of the uncompressed program compresses to one of
    equal cost, so the optimum here equals the uncompressed infimum while
    every cost-free direction is gone (both cones get strictly feasible
    points, which the uncompressed program provably lacks dual-side).
    Cross entries of a pin matrix are doubled because the compressed
    variable keeps only the support rows of each estimator: the kernel
    rows, which would have contributed the adjoint half, are implicit.
    """
    n = model.num_params
    rots = []
    ranks = []
    layouts = []
    s_rot = []
    d_rot = []
    for off, dl in blocks:
        sb = model.state[off : off + dl, off : off + dl]
        r, v, _ = _support_rotation(sb)
        rots.append(v)
        ranks.append(r)
        layouts.append(
            [(j * r, r) for j in range(n)] + [(n * r, dl)]
        )
        s_rot.append(hermitize(v.conj().T @ sb @ v))
        d_rot.append(
            [v.conj().T @ dm[off : off + dl, off : off + dl] @ v for dm in model.derivs]
        )
        for e, dr in enumerate(d_rot[-1]):
            kk = dr[r:, r:]
            if kk.size and np.max(np.abs(kk)) > 1e-10:
                raise BoundError(
                    f"derivative {e} has weight {np.max(np.abs(kk)):.2e} inside "
                    "the kernel of the state: its expectation pin would be "
                    "satisfiable at zero cost and the bound would be meaningless"
                )

    objective = {}
    for bi, (off, dl) in enumerate(blocks):
        r = ranks[bi]
        srad = s_rot[bi][:r, :r]
        objective[bi] = realify(
            _place(layouts[bi], [(j, j, srad) for j in range(n)])
        )

    sup_bases = [
        [np.eye(r, dtype=complex) / np.sqrt(r)] + _traceless_gellmann(r)
        if r > 1
        else [np.eye(1, dtype=complex)]
        for r in ranks
    ]
    corner_bases = [gellmann_basis(dl).ops for off, dl in blocks]

    # The program variable holds the centered estimators W_j = X_j - theta_j,
    # whose quadratic form is the MSE about the true value; the recovery step
    # adds theta back so reported estimators satisfy Tr[S X_j] = theta_j.
    tr_s = float(np.trace(model.state).real)
    tr_d = [float(np.trace(dm).real) for dm in model.derivs]
    cons: list[dict[int, np.ndarray]] = []
    b: list[float] = []
    counts = {}
    # state-expectation pins: Tr[S W_j] = theta_j (1 - Tr S) = 0
    for j in range(n):
        row = {}
        for bi, (off, dl) in enumerate(blocks):
            r = ranks[bi]
            m = s_rot[bi][:r, :].copy()
            m[:, r:] *= 2.0
            row[bi] = realify(_place(layouts[bi], [(j, n, m)]))
        cons.append(row)
        b.append(4.0 * model.theta[j] * (1.0 - tr_s))
    counts["state_expectation"] = n
    # derivative pins: Tr[dS_j W_k] = delta_jk - theta_k Tr[dS_j]
    for k in range(n):
        for j in range(n):
            row = {}
            for bi, (off, dl) in enumerate(blocks):
                r = ranks[bi]
                m = d_rot[bi][j][:r, :].copy()
                m[:, r:] *= 2.0
                row[bi] = realify(_place(layouts[bi], [(k, n, m)]))
            cons.append(row)
            b.append(4.0 * ((1.0 if j == k else 0.0) - model.theta[k] * tr_d[j]))
    counts["derivative_expectation"] = n * n
    # estimator Hermiticity on the support square; cross entries are free
    # complex coordinates representing a Hermitian pair, so no pin needed
    start_len = len(cons)
    for j in range(n):
        for bi, (off, dl) in enumerate(blocks):
            r = ranks[bi]
            for op in sup_bases[bi]:
                m = np.zeros((r, dl), dtype=complex)
                m[:, :r] = 1j * op
                cons.append({bi: realify(_place(layouts[bi], [(j, n, m)]))})
                b.append(0.0)
    counts["estimator_hermitian"] = len(cons) - start_len
    # Hermiticity of the off-diagonal error blocks
    start_len = len(cons)
    for j in range(n):
        for k in range(j + 1, n):
            for bi, (off, dl) in enumerate(blocks):
                for op in sup_bases[bi]:
                    cons.append(
                        {bi: realify(_place(layouts[bi], [(j, k, 1j * op)]))}
                    )
                    b.append(0.0)
    counts["error_block_symmetry"] = len(cons) - start_len
    # identity corner, fully pinned
    start_len = len(cons)
    g5_first_rows = []
    for bi, (off, dl) in enumerate(blocks):
        for a, op in enumerate(corner_bases[bi]):
            if a == 0:
                g5_first_rows.append(len(cons))
            cons.append({bi: realify(_place(layouts[bi], [(n, n, op)]))})
            b.append(2.0 * np.sqrt(dl) if a == 0 else 0.0)
    counts["identity_corner"] = len(cons) - start_len

    eye_full = np.eye(model.dim, dtype=complex)
    w0 = [
        x - model.theta[j] * eye_full
        for j, x in enumerate(_feasible_estimators(model))
    ]
    primal = []
    for bi, (off, dl) in enumerate(blocks):
        r = ranks[bi]
        v = rots[bi]
        xt = [
            (v.conj().T @ x[off : off + dl, off : off + dl] @ v)[:r, :] for x in w0
        ]
        stack = np.vstack(xt)
        lam = 1.0 + 2.0 * float(np.linalg.norm(stack, 2)) ** 2
        y0 = np.zeros((n * r + dl, n * r + dl), dtype=complex)
        y0[: n * r, : n * r] = lam * np.eye(n * r)
        y0[n * r :, n * r :] = np.eye(dl)
        for j in range(n):
            y0[j * r : (j + 1) * r, n * r :] = xt[j]
            y0[n * r :, j * r : (j + 1) * r] = xt[j].conj().T
        primal.append(realify(y0))
    dual = np.zeros(len(cons))
    for row, (off, dl) in zip(g5_first_rows, blocks):
        dual[row] = -np.sqrt(dl)

    problem = make_problem(
        [2 * (n * ranks[bi] + dl) for bi, (off, dl) in enumerate(blocks)],
        objective,
        cons,
        b,
        scale=0.5,
        primal_hint=tuple(primal),
        dual_hint=dual,
    )
    meta = NHMeta(
        num_params=n,
        dim=model.dim,
        compressed=True,
        block_offsets=tuple(off for off, dl in blocks),
        block_sizes=tuple(dl for off, dl in blocks),
        support_ranks=tuple(ranks),
        rotations=tuple(rots),
        group_counts=counts,
        junk_blocks={},
        theta=tuple(float(t) for t in model.theta),
    )
    return problem, meta


def _build_nh_printed(model, blocks):
    """Literal five-group construction over the full operator basis.

    One PSD block of size (n+1) d per model block; every slot keeps its
    full dimension and groups 3-5 run over the complete d^2-element
    basis.  For a rank-deficient state this program's infimum is not
    attained (the kernel diagonal of L is cost-free), so the caller
    applies the junk penalty recorded in the metadata.
    """
    n = model.num_params
    ranks = []
    junk: dict[int, np.ndarray] = {}
    s_blocks = []
    d_blocks = []
    layouts = []
    for bi, (off, dl) in enumerate(blocks):
        sb = model.state[off : off + dl, off : off + dl]
        s_blocks.append(sb)
        d_blocks.append([dm[off : off + dl, off : off + dl] for dm in model.derivs])
        r, v, _ = _support_rotation(sb)
        ranks.append(r)
        layouts.append([(j * dl, dl) for j in range(n + 1)])
        if r < dl:
            kern = v[:, r:]
            kproj = hermitize(kern @ kern.conj().T)
            junk[bi] = realify(
                _place(layouts[bi], [(j, j, kproj) for j in range(n)])
            )

    objective = {
        bi: realify(_place(layouts[bi], [(j, j, s_blocks[bi]) for j in range(n)]))
        for bi, (off, dl) in enumerate(blocks)
    }
    bases = [gellmann_basis(dl).ops for off, dl in blocks]

    # centered estimators W_j = X_j - theta_j, as in the compressed builder
    tr_s = float(np.trace(model.state).real)
    tr_d = [float(np.trace(dm).real) for dm in model.derivs]
    cons: list[dict[int, np.ndarray]] = []
    b: list[float] = []
    counts = {}
    for j in range(n):
        cons.append(
            {
                bi: realify(_place(layouts[bi], [(j, n, s_blocks[bi])]))
                for bi, (off, dl) in enumerate(blocks)
            }
        )
        b.append(4.0 * model.theta[j] * (1.0 - tr_s))
    counts["state_expectation"] = n
    for k in range(n):
        for j in range(n):
            cons.append(
                {
                    bi: realify(_place(layouts[bi], [(k, n, d_blocks[bi][j])]))
                    for bi, (off, dl) in enumerate(blocks)
                }
            )
            b.append(4.0 * ((1.0 if j == k else 0.0) - model.theta[k] * tr_d[j]))
    counts["derivative_expectation"] = n * n
    start_len = len(cons)
    for j in range(n):
        for bi, (off, dl) in enumerate(blocks):
            for op in bases[bi]:
                cons.append({bi: realify(_place(layouts[bi], [(j, n, 1j * op)]))})
                b.append(0.0)
    counts["estimator_hermitian"] = len(cons) - start_len
    start_len = len(cons)
    for j in range(n):
        for k in range(j + 1, n):
            for bi, (off, dl) in enumerate(blocks):
                for op in bases[bi]:
                    cons.append(
                        {bi: realify(_place(layouts[bi], [(j, k, 1j * op)]))}
                    )
                    b.append(0.0)
    counts["error_block_symmetry"] = len(cons) - start_len
    start_len = len(cons)
    g5_first_rows = []
    for bi, (off, dl) in enumerate(blocks):
        for a, op in enumerate(bases[bi]):
            if a == 0:
                g5_first_rows.append(len(cons))
            cons.append({bi: realify(_place(layouts[bi], [(n, n, op)]))})
            b.append(2.0 * np.sqrt(dl) if a == 0 else 0.0)
    counts["identity_corner"] = len(cons) - start_len

    eye_full = np.eye(model.dim, dtype=complex)
    w0 = [
        x - model.theta[j] * eye_full
        for j, x in enumerate(_feasible_estimators(model))
    ]
    primal = []
    for bi, (off, dl) in enumerate(blocks):
        xb = [hermitize(x[off : off + dl, off : off + dl]) for x in w0]
        stack = np.vstack(xb)
        lam = 1.0 + 2.0 * float(np.linalg.norm(stack, 2)) ** 2
        y0 = np.zeros(((n + 1) * dl, (n + 1) * dl), dtype=complex)
        y0[: n * dl, : n * dl] = lam * np.eye(n * dl)
        y0[n * dl :, n * dl :] = np.eye(dl)
        for j in range(n):
            y0[j * dl : (j + 1) * dl, n * dl :] = xb[j]
            y0[n * dl :, j * dl : (j + 1) * dl] = xb[j]
        primal.append(realify(y0))
    dual = np.zeros(len(cons))
    for row, (off, dl) in zip(g5_first_rows, blocks):
        dual[row] = -np.sqrt(dl)

    problem = make_problem(
        [2 * (n + 1) * dl for off, dl in blocks],
        objective,
        cons,
        b,
        scale=0.5,
        primal_hint=tuple(primal),
        dual_hint=dual,
    )
    rots = []
    for bi, (off, dl) in enumerate(blocks):
        sb = s_blocks[bi]
        _, v, _ = _support_rotation(sb)
        rots.append(v)
    meta = NHMeta(
        num_params=n,
        dim=model.dim,
        compressed=False,
        block_offsets=tuple(off for off, dl in blocks),
        block_sizes=tuple(dl for off, dl in blocks),
        support_ranks=tuple(ranks),
        rotations=tuple(rots),
        group_counts=counts,
        junk_blocks=junk,
        theta=tuple(float(t) for t in model.theta),
    )
    return problem, meta


def build_nh_sdp(
    model: StatisticalModel,
    *,
    use_reduced_basis: bool | None = None,
    use_blocks: bool | None = None,
) -> tuple[SDPProblem, NHMeta]:
    """Standard-form program for the separable-measurement MSE bound.

    Five constraint families pin, in order: the state expectations of the
    estimators, their derivative expectations, Hermiticity of each
    estimator, Hermiticity of the off-diagonal L blocks, and the identity
    corner.  The realified embedding doubles inner products and
    off-diagonal placements carry an adjoint mirror, so an expectation
    pin Tr[A X] = c appears with right-hand side 4c (diagonal-slot pins
    double only once: 2c); the recorded scale of 1/2 undoes the
    realification factor in reported objectives.  The estimator variable
    is centered at the working point, making the optimum the MSE about
    theta; recovery adds theta back.

    By default (and always when the state is full rank on every block,
    where the two formulations are literally identical) the rank-reduced
    support-compressed form is built; use_reduced_basis=False forces the
    uncompressed textbook layout.
    """
    blocks = _resolve_blocks(model, use_blocks)
    deficient = False
    for off, dl in blocks:
        r, _, _ = _support_rotation(model.state[off : off + dl, off : off + dl])
        if r < dl:
            deficient = True
    reduce_flag = deficient if use_reduced_basis is None else use_reduced_basis
    if reduce_flag and deficient:
        return _build_nh_compressed(model, blocks)
    return _build_nh_printed(model, blocks)


def recover_nh_estimators(
    meta: NHMeta, solution: SDPSolution
) -> tuple[np.ndarray, tuple[np.ndarray, ...]]:
    """Pull (L, X) back out of a solved program.

    Returns the n x n grid of d x d error-operator blocks and the n
    estimator matrices, assembled over the model's block structure.  For
    a compressed solve the estimators are lifted to Hermitian operators
    with a zero kernel-kernel corner, and L is completed so that the
    block matrix [[L, X], [X^T, 1]] stays PSD: the diagonal L blocks are
    Hermitian, while the off-diagonal blocks keep a skew remainder in
    their kernel-cross entries (the uncompressed program only attains
    full Hermiticity there in the limit of infinite kernel weight).
    """
    n = meta.num_params
    d = meta.dim
    lgrid = np.zeros((n, n, d, d), dtype=complex)
    xs = [np.zeros((d, d), dtype=complex) for _ in range(n)]
    for bi, (off, dl) in enumerate(zip(meta.block_offsets, meta.block_sizes)):
        yc = derealify(solution.primal[bi])
        if not meta.compressed:
            for j in range(n):
                xj = yc[j * dl : (j + 1) * dl, n * dl : (n + 1) * dl]
                xs[j][off : off + dl, off : off + dl] = hermitize(xj)
                for k in range(n):
                    ljk = yc[j * dl : (j + 1) * dl, k * dl : (k + 1) * dl]
                    lkj = yc[k * dl : (k + 1) * dl, j * dl : (j + 1) * dl]
                    lgrid[j, k, off : off + dl, off : off + dl] = hermitize(
                        0.5 * (ljk + lkj)
                    )
            continue
        r = meta.support_ranks[bi]
        v = meta.rotations[bi]
        xt = []
        for j in range(n):
            row = yc[j * r : (j + 1) * r, n * r :]
            a = hermitize(row[:, :r])
            xrot = np.zeros((dl, dl), dtype=complex)
            xrot[:r, :r] = a
            xrot[:r, r:] = row[:, r:]
            xrot[r:, :r] = row[:, r:].conj().T
            xt.append((np.hstack([a, row[:, r:]]), xrot))
            xs[j][off : off + dl, off : off + dl] = hermitize(v @ xrot @ v.conj().T)
        for j in range(n):
            for k in range(n):
                ljk = yc[j * r : (j + 1) * r, k * r : (k + 1) * r]
                lkj = yc[k * r : (k + 1) * r, j * r : (j + 1) * r]
                lsup = 0.5 * (ljk + lkj.conj().T)
                xj, xk = xt[j][1], xt[k][1]
                prod = xj @ xk
                lrot = prod.astype(complex).copy()
                lrot[:r, :r] += lsup - xt[j][0] @ xt[k][0].conj().T
                lgrid[j, k, off : off + dl, off : off + dl] = v @ lrot @ v.conj().T
    for j in range(n):
        for k in range(n):
            sym = 0.5 * (lgrid[j, k] + lgrid[k, j].conj().T)
            lgrid[j, k] = sym
            lgrid[k, j] = sym.conj().T
    # solved in centered variables; shift back so Tr[S X_j] = theta_j, with
    # the congruence completion keeping [[L, X], [X^T, 1]] >= 0 exactly
    ws = [hermitize(x) for x in xs]
    eye = np.eye(d, dtype=complex)
    th = meta.theta
    for j in range(n):
        for k in range(n):
            lgrid[j, k] = (
                lgrid[j, k] + th[j] * ws[k] + th[k] * ws[j] + th[j] * th[k] * eye
            )
    return lgrid, tuple(w + th[j] * eye for j, w in enumerate(ws))


def _unbiasedness_errors(model: StatisticalModel, xs) -> float:
    worst = 0.0
    for j, x in enumerate(xs):
        worst = max(worst, abs(np.trace(model.state @ x).real - model.theta[j]))
        for k, dm in enumerate(model.derivs):
            target = 1.0 if j == k else 0.0
            worst = max(worst, abs(np.trace(dm @ x).real - target))
    return worst


def _schur_floor(lgrid, xs, n, d) -> float:
    big = np.zeros(((n + 1) * d, (n + 1) * d), dtype=complex)
    for j in range(n):
        big[j * d : (j + 1) * d, n * d :] = xs[j]
        big[n * d :, j * d : (j + 1) * d] = xs[j].conj().T
        for k in range(n):
            big[j * d : (j + 1) * d, k * d : (k + 1) * d] = lgrid[j, k]
    big[n * d :, n * d :] = np.eye(d)
    big = 0.5 * (big + big.conj().T)
    return float(np.linalg.eigvalsh(big)[0])


def nagaoka_hayashi_bound(
    model: StatisticalModel,
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = 200,
    use_reduced_basis: bool | None = None,
    use_blocks: bool | None = None,
    junk_penalty: float | None = None,
    dump_path=None,
) -> BoundResult:
    """Attainable-MSE bound over separable measurements, via the SDP.

    On the default compressed path the program is solved as built.  On
    the uncompressed path with a rank-deficient state, a tiny penalty
    (default 1e-9) bounds the cost-free kernel directions, and the
    reported value is evaluated against the unpenalized objective; the
    residual bias scales as the square root of the penalty, so this path
    is a few-digit approximation only (the compressed default is exact).
    """
    problem, meta = build_nh_sdp(
        model, use_reduced_basis=use_reduced_basis, use_blocks=use_blocks
    )
    if dump_path is not None:
        with open(dump_path, "w") as fh:
            fh.write(write_sdpa(problem))
    lam = junk_penalty
    if lam is None:
        lam = DEFAULT_JUNK_PENALTY if meta.junk_blocks else 0.0
    solved_problem = problem
    if lam and meta.junk_blocks:
        new_obj = dict(problem.objective)
        for bi, jb in meta.junk_blocks.items():
            new_obj[bi] = new_obj[bi] + lam * jb
        solved_problem = replace(problem, objective=new_obj)
    sol = solve(solved_problem, tol=tol, max_iter=max_iter)
    if sol.status != "optimal":
        raise BoundError(
            f"solver finished with status {sol.status!r} "
            f"(gap {sol.gap:.2e}, iterations {sol.iterations})",
            problem=solved_problem,
        )
    raw = sum(
        float(np.vdot(problem.objective[bi], sol.primal[bi]))
        for bi in problem.objective
    )
    value = problem.scale * raw
    penalty_paid = sol.primal_obj - value
    lgrid, xs = recover_nh_estimators(meta, sol)
    ub_err = _unbiasedness_errors(model, xs)
    if ub_err > 1e-6:
        raise BoundError(
            f"recovered estimators violate unbiasedness by {ub_err:.2e}",
            problem=solved_problem,
        )
    floor = _schur_floor(lgrid, xs, meta.num_params, meta.dim)
    if floor < -1e-7:
        raise BoundError(
            f"recovered block matrix has eigenvalue {floor:.2e}",
            problem=solved_problem,
        )
    stats = {
        "iterations": sol.iterations,
        "status": sol.status,
        "primal_infeas": sol.primal_infeas,
        "dual_infeas": sol.dual_infeas,
        "constraints": problem.num_constraints,
        "sdp_block_dims": problem.block_dims,
        "compressed": meta.compressed,
        "junk_penalty_weight": lam,
        "junk_penalty_paid": penalty_paid,
        "unbiasedness_error": ub_err,
        "schur_min_eig": floor,
    }
    return BoundResult(
        value=value,
        kind="nagaoka_hayashi",
        X=xs,
        L=lgrid,
        gap=sol.gap,
        solver_stats=stats,
        problem=problem,
        solution=sol,
    )


def _support_coords(s_blocks, blocks):
    """Per-block weighted support rows: the map X -> D^(1/2) U^dag X restricted
    to each block, whose Gram matrix reproduces Tr[X_j S X_k]."""
    maps = []
    total = 0
    for (off, dl), sb in zip(blocks, s_blocks):
        w, u = herm_eig(sb)
        mask = w > RANK_TOL
        rows = (u[:, mask] * np.sqrt(w[mask])).conj().T
        maps.append((off, dl, rows))
        total += rows.shape[0] * dl
    return maps, total


def _coord_vec(maps, total, x: np.ndarray) -> np.ndarray:
    out = np.zeros(total, dtype=complex)
    pos = 0
    for off, dl, rows in maps:
        seg = rows @ x[off : off + dl, off : off + dl]
        cnt = seg.size
        out[pos : pos + cnt] = seg.ravel()
        pos += cnt
    return out


def build_holevo_sdp(
    model: StatisticalModel,
    *,
    use_reduced_basis: bool | None = None,
    use_blocks: bool | None = None,
):
    """Factorized program for the collective-measurement bound.

    Minimizes trace(V) over real symmetric V and unbiased Hermitian X
    subject to [[V, M^dag], [M, 1]] >= 0, where M's j-th column collects
    the weighted support rows of X_j, so the Schur complement enforces
    V >= Z with Z_jk = Tr[S X_k X_j].  The program is posed so that this
    matrix is the slack of the standard-form dual: unbiasedness is solved
    affinely, the dual vector holds V's entries and the estimators' free
    coefficients, and the bound is the negated dual objective.
    """
    n = model.num_params
    blocks = _resolve_blocks(model, use_blocks)
    s_blocks = [model.state[off : off + dl, off : off + dl] for off, dl in blocks]
    ops: list[np.ndarray] = []
    for bi, ((off, dl), sb) in enumerate(zip(blocks, s_blocks)):
        r, v, _ = _support_rotation(sb)
        reduce_here = (r < dl) if use_reduced_basis is None else use_reduced_basis
        if reduce_here and r < dl:
            keep = v[:, :r]
            proj = hermitize(keep @ keep.conj().T)
            basis = gellmann_basis(dl, proj)
        else:
            basis = gellmann_basis(dl)
        for op in basis.ops:
            full = np.zeros((model.dim, model.dim), dtype=complex)
            full[off : off + dl, off : off + dl] = op
            ops.append(full)
    kprime = len(ops)
    # affine solve of the unbiasedness system over the basis coefficients
    targets = [model.state] + list(model.derivs)
    tmat = np.array(
        [[np.trace(te @ op).real for op in ops] for te in targets]
    )
    rank = np.linalg.matrix_rank(tmat, tol=1e-10)
    if rank < n + 1:
        raise BoundError(
            "unbiasedness system is rank deficient: the state and derivative "
            "functionals are linearly dependent on the estimator space"
        )
    # centered estimators W_j = X_j - theta_j, as in the block-program builder
    tr_s = float(np.trace(model.state).real)
    tr_d = [float(np.trace(dm).real) for dm in model.derivs]
    rhs = np.zeros((n + 1, n))
    for j in range(n):
        rhs[0, j] = model.theta[j] * (1.0 - tr_s)
        for k in range(n):
            rhs[1 + k, j] = (1.0 if j == k else 0.0) - model.theta[j] * tr_d[k]
    coef0, _, _, _ = np.linalg.lstsq(tmat, rhs, rcond=None)
    resid = np.max(np.abs(tmat @ coef0 - rhs))
    if resid > 1e-8:
        raise BoundError(
            f"unbiasedness system is inconsistent (residual {resid:.2e}): "
            "no unbiased estimator exists for this model"
        )
    _, sv, vt = np.linalg.svd(tmat)
    null = vt[rank:].T  # kprime x q
    q = null.shape[1]

    x0 = [
        sum(coef0[a, j] * ops[a] for a in range(kprime)) for j in range(n)
    ]
    null_ops = [
        sum(null[a, bidx] * ops[a] for a in range(kprime)) for bidx in range(q)
    ]
    maps, km = _support_coords(s_blocks, blocks)
    dim_lmi = n + km
    m0 = np.zeros((km, n), dtype=complex)
    for j in range(n):
        m0[:, j] = _coord_vec(maps, km, x0[j])
    null_cols = [_coord_vec(maps, km, op) for op in null_ops]

    g0 = np.zeros((dim_lmi, dim_lmi), dtype=complex)
    g0[n:, n:] = np.eye(km)
    g0[n:, :n] = m0
    g0[:n, n:] = m0.conj().T
    objective = {0: realify(hermitize(g0))}

    cons = []
    b = []
    var_index = []  # ("v", j, k) or ("x", j, bidx) in dual-vector order
    for j in range(n):
        for k in range(j, n):
            g = np.zeros((dim_lmi, dim_lmi), dtype=complex)
            g[j, k] = g[k, j] = 1.0
            cons.append({0: -realify(g)})
            b.append(-2.0 if j == k else 0.0)
            var_index.append(("v", j, k))
    for j in range(n):
        for bidx in range(q):
            g = np.zeros((dim_lmi, dim_lmi), dtype=complex)
            g[n:, j] = null_cols[bidx]
            g[j, n:] = null_cols[bidx].conj()
            cons.append({0: -realify(hermitize(g))})
            b.append(0.0)
            var_index.append(("x", j, bidx))

    tau = 1.0 + 2.0 * float(np.linalg.norm(m0, 2)) ** 2
    dual0 = np.zeros(len(cons))
    for t, key in enumerate(var_index):
        if key[0] == "v" and key[1] == key[2]:
            dual0[t] = tau
    problem = make_problem(
        [2 * dim_lmi],
        objective,
        cons,
        b,
        scale=-0.5,
        primal_hint=(np.eye(2 * dim_lmi),),
        dual_hint=dual0,
    )
    meta = {
        "var_index": tuple(var_index),
        "w0": tuple(x0),
        "null_ops": tuple(null_ops),
        "num_params": n,
        "lmi_dim": dim_lmi,
        "basis_size": kprime,
        "theta": tuple(float(t) for t in model.theta),
    }
    return problem, meta


def holevo_bound(
    model: StatisticalModel,
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = 200,
    use_reduced_basis: bool | None = None,
    use_blocks: bool | None = None,
    dump_path=None,
) -> BoundResult:
    """Collective-measurement lower bound on the MSE trace."""
    problem, meta = build_holevo_sdp(
        model, use_reduced_basis=use_reduced_basis, use_blocks=use_blocks
    )
    if dump_path is not None:
        with open(dump_path, "w") as fh:
            fh.write(write_sdpa(problem))
    sol = solve(problem, tol=tol, max_iter=max_iter)
    if sol.status != "optimal":
        raise BoundError(
            f"solver finished with status {sol.status!r} "
            f"(gap {sol.gap:.2e}, iterations {sol.iterations})",
            problem=problem,
        )
    n = meta["num_params"]
    xs = []
    yvec = sol.dual_y
    eye = np.eye(model.dim, dtype=complex)
    for j in range(n):
        x = np.array(meta["w0"][j])
        for t, key in enumerate(meta["var_index"]):
            if key[0] == "x" and key[1] == j:
                x = x + yvec[t] * meta["null_ops"][key[2]]
        xs.append(hermitize(x) + meta["theta"][j] * eye)
    ub_err = _unbiasedness_errors(model, xs)
    if ub_err > 1e-6:
        raise BoundError(
            f"recovered estimators violate unbiasedness by {ub_err:.2e}",
            problem=problem,
        )
    stats = {
        "iterations": sol.iterations,
        "status": sol.status,
        "primal_infeas": sol.primal_infeas,
        "dual_infeas": sol.dual_infeas,
        "constraints": problem.num_constraints,
        "sdp_block_dims": problem.block_dims,
        "unbiasedness_error": ub_err,
    }
    return BoundResult(
        value=sol.dual_obj,
        kind="holevo",
        X=tuple(xs),
        L=None,
        gap=sol.gap,
        solver_stats=stats,
        problem=problem,
        solution=sol,
    )


def nh_u_bound(
    state: np.ndarray,
    xs,
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = 200,
) -> float:
    """Operator-MSE bound with the estimators held fixed.

    Same block-matrix program as the full bound but with the expectation
    pins dropped and every estimator slot pinned to the given data; only
    the error operator remains free.  Solved in the support-compressed
    form, which prices exactly the support-visible part of each estimator
    (the kernel-kernel corner of an estimator never affects the value).
    """
    state = hermitize(np.asarray(state, dtype=complex))
    xs_in = [hermitize(np.asarray(x, dtype=complex)) for x in xs]
    d = state.shape[0]
    n = len(xs_in)
    if n < 1 or any(x.shape != (d, d) for x in xs_in):
        raise BoundError("estimators must be square matrices matching the state")
    r, v, w = _support_rotation(state)
    srad = hermitize(v.conj().T @ state @ v)[:r, :r]
    xt = [(v.conj().T @ x @ v)[:r, :] for x in xs_in]
    layout = [(j * r, r) for j in range(n)] + [(n * r, d)]
    sup_basis = (
        [np.eye(r, dtype=complex) / np.sqrt(r)] + _traceless_gellmann(r)
        if r > 1
        else [np.eye(1, dtype=complex)]
    )
    corner_basis = gellmann_basis(d).ops

    cons = []
    b = []
    for j in range(n):
        for a in range(r):
            for c in range(d):
                m = np.zeros((r, d), dtype=complex)
                m[a, c] = 1.0
                cons.append({0: realify(_place(layout, [(j, n, m)]))})
                b.append(4.0 * xt[j][a, c].real)
                m = np.zeros((r, d), dtype=complex)
                m[a, c] = 1j
                cons.append({0: realify(_place(layout, [(j, n, m)]))})
                b.append(4.0 * xt[j][a, c].imag)
    for j in range(n):
        for k in range(j + 1, n):
            for op in sup_basis:
                cons.append({0: realify(_place(layout, [(j, k, 1j * op)]))})
                b.append(0.0)
    for a, op in enumerate(corner_basis):
        cons.append({0: realify(_place(layout, [(n, n, op)]))})
        b.append(2.0 * np.sqrt(d) if a == 0 else 0.0)

    objective = realify(_place(layout, [(j, j, srad) for j in range(n)]))
    stack = np.vstack(xt)
    lam = 1.0 + 2.0 * float(np.linalg.norm(stack, 2)) ** 2
    y0 = np.zeros((n * r + d, n * r + d), dtype=complex)
    y0[: n * r, : n * r] = lam * np.eye(n * r)
    y0[n * r :, n * r :] = np.eye(d)
    for j in range(n):
        y0[j * r : (j + 1) * r, n * r :] = xt[j]
        y0[n * r :, j * r : (j + 1) * r] = xt[j].conj().T
    dual = np.zeros(len(cons))
    dual[len(cons) - len(corner_basis)] = -np.sqrt(d)
    problem = make_problem(
        [2 * (n * r + d)],
        {0: objective},
        cons,
        b,
        scale=0.5,
        primal_hint=(realify(y0),),
        dual_hint=dual,
    )
    sol = solve(problem, tol=tol, max_iter=max_iter)
    if sol.status != "optimal":
        raise BoundError(
            f"solver finished with status {sol.status!r}", problem=problem
        )
    return sol.primal_obj


def nagaoka_explicit_two_obs(state: np.ndarray, x1: np.ndarray, x2: np.ndarray) -> float:
    """Closed form of the two-estimator operator-MSE bound.

    Quadratic cost plus the trace norm of the state-weighted commutator;
    the square root of the state symmetrizes the commutator term so the
    trace norm sees a Hermitian matrix with the same spectrum.
    """
    state = hermitize(np.asarray(state, dtype=complex))
    x1 = hermitize(np.asarray(x1, dtype=complex))
    x2 = hermitize(np.asarray(x2, dtype=complex))
    root = psd_sqrt(state)
    quad = np.trace(state @ (x1 @ x1 + x2 @ x2)).real
    comm = trace_abs(1j * root @ (x1 @ x2 - x2 @ x1) @ root)
    return float(quad + comm)
