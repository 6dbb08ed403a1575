"""Truncated eigendecomposition and SVD of sparse operators.

Two routes produce item embeddings:

* ``top_eigenvectors``: symmetric Lanczos with full reorthogonalization on
  the normalized Laplacian, restarted with deflation of converged pairs.
* ``top_singular_triplets``: Golub-Kahan bidiagonalization of X^T, giving
  the left singular vectors (eigenvectors of X^T X) and singular values;
  the embedding coordinates are U_F * diag(sigma).

Full reorthogonalization is affordable at the scales this package targets
and removes ghost eigenvalues.  Sign convention: the entry of largest
magnitude in each returned vector is made positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, ConvergenceError


@dataclass(frozen=True)
class EigsConfig:
    f: int
    max_iterations: int | None = None  # restart budget; default 10 * f
    tolerance: float = 1e-8
    seed: int = 0

    def restarts(self) -> int:
        return self.max_iterations if self.max_iterations else 10 * self.f


@dataclass
class SpectralEmbedding:
    m: int
    f: int
    coords: np.ndarray  # m x f
    spectrum: np.ndarray  # descending, nonnegative


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Make each column's largest-magnitude entry positive (deterministic)."""
    out = vectors.copy()
    for k in range(out.shape[1]):
        j = int(np.argmax(np.abs(out[:, k])))
        if out[j, k] < 0:
            out[:, k] = -out[:, k]
    return out


def _orthogonalize(v: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    """Two passes of classical Gram-Schmidt against the given vectors."""
    for _ in range(2):
        for q in basis:
            v = v - q * np.dot(q, v)
    return v


def _start_vector(dim: int, rng: np.random.Generator) -> np.ndarray:
    return rng.choice([-1.0, 1.0], size=dim)


def lanczos_topk(apply_op, dim, k, cfg: EigsConfig, norm_estimate: float):
    """Top-k eigenpairs of a symmetric PSD operator on R^dim.

    Lanczos with full reorthogonalization; converged Ritz pairs are locked
    and deflated out of the operator, then the iteration restarts on the
    remainder.  Residual test: ||A v - lambda v|| <= tolerance * norm_estimate.
    """
    if k > dim:
        raise ConfigurationError(f"requested {k} eigenpairs from dimension {dim}")
    rng = np.random.default_rng(cfg.seed)
    threshold = cfg.tolerance * max(norm_estimate, np.finfo(float).tiny)

    locked_vals: list[float] = []
    locked_vecs: list[np.ndarray] = []
    worst_residual = np.inf
    warm = None  # best unconverged Ritz vector from the previous restart

    for _restart in range(cfg.restarts()):
        if len(locked_vals) >= k:
            break
        deflated = locked_vecs
        max_basis = min(dim - len(deflated), max(2 * (k - len(locked_vals)) + 16, 48))
        if max_basis <= 0:
            break

        start = warm if warm is not None else _start_vector(dim, rng)
        q = _orthogonalize(start, deflated)
        nq = np.linalg.norm(q)
        if nq < 1e-12:
            warm = None
            q = _orthogonalize(_start_vector(dim, rng), deflated)
            nq = np.linalg.norm(q)
            if nq < 1e-12:
                continue
        q /= nq

        basis = [q]
        alphas: list[float] = []
        betas: list[float] = []
        breakdown = False
        for _ in range(max_basis):
            w = apply_op(basis[-1])
            w = _orthogonalize(w, deflated)
            alphas.append(float(np.dot(basis[-1], w)))
            w = _orthogonalize(w, basis)
            beta = float(np.linalg.norm(w))
            if beta < 1e-14 * max(1.0, norm_estimate):
                breakdown = True
                break
            betas.append(beta)
            basis.append(w / beta)
        if len(basis) > len(alphas):
            basis = basis[: len(alphas)]
            betas = betas[: len(alphas) - 1]

        tmat = np.diag(alphas)
        for i, b in enumerate(betas):
            tmat[i, i + 1] = b
            tmat[i + 1, i] = b
        theta, s = np.linalg.eigh(tmat)
        order = np.argsort(theta)[::-1]
        theta, s = theta[order], s[:, order]
        v_basis = np.column_stack(basis)

        # lock converged Ritz pairs from the top down, keeping order
        warm = None
        for idx in range(len(theta)):
            if len(locked_vals) >= k:
                break
            ritz = v_basis @ s[:, idx]
            ritz = _orthogonalize(ritz, locked_vecs)
            nr = np.linalg.norm(ritz)
            if nr < 1e-12:
                continue
            ritz /= nr
            resid = float(np.linalg.norm(apply_op(ritz) - theta[idx] * ritz))
            worst_residual = resid
            if resid <= threshold or breakdown:
                locked_vals.append(float(theta[idx]))
                locked_vecs.append(ritz)
            else:
                warm = ritz  # resume from here next restart
                break  # keep descending order contiguous

    if len(locked_vals) < k:
        raise ConvergenceError(
            f"Lanczos locked only {len(locked_vals)}/{k} eigenpairs after "
            f"{cfg.restarts()} restarts (last residual {worst_residual:.3e})",
            residual=worst_residual,
        )

    vals = np.array(locked_vals[:k])
    vecs = np.column_stack(locked_vecs[:k])
    order = np.argsort(vals)[::-1]
    return vals[order], _fix_signs(vecs[:, order])


def top_eigenvectors(laplacian, cfg: EigsConfig) -> SpectralEmbedding:
    """Top-F eigenpairs of the normalized Laplacian.

    Zero-degree items are removed from the operator and get exactly-zero
    embedding rows.
    """
    m = laplacian.m
    zero = laplacian.zero_degree_items
    active = np.setdiff1d(np.arange(m), zero, assume_unique=True)
    if cfg.f > len(active):
        raise ConfigurationError(
            f"F={cfg.f} exceeds the {len(active)} nonzero-degree items"
        )
    sub = laplacian.matrix[active][:, active].tocsr()
    norm_est = np.sqrt(float((sub.multiply(sub)).sum()))

    def apply_op(v):
        return sub @ v

    vals, vecs = lanczos_topk(apply_op, len(active), cfg.f, cfg, norm_est)
    coords = np.zeros((m, cfg.f))
    coords[active] = vecs
    return SpectralEmbedding(m=m, f=cfg.f, coords=coords, spectrum=vals)


def golub_kahan_topk(x: sp.csr_matrix, k: int, cfg: EigsConfig):
    """Top-k singular triplets of A = X^T via Golub-Kahan bidiagonalization.

    Returns (sigma, U) where U holds left singular vectors of X^T (length m).
    Both Lanczos bases are fully reorthogonalized; converged left vectors
    are deflated out on restart.  Residual test on the symmetric operator:
    ||X^T X u - sigma^2 u|| <= tolerance * sigma_1^2.
    """
    n, m = x.shape
    if k > min(n, m):
        raise ConfigurationError(f"requested {k} triplets from a {n}x{m} matrix")
    xt = x.T.tocsr()
    rng = np.random.default_rng(cfg.seed)
    sigma1_sq_est = None

    locked_sig: list[float] = []
    locked_u: list[np.ndarray] = []
    worst_residual = np.inf
    warm = None  # right-space image of the best unconverged left vector

    def sym_apply(u):
        return xt @ (x @ u)

    for _restart in range(cfg.restarts()):
        if len(locked_sig) >= k:
            break
        max_basis = min(
            min(n, m) - len(locked_u),
            max(2 * (k - len(locked_sig)) + 16, 48),
        )
        if max_basis <= 0:
            break

        v = warm if warm is not None else _start_vector(n, rng)
        nv = np.linalg.norm(v)
        if nv < 1e-12:
            warm = None
            v = _start_vector(n, rng)
            nv = np.linalg.norm(v)
        v = v / nv
        us: list[np.ndarray] = []
        vs: list[np.ndarray] = [v]
        alphas: list[float] = []
        betas: list[float] = []
        breakdown = False
        for _ in range(max_basis):
            u = xt @ vs[-1]
            u = _orthogonalize(u, locked_u)
            u = _orthogonalize(u, us)
            alpha = float(np.linalg.norm(u))
            if alpha < 1e-14:
                breakdown = True
                break
            u /= alpha
            us.append(u)
            alphas.append(alpha)
            w = x @ u
            w = _orthogonalize(w, vs)
            beta = float(np.linalg.norm(w))
            if beta < 1e-14:
                breakdown = True
                break
            betas.append(beta)
            vs.append(w / beta)
        if not alphas:
            continue

        # lower-bidiagonal projected matrix: B[j, j] = alpha_j, B[j+1, j] = beta_j
        rows = len(vs)
        bmat = np.zeros((rows, len(alphas)))
        for j, a in enumerate(alphas):
            bmat[j, j] = a
            if j < len(betas):
                bmat[j + 1, j] = betas[j]
        p, svals, qt = np.linalg.svd(bmat)
        u_basis = np.column_stack(us)

        if sigma1_sq_est is None and len(svals):
            sigma1_sq_est = float(svals[0]) ** 2
        threshold = cfg.tolerance * max(sigma1_sq_est or 0.0, np.finfo(float).tiny)

        warm = None
        for idx in range(len(svals)):
            if len(locked_sig) >= k:
                break
            u = u_basis @ qt[idx]
            u = _orthogonalize(u, locked_u)
            nu = np.linalg.norm(u)
            if nu < 1e-12:
                continue
            u /= nu
            sig = float(svals[idx])
            resid = float(np.linalg.norm(sym_apply(u) - sig * sig * u))
            worst_residual = resid
            if resid <= threshold or breakdown:
                locked_sig.append(sig)
                locked_u.append(u)
            else:
                warm = x @ u  # map back to the right space for the restart
                break

    if len(locked_sig) < k:
        raise ConvergenceError(
            f"bidiagonalization locked only {len(locked_sig)}/{k} triplets "
            f"after {cfg.restarts()} restarts (last residual {worst_residual:.3e})",
            residual=worst_residual,
        )

    sig = np.array(locked_sig[:k])
    u = np.column_stack(locked_u[:k])
    order = np.argsort(sig)[::-1]
    return sig[order], _fix_signs(u[:, order])


def top_singular_triplets(matrix, cfg: EigsConfig) -> SpectralEmbedding:
    """Top-F left singular triplets of X^T; coords are U_F * diag(sigma)."""
    x = matrix.to_csr()
    sig, u = golub_kahan_topk(x, cfg.f, cfg)
    return SpectralEmbedding(m=matrix.m, f=cfg.f, coords=u * sig, spectrum=sig)
