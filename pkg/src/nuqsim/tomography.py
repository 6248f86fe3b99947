"""Two-qubit state tomography from the nine Pauli settings {X,Y,Z}^2.

Pauli indices run I, X, Y, Z = 0..3 and ``M[a, b] = <P_a x P_b>`` with the
first factor on the pair's first qubit.

Maximum likelihood uses rho = T^dag T / tr(T^dag T) with T lower triangular
(real diagonal, 16 real parameters) and a multinomial likelihood normalized
per shot.  Everything is vectorized over a batch of independent problems so
that posterior replicas are fitted together:

1. damped Newton on the 16 parameters (Hessian by central differences of the
   analytic gradient) from the projected linear-inversion estimate,
2. fits that are still running restart from an accelerated projected
   gradient solution in rho,
3. fits that creep along a rank-deficient face get their negligible
   eigenvalues truncated and Newton resumes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Mapping, Sequence

import numpy as np

from .qsim import BASIS_ROTATION, PAULI, CountsRecord, DensityMatrix

PAULI_LABELS = "IXYZ"
BASES = "XYZ"
SETTING_LABELS = tuple(a + b for a, b in product(BASES, BASES))
PAULI_PRODUCTS = np.array([np.kron(PAULI[a], PAULI[b]) for a in PAULI_LABELS for b in PAULI_LABELS]).reshape(4, 4, 4, 4)

GTOL = 1e-8
MAX_ITER = 500
INIT_FLOOR = 1e-10
WARM_ITER = 50
# stages stop once the objective is certified within GAP_TOL of the optimum
GAP_TOL = 1e-8
# final acceptance when the gradient test fails on a degenerate optimum
ACCEPT_GAP = 1e-5

# (+1, -1) eigenvalue signs for outcome index 2*b0 + b1
_SIGN0 = np.array([1, 1, -1, -1])
_SIGN1 = np.array([1, -1, 1, -1])


class ConvergenceError(RuntimeError):
    """ML fit did not converge; carries the best iterate."""

    def __init__(self, msg: str, best: np.ndarray, grad_norm: np.ndarray, indices=()):
        super().__init__(msg)
        self.best = best
        self.grad_norm = grad_norm
        # batch positions of the failed fits
        self.indices = tuple(int(i) for i in indices)


@dataclass
class PauliMatrixEstimate:
    pair: tuple[int, int]
    M: np.ndarray
    # number of settings each entry was averaged over
    sources: np.ndarray = field(default_factory=lambda: np.zeros((4, 4), dtype=int))


@dataclass
class DensityMatrixEstimate:
    point: DensityMatrix
    replicas: list[DensityMatrix] = field(default_factory=list)

    def replica_array(self) -> np.ndarray:
        return np.array([r.matrix for r in self.replicas])


def measurement_settings(pair: tuple[int, int]) -> list[tuple[tuple[int, str], tuple[int, str]]]:
    """The nine (qubit, basis) settings for a pair, in SETTING_LABELS order."""
    k, q = pair
    if k == q:
        raise ValueError("pair needs two distinct qubits")
    return [((k, a), (q, b)) for a, b in product(BASES, BASES)]


def _as_prob_table(data) -> np.ndarray:
    """(9, 4) frequencies (or quasi-probabilities) in SETTING_LABELS order."""
    if isinstance(data, np.ndarray):
        if data.shape[-2:] != (9, 4):
            raise ValueError(f"expected (..., 9, 4) table, got {data.shape}")
        return data
    if not isinstance(data, Mapping):
        data = {rec.setting: rec for rec in data}
    missing = [s for s in SETTING_LABELS if s not in data]
    if missing:
        raise ValueError(f"missing tomography settings: {missing}")
    rows = []
    for s in SETTING_LABELS:
        rec = data[s]
        if isinstance(rec, CountsRecord):
            rows.append(rec.vector(2) / rec.shots)
        else:
            v = np.asarray(rec, dtype=float)
            rows.append(v / v.sum())
    return np.array(rows)


def _counts_table(data) -> np.ndarray:
    if isinstance(data, np.ndarray):
        return data
    if not isinstance(data, Mapping):
        data = {rec.setting: rec for rec in data}
    missing = [s for s in SETTING_LABELS if s not in data]
    if missing:
        raise ValueError(f"missing tomography settings: {missing}")
    return np.array([data[s].vector(2) for s in SETTING_LABELS])


def pauli_matrix_from_table(table: np.ndarray) -> np.ndarray:
    """Expectation matrix from (..., 9, 4) per-setting outcome frequencies."""
    table = np.asarray(table, dtype=float)
    out = np.zeros(table.shape[:-2] + (4, 4))
    out[..., 0, 0] = 1.0
    for s, label in enumerate(SETTING_LABELS):
        a, b = 1 + BASES.index(label[0]), 1 + BASES.index(label[1])
        p = table[..., s, :]
        out[..., a, b] = p @ (_SIGN0 * _SIGN1)
        # single-qubit marginals are shared by three settings each
        out[..., a, 0] += p @ _SIGN0 / 3
        out[..., 0, b] += p @ _SIGN1 / 3
    return out


def estimate_pauli_matrix(counts_by_setting, pair: tuple[int, int] = (0, 1)) -> PauliMatrixEstimate:
    M = pauli_matrix_from_table(_as_prob_table(counts_by_setting))
    sources = np.ones((4, 4), dtype=int)
    sources[0, 1:] = sources[1:, 0] = 3
    return PauliMatrixEstimate(tuple(pair), M, sources)


def linear_inversion_dm(M) -> np.ndarray:
    """rho = (1/4) sum M_ab P_a x P_b; Hermitian with unit trace, maybe not PSD."""
    M = M.M if isinstance(M, PauliMatrixEstimate) else np.asarray(M)
    if abs(M[..., 0, 0] - 1).max() > 1e-12:
        raise ValueError("M[I, I] must be 1")
    return np.einsum("...ab,abij->...ij", M, PAULI_PRODUCTS) / 4


def pauli_coefficients(rho: np.ndarray) -> np.ndarray:
    """Inverse of linear_inversion_dm: M_ab = tr(P_a x P_b rho)."""
    return np.einsum("abji,...ij->...ab", PAULI_PRODUCTS, rho).real


def project_physical(rho: np.ndarray) -> np.ndarray:
    """Nearest PSD unit-trace matrix in Frobenius norm (eigenvalues projected onto the simplex)."""
    return _project_batch(np.asarray(rho, dtype=complex))


def projectors(confusion: np.ndarray | None = None) -> np.ndarray:
    """POVM elements E[s, j] for setting s, observed outcome j.

    ``confusion`` is an optional column-stochastic readout map
    P(observed j | true i): one (4, 4) matrix for all settings, a (9, 4, 4)
    stack, or a (B, 9, 4, 4) batch (the result then gains the batch axis).
    """
    ideal = np.empty((9, 4, 4, 4), dtype=complex)
    for s, label in enumerate(SETTING_LABELS):
        r = np.kron(BASIS_ROTATION[label[0]], BASIS_ROTATION[label[1]])
        for i in range(4):
            ideal[s, i] = np.outer(r[i].conj(), r[i])
    if confusion is None:
        return ideal
    c = _confusion_stack(confusion)
    return np.einsum("...sji,sixy->...sjxy", c, ideal)


_OFF = np.tril_indices(4, -1)


def _params_to_t(x: np.ndarray) -> np.ndarray:
    t = np.zeros(x.shape[:-1] + (4, 4), dtype=complex)
    t[..., np.arange(4), np.arange(4)] = x[..., :4]
    t[..., _OFF[0], _OFF[1]] = x[..., 4:10] + 1j * x[..., 10:16]
    return t


def _t_to_params(t: np.ndarray) -> np.ndarray:
    d = np.diagonal(t, axis1=-2, axis2=-1).real
    off = t[..., _OFF[0], _OFF[1]]
    return np.concatenate([d, off.real, off.imag], axis=-1)


def _params_to_rho(x: np.ndarray) -> np.ndarray:
    t = _params_to_t(x)
    a = np.swapaxes(t.conj(), -1, -2) @ t
    rho = a / np.trace(a, axis1=-2, axis2=-1).real[..., None, None]
    return (rho + np.swapaxes(rho.conj(), -1, -2)) / 2


def _rho_to_params(rho: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Lower-triangular T with T^dag T = rho, after mixing in ``floor`` of 1/4.

    Built from a QR factorization of sqrt(rho), which stays exact for
    rank-deficient rho (zero eigenvalues give zero rows of T).
    """
    rho = (1 - floor) * rho + floor * np.eye(4) / 4
    lam, v = np.linalg.eigh((rho + np.swapaxes(rho.conj(), -1, -2)) / 2)
    b = np.sqrt(np.clip(lam, 0, None))[..., :, None] * np.swapaxes(v.conj(), -1, -2)
    j = np.eye(4)[::-1]
    # b j = q r  =>  rho = (j r j)^dag (j r j), and j r j is lower triangular
    _, r = np.linalg.qr(b @ j)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    phase = np.where(np.abs(d) > 0, d.conj() / np.where(np.abs(d) > 0, np.abs(d), 1), 1)
    r = phase[..., :, None] * r
    return _t_to_params(j @ r @ j)


def _objective(x, E, w):
    """KL divergence sum w log(w / p) plus (tr T^dag T - 1)^2, and its gradient.

    Written relative to the empirical entropy so that the value is small near
    the optimum and differences stay well resolved in floating point.  ``E``
    holds the flattened POVM elements, shape (36, 16) or (B, 36, 16).
    """
    t = _params_to_t(x)
    a = np.swapaxes(t.conj(), -1, -2) @ t
    tau = np.trace(a, axis1=-2, axis2=-1).real
    rho_t = (np.swapaxes(a, -1, -2) / tau[..., None, None]).reshape(a.shape[:-2] + (16,))
    if E.ndim == 2:
        p = (rho_t @ E.T).real
    else:
        p = np.einsum("bk,bjk->bj", rho_t, E).real
    p = p.reshape(w.shape)
    seen = w > 0
    safe_p = np.where(p > 0, p, 1.0)
    safe_w = np.where(seen, w, 1.0)
    bad = np.any(seen & (p <= 0), axis=(-2, -1))
    f = np.sum(np.where(seen, w * np.log(safe_w / safe_p), 0.0), axis=(-2, -1)) + (tau - 1) ** 2
    f = np.where(bad, np.inf, f)
    ratio = np.where(seen, w / safe_p, 0.0).reshape(w.shape[:-2] + (36,))
    if E.ndim == 2:
        r = ratio @ E
    else:
        r = np.einsum("bj,bjk->bk", ratio, E)
    r = r.reshape(r.shape[:-1] + (4, 4))
    wsum = w.sum(axis=(-2, -1))
    eye = np.eye(4)
    g_a = (wsum[..., None, None] * eye - r) / tau[..., None, None] + 2 * (tau - 1)[..., None, None] * eye
    return f, _t_to_params(2 * t @ g_a)


# (row, column, coefficient) of the T entry driven by each parameter
_ROW = np.concatenate([np.arange(4), _OFF[0], _OFF[0]])
_COL = np.concatenate([np.arange(4), _OFF[1], _OFF[1]])
_COEF = np.concatenate([np.ones(10), 1j * np.ones(6)])


def _hessian(x, E, w):
    """Analytic Hessian of _objective.

    With a_j = tr(T^dag T E_j) and tau = |x|^2 the objective is
    -sum w log a + W log tau + (tau - 1)^2 + const, grad a_j = 2 params(T E_j)
    and the Hessian of a_j is a fixed index pattern applied to E_j.
    """
    b = len(x)
    t = _params_to_t(x)
    tau = np.einsum("bk,bk->b", x, x)
    Em = E.reshape(E.shape[:-1] + (4, 4))
    if E.ndim == 2:
        te = np.einsum("bxy,jyz->bjxz", t, Em)
    else:
        te = t[:, None] @ Em
    # gradients of a_j: (b, 36, 16)
    ga = 2 * _t_to_params(te)
    a = np.einsum("bjk,bk->bj", ga, x) / 2
    wf = w.reshape(b, -1)
    seen = wf > 0
    safe_a = np.where(seen, a, 1.0)
    c = np.where(seen, wf / safe_a, 0.0)
    s = np.einsum("bj,bjxy->bxy", c, Em) if E.ndim == 3 else np.einsum("bj,jxy->bxy", c, Em)
    same_row = _ROW[:, None] == _ROW[None, :]
    quad = (np.conj(_COEF)[:, None] * _COEF[None, :] * s[:, _COL[None, :], _COL[:, None]]).real * same_row
    big_w = wf.sum(axis=1)
    h = -2 * quad + np.einsum("bj,bjk,bjl->bkl", np.where(seen, wf / safe_a**2, 0.0), ga, ga)
    eye = np.eye(x.shape[1])
    xx = np.einsum("bk,bl->bkl", x, x)
    h += (big_w / tau)[:, None, None] * (2 * eye - 4 * xx / tau[:, None, None])
    h += 8 * xx + 4 * (tau - 1)[:, None, None] * eye
    return (h + np.swapaxes(h, -1, -2)) / 2


def _newton(x, E, w, gtol, max_iter, rel_floor=1e-8):
    """Damped Newton with backtracking, vectorized over the batch axis.

    Negative or tiny Hessian eigenvalues are replaced by their absolute value
    (floored), which keeps every step a descent direction.  Returns the final
    iterate, objective, gradient norm, per-problem iteration count and
    whether the line search ran out of representable decrease.
    """
    x = x.copy()
    f, g = _objective(x, E, w)
    iters = np.zeros(len(x), dtype=int)
    stalled = np.zeros(len(x), dtype=bool)
    active = np.abs(g).max(axis=1) >= gtol
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        Ei = E[idx] if E.ndim == 3 else E
        ev, v = np.linalg.eigh(_hessian(x[idx], Ei, w[idx]))
        ev = np.maximum(np.abs(ev), rel_floor * np.abs(ev).max(axis=1, keepdims=True) + 1e-300)
        d = -np.einsum("bij,bj->bi", v, np.einsum("bji,bj->bi", v, g[idx]) / ev)
        slope = np.einsum("bi,bi->b", d, g[idx])
        f_before = f[idx].copy()
        step = np.ones(len(idx))
        accepted = np.zeros(len(idx), dtype=bool)
        for _ in range(50):
            todo = np.nonzero(~accepted)[0]
            if not todo.size:
                break
            sub = idx[todo]
            xt = x[sub] + step[todo, None] * d[todo]
            ft, gt = _objective(xt, E[sub] if E.ndim == 3 else E, w[sub])
            ok = ft <= f[sub] + 1e-4 * step[todo] * slope[todo]
            x[sub[ok]], f[sub[ok]], g[sub[ok]] = xt[ok], ft[ok], gt[ok]
            accepted[todo[ok]] = True
            step[todo[~ok]] *= 0.5
        # full steps that kept descending are retried longer, which lets
        # eigenvalues of rho escape from near zero in a few iterations
        grow = np.nonzero(accepted & (step == 1.0))[0]
        base = x[idx[grow]] - d[grow]
        for k in range(1, 11):
            if not grow.size:
                break
            sub = idx[grow]
            xt = base + 2.0**k * d[grow]
            ft, gt = _objective(xt, E[sub] if E.ndim == 3 else E, w[sub])
            ok = ft < f[sub]
            x[sub[ok]], f[sub[ok]], g[sub[ok]] = xt[ok], ft[ok], gt[ok]
            grow, base = grow[ok], base[ok]
        iters[idx] += 1
        # no meaningful decrease left along the Newton direction
        stuck = ~accepted | (f_before - f[idx] < 1e-14 * np.maximum(1.0, np.abs(f_before)))
        stalled[idx[stuck]] = True
        active[idx[stuck]] = False
        active[idx] &= np.abs(g[idx]).max(axis=1) >= gtol
    return x, f, np.abs(g).max(axis=1), iters, stalled


def _truncate_rank(x: np.ndarray, rel: float) -> np.ndarray:
    """Drop eigenvalues of rho below ``rel`` times the largest, then refactor."""
    rho = _params_to_rho(x)
    w, v = np.linalg.eigh(rho)
    w = np.where(w < rel * w.max(axis=-1, keepdims=True), 0.0, w)
    rho = np.einsum("...ij,...j,...kj->...ik", v, w, v.conj())
    rho /= np.trace(rho, axis1=-2, axis2=-1).real[..., None, None]
    return _rho_to_params(rho)


def _project_batch(h: np.ndarray) -> np.ndarray:
    """project_physical over a leading batch axis."""
    h = (h + np.swapaxes(h.conj(), -1, -2)) / 2
    w, v = np.linalg.eigh(h)
    u = w[..., ::-1]
    css = np.cumsum(u, axis=-1) - 1
    k = np.arange(1, 5)
    r = ((u - css / k > 0) * k).max(axis=-1)
    theta = np.take_along_axis(css, r[..., None] - 1, axis=-1) / r[..., None]
    lam = np.clip(w - theta, 0, None)
    return np.einsum("...ij,...j,...kj->...ik", v, lam, v.conj())


def _rho_objective(rho, E, w):
    """KL objective and its matrix gradient directly in rho (no trace penalty)."""
    rho_t = np.swapaxes(rho, -1, -2).reshape(rho.shape[:-2] + (16,))
    p = ((rho_t @ E.T) if E.ndim == 2 else np.einsum("bk,bjk->bj", rho_t, E)).real.reshape(w.shape)
    seen = w > 0
    safe_p = np.where(p > 0, p, 1.0)
    f = np.sum(np.where(seen, w * np.log(np.where(seen, w, 1.0) / safe_p), 0.0), axis=(-2, -1))
    f = np.where(np.any(seen & (p <= 0), axis=(-2, -1)), np.inf, f)
    ratio = np.where(seen, w / safe_p, 0.0).reshape(w.shape[:-2] + (36,))
    r = (ratio @ E) if E.ndim == 2 else np.einsum("bj,bjk->bk", ratio, E)
    return f, -r.reshape(r.shape[:-1] + (4, 4))


def _warm_start(rho, E, w, iters):
    """Accelerated projected gradient on the convex problem in rho.

    Cheap and insensitive to the rank of the optimum, so the Cholesky stage
    starts next to the solution with the right eigenvalue pattern.
    """
    x = rho.copy()
    y = x.copy()
    fx, _ = _rho_objective(x, E, w)
    tk = np.ones(len(x))
    eta = np.full(len(x), 0.1)
    for _ in range(iters):
        fy, gy = _rho_objective(y, E, w)
        for _ in range(30):
            xn = _project_batch(y - eta[:, None, None] * gy)
            fn, _ = _rho_objective(xn, E, w)
            d = xn - y
            bound = fy + np.einsum("bij,bji->b", gy, d).real + np.einsum("bij,bij->b", d.conj(), d).real / (2 * eta)
            ok = fn <= bound + 1e-15
            if ok.all():
                break
            eta = np.where(ok, eta, eta / 2)
        restart = ~(fn <= fx)
        tn = (1 + np.sqrt(1 + 4 * tk**2)) / 2
        mom = ((tk - 1) / tn)[:, None, None]
        y = np.where(restart[:, None, None], x, xn + mom * (xn - x))
        x = np.where(restart[:, None, None], x, xn)
        fx = np.where(restart, fx, fn)
        tk = np.where(restart, 1.0, tn)
        eta *= 1.2
    return x


def _initial_params(table: np.ndarray) -> np.ndarray:
    rho0 = _project_batch(linear_inversion_dm(pauli_matrix_from_table(table)))
    return _rho_to_params(rho0, floor=INIT_FLOOR)


def likelihood_gap(x, E, w) -> np.ndarray:
    """Certified bound on f(x) - min f from concavity of the log-likelihood.

    With R = sum_j (w_j / p_j) E_j, the optimum can improve the objective by
    at most lambda_max(R) - sum_j w_j.  Unlike the parameter gradient this
    does not degrade on rank-deficient optima.
    """
    rho = _params_to_rho(x).reshape(len(x), 16)
    if E.ndim == 2:
        p = (rho.conj() @ E.T).real
    else:
        p = np.einsum("bk,bjk->bj", rho.conj(), E).real
    wf = w.reshape(len(x), -1)
    ratio = np.where(wf > 0, wf / np.where(p > 0, p, 1.0), 0.0)
    if E.ndim == 2:
        r = ratio @ E
    else:
        r = np.einsum("bj,bjk->bk", ratio, E)
    r = r.reshape(len(x), 4, 4)
    r = (r + np.swapaxes(r.conj(), -1, -2)) / 2
    gap = np.linalg.eigvalsh(r)[:, -1] - wf.sum(axis=1)
    bad = np.any((wf > 0) & (p <= 0), axis=1)
    return np.where(bad, np.inf, np.maximum(gap, 0.0))


def _fw_step(x, E, w):
    """Line search along rho -> (1 - eps) rho + eps u u^dag, u the top eigenvector of R.

    This is the direction in which the optimum certified by likelihood_gap
    lies; it reopens faces that the Cholesky parameterization cannot leave.
    """
    rho = _params_to_rho(x)
    n = len(x)
    p = np.einsum("bk,...jk->bj", rho.reshape(n, 16).conj(), E).real if E.ndim == 2 else np.einsum("bk,bjk->bj", rho.reshape(n, 16).conj(), E).real
    wf = w.reshape(n, -1)
    ratio = np.where(wf > 0, wf / np.where(p > 0, p, 1.0), 0.0)
    r = (ratio @ E if E.ndim == 2 else np.einsum("bj,bjk->bk", ratio, E)).reshape(n, 4, 4)
    _, v = np.linalg.eigh((r + np.swapaxes(r.conj(), -1, -2)) / 2)
    u = v[:, :, -1]
    target = np.einsum("bi,bj->bij", u, u.conj())
    best_x, best_f = x.copy(), _objective(x, E, w)[0]
    for eps in 10.0 ** np.arange(-9, 0):
        xt = _rho_to_params((1 - eps) * rho + eps * target)
        ft, _ = _objective(xt, E, w)
        ok = ft < best_f
        best_x[ok], best_f[ok] = xt[ok], ft[ok]
    return best_x, best_f


def _fit(x0, E, w, gtol, max_iter, stage=25):
    """Newton in stages with two rescue steps for slow fits.

    With the Cholesky parameterization, optima on or near a rank-deficient
    face converge slowly.  Fits still running after the first stage are
    restarted from an accelerated projected-gradient solution in rho; after
    that, stragglers get their negligible eigenvalues truncated between
    stages.  A rescue is kept only if it does not worsen the objective.
    """
    x, f, gnorm, used, stalled = _newton(x0, E, w, gtol, min(stage, max_iter))
    done = (gnorm < gtol) | (likelihood_gap(x, E, w) < GAP_TOL)
    todo = np.nonzero(~done)[0]
    if todo.size and used.max() < max_iter:
        Et = E[todo] if E.ndim == 3 else E
        rho = _params_to_rho(x[todo])
        rho = _warm_start((1 - 1e-2) * rho + 1e-2 * np.eye(4) / 4, Et, w[todo], WARM_ITER)
        xs = _rho_to_params(rho, floor=INIT_FLOOR)
        budget = min(stage, max_iter - int(used[todo].max()))
        xn, fn, gn, it, st = _newton(xs, Et, w[todo], gtol, budget)
        better = fn <= f[todo] + 1e-12
        sel = todo[better]
        x[sel], f[sel], gnorm[sel], stalled[sel] = xn[better], fn[better], gn[better], st[better]
        used[todo] += np.maximum(it, 1)
        done[todo] = (gnorm[todo] < gtol) | (likelihood_gap(x[todo], Et, w[todo]) < GAP_TOL)
    truncations = (1e-6, 1e-4, 1e-3)
    level = 0
    while used.max() < max_iter and level < 20:
        todo = np.nonzero(~done)[0]
        if not todo.size:
            break
        Et = E[todo] if E.ndim == 3 else E
        xr = _truncate_rank(x[todo], truncations[min(level, len(truncations) - 1)])
        fr, _ = _objective(xr, Et, w[todo])
        keep = fr <= f[todo] + 1e-10
        xs = np.where(keep[:, None], xr, x[todo])
        if level % 2:
            xs, _ = _fw_step(xs, Et, w[todo])
        budget = min(stage, max_iter - int(used[todo].max()))
        xn, fn, gn, it, st = _newton(xs, Et, w[todo], gtol, budget)
        better = fn <= f[todo] + 1e-12
        sel = todo[better]
        x[sel], f[sel], gnorm[sel], stalled[sel] = xn[better], fn[better], gn[better], st[better]
        used[todo] += np.maximum(it, 1)
        done[todo] = (gnorm[todo] < gtol) | (likelihood_gap(x[todo], Et, w[todo]) < GAP_TOL)
        level += 1
    return x, f, gnorm, done


def ml_reconstruct_batch(
    counts: np.ndarray,
    confusion: np.ndarray | None = None,
    gtol: float = GTOL,
    max_iter: int = MAX_ITER,
) -> np.ndarray:
    """ML density matrices for a batch of (B, 9, 4) count tables.

    ``confusion`` (optional, shape (4, 4), (9, 4, 4) or (B, 9, 4, 4)) turns
    the fit into a readout forward model: the counts are treated as corrupted
    outcomes of the true state.  A fit has converged when the gradient norm
    is below ``gtol`` or its likelihood_gap is below ACCEPT_GAP; otherwise ConvergenceError is raised after
    ``max_iter`` Newton iterations.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.ndim == 2:
        return ml_reconstruct_batch(counts[None], confusion, gtol, max_iter)[0]
    shots = counts.sum(axis=-1, keepdims=True)
    if np.any(shots <= 0):
        raise ValueError("every setting needs at least one shot")
    w = counts / shots
    E = projectors(confusion)
    E = E.reshape(E.shape[:-4] + (36, 16))
    if E.ndim == 3 and E.shape[0] != counts.shape[0]:
        raise ValueError("per-replica confusion does not match batch size")
    start = w if confusion is None else _unconfuse(w, confusion)
    x, f, gnorm, done = _fit(_initial_params(start), E, w, gtol, max_iter)
    bad = ~done
    if bad.any():
        bad[bad] = likelihood_gap(x[bad], E[bad] if E.ndim == 3 else E, w[bad]) >= ACCEPT_GAP
    bad |= ~np.isfinite(f)
    if bad.any():
        raise ConvergenceError(
            f"ML fit did not converge for {bad.sum()} of {len(bad)} problems "
            f"(largest gradient norm {gnorm[bad].max():.3g})",
            x[bad],
            gnorm[bad],
            np.nonzero(bad)[0],
        )
    return _params_to_rho(x)


def _confusion_stack(confusion) -> np.ndarray:
    c = np.asarray(confusion, dtype=float)
    if c.shape == (4, 4):
        return np.broadcast_to(c, (9, 4, 4))
    if c.ndim in (3, 4) and c.shape[-3:] == (9, 4, 4):
        return c
    raise ValueError(f"confusion must be (4, 4), (9, 4, 4) or (B, 9, 4, 4), got {c.shape}")


def _unconfuse(w: np.ndarray, confusion) -> np.ndarray:
    """Rough starting point: invert the readout map, then clip."""
    inv = np.linalg.inv(_confusion_stack(confusion))
    p = np.clip(np.einsum("...ij,...j->...i", inv, w), 1e-6, None)
    return p / p.sum(axis=-1, keepdims=True)


def ml_reconstruct(counts_by_setting, confusion: np.ndarray | None = None) -> DensityMatrix:
    rho = ml_reconstruct_batch(_counts_table(counts_by_setting), confusion)
    out = DensityMatrix(2, rho)
    out.check()
    return out


def log_likelihood(rho: np.ndarray, counts_by_setting, confusion: np.ndarray | None = None) -> float:
    """Multinomial log-likelihood (up to the rho-independent constant)."""
    n = _counts_table(counts_by_setting)
    p = np.einsum("sjxy,yx->sj", projectors(confusion), rho).real
    with np.errstate(divide="ignore"):
        terms = np.where(n > 0, n * np.log(np.clip(p, 0, None)), 0.0)
    return float(terms.sum())


def exact_table(rho: np.ndarray, confusion: np.ndarray | None = None) -> np.ndarray:
    """(9, 4) outcome probabilities of a two-qubit state in every setting."""
    return np.einsum("sjxy,yx->sj", projectors(confusion), rho).real


def pair_counts_table(records: Mapping[str, CountsRecord] | Sequence[CountsRecord]) -> np.ndarray:
    return _counts_table(records)
