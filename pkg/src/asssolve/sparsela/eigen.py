"""Extreme-eigenvalue estimates and small dense eigensolvers.

The dense solvers exist to check spectral claims at desk scale:
``dense_eig_symmetric`` runs cyclic Jacobi with a round-robin ordering so
that n/2 disjoint rotations are applied per numpy call, and
``dense_eig_general`` reduces to Hessenberg form and runs the Francis
double-shift QR iteration.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .cholesky import cholesky_factor
from .csr import CsrMatrix
from .krylov import KrylovConfig, as_operator


class EigenConvergenceError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class EigenEstimate:
    value: float
    converged: bool
    iterations: int

    def __float__(self) -> float:
        return float(self.value)


POWER_CONFIG = KrylovConfig(tol_relative=1e-8, max_iterations=20000)


def _start_vector(n: int, seed: int) -> np.ndarray:
    v = np.random.default_rng(seed).standard_normal(n) + 1.0
    return v / np.linalg.norm(v)


def _rayleigh_loop(step, apply_a, n, cfg, seed, x0=None):
    if x0 is None:
        v = _start_vector(n, seed)
    else:
        v = np.array(x0, dtype=np.float64)
        if v.shape != (n,) or not np.any(v):
            raise ValueError(f"start vector must be a nonzero vector of length {n}")
        v /= np.linalg.norm(v)
    est = float(v @ apply_a(v))
    for it in range(1, cfg.max_iterations + 1):
        w = step(v)
        v = w / np.linalg.norm(w)
        new = float(v @ apply_a(v))
        if abs(new - est) <= cfg.tol_relative * abs(new):
            return EigenEstimate(new, True, it)
        est = new
    return EigenEstimate(est, False, cfg.max_iterations)


def power_iteration(a, n: int | None = None, cfg: KrylovConfig = POWER_CONFIG, seed: int = 0,
                    x0=None) -> EigenEstimate:
    """Largest eigenvalue of an SPD operator by the power method (Rayleigh-quotient estimate).

    The start vector is random (from ``seed``) unless ``x0`` is given.
    """
    if n is None:
        n = a.shape[0]
    apply_a = as_operator(a)
    return _rayleigh_loop(apply_a, apply_a, n, cfg, seed, x0)


def inverse_power_iteration(a: CsrMatrix, cfg: KrylovConfig = POWER_CONFIG, seed: int = 0,
                            x0=None, shift: float = 0.0) -> EigenEstimate:
    """Smallest eigenvalue of an SPD matrix; each step is one exact Cholesky solve.

    A ``shift`` below the smallest eigenvalue iterates with (A - shift I)^{-1}
    instead, which speeds convergence when the bottom of the spectrum is
    clustered.  The estimate is always the Rayleigh quotient of ``a`` itself.
    """
    shifted = a if shift == 0.0 else a.shifted(-shift)
    f = cholesky_factor(shifted)
    return _rayleigh_loop(f.solve, a.matvec, a.nrows, cfg, seed, x0)


# ---------------------------------------------------------------------------
# symmetric: parallel-order cyclic Jacobi


def _round_robin(n: int):
    """n-1 rounds of n/2 disjoint pairs covering every (p, q) once (n even)."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        half = n // 2
        p = np.array(players[:half])
        q = np.array(players[half:][::-1])
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def dense_eig_symmetric(a, tol: float = 1e-12, max_sweeps: int = 60) -> np.ndarray:
    """All eigenvalues of a dense symmetric matrix, ascending.

    Sweeps stop once the off-diagonal Frobenius norm is at most ``tol`` times
    the Frobenius norm of ``a``.
    """
    a = np.array(a, dtype=np.float64)
    n0 = a.shape[0]
    if a.shape != (n0, n0):
        raise ValueError("square matrix required")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(np.abs(a).max(), 1e-300)):
        raise ValueError("matrix is not symmetric")
    if n0 == 1:
        return a.diagonal().copy()
    n = n0 + (n0 % 2)
    if n != n0:
        padded = np.zeros((n, n))
        padded[:n0, :n0] = a
        a = padded
    a = 0.5 * (a + a.T)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n0)
    rounds = _round_robin(n)
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * scale:
            break
        for p, q in rounds:
            apq = a[p, q]
            app, aqq = a[p, p], a[q, q]
            active = np.abs(apq) > 1e-300
            theta = np.where(active, (aqq - app) / (2.0 * np.where(active, apq, 1.0)), 0.0)
            # t = sgn(theta) / (|theta| + sqrt(theta^2 + 1)), written to avoid overflow
            at = np.abs(theta)
            big = at > 1e150
            root = np.where(big, at, at * np.sqrt(1.0 + 1.0 / np.where(at > 0, at * at, 1.0)))
            root = np.where(at > 1.0, root, np.sqrt(at * at + 1.0))
            t = np.where(theta >= 0.0, 1.0, -1.0) / (at + root)
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rp, rq = a[p, :], a[q, :]
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            cp, cq = a[:, p], a[:, q]
            a[:, p] = cp * c - cq * s
            a[:, q] = cp * s + cq * c
    else:
        raise EigenConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")
    ev = np.diag(a).copy()
    if n != n0:
        # drop the zero contributed by the padding row/column
        ev = np.delete(ev, n0)
    return np.sort(ev)


# ---------------------------------------------------------------------------
# general: balancing + Householder Hessenberg + Francis double-shift QR


@numba.njit(cache=True)
def _balance(a):
    n = a.shape[0]
    radix = 2.0
    sqrdx = radix * radix
    done = False
    while not done:
        done = True
        for i in range(n):
            r = 0.0
            c = 0.0
            for j in range(n):
                if j != i:
                    c += abs(a[j, i])
                    r += abs(a[i, j])
            if c != 0.0 and r != 0.0:
                g = r / radix
                f = 1.0
                s = c + r
                while c < g:
                    f *= radix
                    c *= sqrdx
                g = r * radix
                while c > g:
                    f /= radix
                    c /= sqrdx
                if (c + r) / f < 0.95 * s:
                    done = False
                    g = 1.0 / f
                    for j in range(n):
                        a[i, j] *= g
                    for j in range(n):
                        a[j, i] *= f


@numba.njit(cache=True)
def _hessenberg(a):
    n = a.shape[0]
    for k in range(n - 2):
        x = a[k + 1 :, k].copy()
        xn = np.sqrt(np.sum(x * x))
        if xn == 0.0:
            continue
        alpha = -xn if x[0] >= 0.0 else xn
        x[0] -= alpha
        vn = np.sqrt(np.sum(x * x))
        if vn == 0.0:
            continue
        v = x / vn
        # left: rows k+1.., columns k..
        for j in range(k, n):
            d = 0.0
            for i in range(v.size):
                d += v[i] * a[k + 1 + i, j]
            d *= 2.0
            for i in range(v.size):
                a[k + 1 + i, j] -= d * v[i]
        # right: all rows, columns k+1..
        for i in range(n):
            d = 0.0
            for j in range(v.size):
                d += a[i, k + 1 + j] * v[j]
            d *= 2.0
            for j in range(v.size):
                a[i, k + 1 + j] -= d * v[j]
        for i in range(k + 2, n):
            a[i, k] = 0.0


@numba.njit(cache=True)
def _francis(a, budget):
    n = a.shape[0]
    wr = np.zeros(n)
    wi = np.zeros(n)
    anorm = 0.0
    for i in range(n):
        for j in range(max(i - 1, 0), n):
            anorm += abs(a[i, j])
    nn = n - 1
    t = 0.0
    total = 0
    x = y = z = w = p = q = r = s = 0.0
    while nn >= 0:
        its = 0
        while True:
            l = nn
            while l >= 1:
                s = abs(a[l - 1, l - 1]) + abs(a[l, l])
                if s == 0.0:
                    s = anorm
                if abs(a[l, l - 1]) + s == s:
                    a[l, l - 1] = 0.0
                    break
                l -= 1
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
                break
            y = a[nn - 1, nn - 1]
            w = a[nn, nn - 1] * a[nn - 1, nn]
            if l == nn - 1:
                p = 0.5 * (y - x)
                q = p * p + w
                z = np.sqrt(abs(q))
                x += t
                if q >= 0.0:
                    z = p + (z if p >= 0.0 else -z)
                    wr[nn - 1] = x + z
                    wr[nn] = x + z
                    if z != 0.0:
                        wr[nn] = x - w / z
                    wi[nn - 1] = 0.0
                    wi[nn] = 0.0
                else:
                    wr[nn - 1] = x + p
                    wr[nn] = x + p
                    wi[nn - 1] = z
                    wi[nn] = -z
                nn -= 2
                break
            if total >= budget:
                return wr, wi, False
            if its > 0 and its % 10 == 0:
                # exceptional shift
                t += x
                for i in range(nn + 1):
                    a[i, i] -= x
                s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                x = 0.75 * s
                y = x
                w = -0.4375 * s * s
            its += 1
            total += 1
            m = nn - 2
            while m >= l:
                z = a[m, m]
                r = x - z
                s = y - z
                p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                q = a[m + 1, m + 1] - z - r - s
                r = a[m + 2, m + 1]
                s = abs(p) + abs(q) + abs(r)
                p /= s
                q /= s
                r /= s
                if m == l:
                    break
                u = abs(a[m, m - 1]) * (abs(q) + abs(r))
                v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z) + abs(a[m + 1, m + 1]))
                if u + v == v:
                    break
                m -= 1
            for i in range(m + 2, nn + 1):
                a[i, i - 2] = 0.0
                if i != m + 2:
                    a[i, i - 3] = 0.0
            for k in range(m, nn):
                if k != m:
                    p = a[k, k - 1]
                    q = a[k + 1, k - 1]
                    r = 0.0
                    if k != nn - 1:
                        r = a[k + 2, k - 1]
                    x = abs(p) + abs(q) + abs(r)
                    if x != 0.0:
                        p /= x
                        q /= x
                        r /= x
                s = np.sqrt(p * p + q * q + r * r)
                if p < 0.0:
                    s = -s
                if s != 0.0:
                    if k == m:
                        if l != m:
                            a[k, k - 1] = -a[k, k - 1]
                    else:
                        a[k, k - 1] = -s * x
                    p += s
                    x = p / s
                    y = q / s
                    z = r / s
                    q /= p
                    r /= p
                    for j in range(k, nn + 1):
                        p = a[k, j] + q * a[k + 1, j]
                        if k != nn - 1:
                            p += r * a[k + 2, j]
                            a[k + 2, j] -= p * z
                        a[k + 1, j] -= p * y
                        a[k, j] -= p * x
                    mmin = nn if nn < k + 3 else k + 3
                    for i in range(l, mmin + 1):
                        p = x * a[i, k] + y * a[i, k + 1]
                        if k != nn - 1:
                            p += z * a[i, k + 2]
                            a[i, k + 2] -= p * r
                        a[i, k + 1] -= p * q
                        a[i, k] -= p
    return wr, wi, True


def hessenberg(a) -> np.ndarray:
    """Upper Hessenberg matrix orthogonally similar to ``a``."""
    h = np.array(a, dtype=np.float64, order="C")
    _hessenberg(h)
    return h


def dense_eig_general(a, balance: bool = True) -> np.ndarray:
    """All eigenvalues of a real square matrix as complex numbers.

    Raises EigenConvergenceError when the QR iteration needs more than 30*n
    double-shift sweeps in total.
    """
    h = np.array(a, dtype=np.float64, order="C")
    n = h.shape[0]
    if h.shape != (n, n):
        raise ValueError("square matrix required")
    if n == 0:
        return np.zeros(0, dtype=complex)
    if not np.all(np.isfinite(h)):
        raise ValueError("matrix has non-finite entries")
    if balance:
        _balance(h)
    _hessenberg(h)
    wr, wi, ok = _francis(h, 30 * n)
    if not ok:
        raise EigenConvergenceError(f"Francis QR did not converge within {30 * n} sweeps")
    ev = wr + 1j * wi
    return ev[np.lexsort((ev.imag, ev.real))]


def spectral_radius(a) -> float:
    return float(np.max(np.abs(dense_eig_general(a))))
