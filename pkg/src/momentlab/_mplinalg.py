"""Dense Hermitian linear algebra on lists of mpmath numbers.

Matrices are lists of rows. All routines run at the caller's mpmath
precision; real inputs stay real (mpf arithmetic is several times faster
than mpc).
"""
from __future__ import annotations

from mpmath import mp


def conj(x):
    return x.conjugate() if hasattr(x, "imag") and x.imag else x


def cholesky(G):
    """Lower-triangular L with ``G = L L^H``; None if a pivot is not positive."""
    n = len(G)
    L = [[mp.zero] * n for _ in range(n)]
    for j in range(n):
        row_j = L[j][:j]
        d = G[j][j] - mp.fdot(row_j, row_j, conjugate=True)
        d = mp.re(d)
        if not d > 0:
            return None
        ljj = mp.sqrt(d)
        L[j][j] = ljj
        for i in range(j + 1, n):
            L[i][j] = (G[i][j] - mp.fdot(L[i][:j], row_j, conjugate=True)) / ljj
    return L


def tril_inverse(L):
    n = len(L)
    inv = [[mp.zero] * n for _ in range(n)]
    for j in range(n):
        inv[j][j] = 1 / L[j][j]
        for i in range(j + 1, n):
            s = mp.fdot(L[i][j:i], [inv[m][j] for m in range(j, i)])
            inv[i][j] = -s / L[i][i]
    return inv


def inverse_from_tril_inverse(Linv):
    """``(L L^H)^{-1} = L^{-H} L^{-1}`` from the inverse factor (Hermitian)."""
    n = len(Linv)
    cols = [[Linv[m][a] for m in range(n)] for a in range(n)]
    X = [[mp.zero] * n for _ in range(n)]
    for a in range(n):
        for b in range(a, n):
            lo = b
            s = mp.fdot(cols[b][lo:], cols[a][lo:], conjugate=True)
            X[a][b] = s
            X[b][a] = conj(s)
    return X


def matmul(A, B):
    n, m = len(A), len(B[0])
    cols = [[B[r][c] for r in range(len(B))] for c in range(m)]
    return [[mp.fdot(A[i], cols[j]) for j in range(m)] for i in range(n)]


def identity_defect(A, B):
    """``max |(A B - I)_{ij}|`` as mpf."""
    n = len(A)
    cols = [[B[r][c] for r in range(len(B))] for c in range(len(B[0]))]
    worst = mp.zero
    for i in range(n):
        for j in range(n):
            e = abs(mp.fdot(A[i], cols[j]) - (1 if i == j else 0))
            if e > worst:
                worst = e
    return worst


def hermitize(X):
    n = len(X)
    for a in range(n):
        X[a][a] = mp.re(X[a][a]) if hasattr(X[a][a], "imag") else X[a][a]
        for b in range(a + 1, n):
            s = (X[a][b] + conj(X[b][a])) / 2
            X[a][b] = s
            X[b][a] = conj(s)
    return X
