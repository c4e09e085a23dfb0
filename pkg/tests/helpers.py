"""Shared test utilities: finite differences and random unit vectors."""

import numpy as np


def fd_grad(f, x, h=1e-5):
    """Central-difference gradient of a scalar function, the reference
    oracle for every analytic gradient in the package."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for k in range(x.size):
        delta = np.zeros_like(x)
        delta[k] = h
        grad[k] = (f(x + delta) - f(x - delta)) / (2.0 * h)
    return grad


def rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), floor))


def random_unit(rng, dim):
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_unit_rows(rng, n, dim):
    x = rng.standard_normal((n, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def random_orthogonal(rng, dim):
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))
