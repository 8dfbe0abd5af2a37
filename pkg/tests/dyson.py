"""Truncated Dyson-series oracle for piecewise-constant integrands.

For integrands constant on consecutive intervals the n-th iterated integral
splits over how many of the n time points fall in each interval, giving
products of ``(-dt_j B_j)^k / k!``.  Only matrix powers are used, no
exponentials or eigendecompositions.
"""
import math

import numpy as np


def truncated_dyson(blocks, durations, order=8):
    nu = blocks[0].shape[0]
    # terms[n] = contribution of total order n over the intervals seen so far
    terms = [np.eye(nu, dtype=complex)] + [np.zeros((nu, nu), dtype=complex) for _ in range(order)]
    for B, dt in zip(blocks, durations):
        powers = [np.eye(nu, dtype=complex)]
        for k in range(1, order + 1):
            powers.append(powers[-1] @ (-dt * B) / k)
        new = []
        for n in range(order + 1):
            acc = np.zeros((nu, nu), dtype=complex)
            for k in range(n + 1):
                acc = acc + terms[n - k] @ powers[k]
            new.append(acc)
        terms = new
    return sum(terms)


def transported_potentials(vertices, phi, V, hbar):
    """``U_k^{-1} V(x_k) U_k / hbar`` along a vertex sequence (plain loop)."""
    nu = phi.rank
    U = np.eye(nu, dtype=complex)
    out = []
    for k, x in enumerate(vertices):
        if k > 0:
            U = phi(vertices[k - 1], x) @ U
        out.append(np.linalg.inv(U) @ V(x) @ U / hbar)
    return out
