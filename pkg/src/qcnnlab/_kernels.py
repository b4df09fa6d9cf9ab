"""Low-level batched gate kernels.

JIT-compiled with numba when available; numpy fallbacks keep the package
functional without it.  All kernels mutate the (B, 2^n) batch in place
and index qubits by their bit position from the most significant bit.
"""
from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap if not (args and callable(args[0])) else args[0]


@njit(cache=True)
def k_apply_1q(psi: np.ndarray, step: int, u00, u01, u10, u11) -> None:
    """In-place single-qubit gate; step = 2^(n-1-q)."""
    B, N = psi.shape
    block = step * 2
    for b in range(B):
        for base in range(0, N, block):
            for off in range(step):
                i0 = base + off
                i1 = i0 + step
                a = psi[b, i0]
                c = psi[b, i1]
                psi[b, i0] = u00 * a + u01 * c
                psi[b, i1] = u10 * a + u11 * c


@njit(cache=True)
def k_apply_cz(psi: np.ndarray, mask_a: int, mask_b: int) -> None:
    B, N = psi.shape
    both = mask_a | mask_b
    for b in range(B):
        for i in range(N):
            if i & both == both:
                psi[b, i] = -psi[b, i]


@njit(cache=True)
def k_apply_cnot(psi: np.ndarray, mask_c: int, mask_t: int) -> None:
    B, N = psi.shape
    for b in range(B):
        for i in range(N):
            if (i & mask_c) == mask_c and (i & mask_t) == 0:
                j = i | mask_t
                tmp = psi[b, i]
                psi[b, i] = psi[b, j]
                psi[b, j] = tmp


@njit(cache=True)
def k_zexp(psi: np.ndarray, mask: int, out: np.ndarray) -> None:
    """<Z> per batch row; mask selects the qubit's bit."""
    B, N = psi.shape
    for b in range(B):
        acc = 0.0
        for i in range(N):
            p = psi[b, i].real ** 2 + psi[b, i].imag ** 2
            if i & mask:
                acc -= p
            else:
                acc += p
        out[b] = acc


if not HAVE_NUMBA:  # pragma: no cover
    def k_apply_1q(psi, step, u00, u01, u10, u11):  # noqa: F811
        B, N = psi.shape
        shaped = psi.reshape(B, N // (2 * step), 2, step)
        a = shaped[:, :, 0, :].copy()
        c = shaped[:, :, 1, :].copy()
        shaped[:, :, 0, :] = u00 * a + u01 * c
        shaped[:, :, 1, :] = u10 * a + u11 * c

    def k_apply_cz(psi, mask_a, mask_b):  # noqa: F811
        N = psi.shape[1]
        idx = np.arange(N)
        both = mask_a | mask_b
        psi[:, (idx & both) == both] *= -1

    def k_apply_cnot(psi, mask_c, mask_t):  # noqa: F811
        N = psi.shape[1]
        idx = np.arange(N)
        perm = np.where((idx & mask_c) == mask_c, idx ^ mask_t, idx)
        psi[:] = psi[:, perm]

    def k_zexp(psi, mask, out):  # noqa: F811
        N = psi.shape[1]
        signs = 1.0 - 2.0 * ((np.arange(N) & mask) > 0)
        out[:] = (np.abs(psi) ** 2) @ signs
