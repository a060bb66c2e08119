"""Pure numpy/scipy fallback for the compiled solver kernel.

Semantics must match phasetrack._kernels; when the extension is available the
test suite exercises both implementations against the same contract.
"""

import numpy as np
import scipy.sparse as sp


def cg_kernel(diag, indptr, indices, data, inv_precond, b, x, rtol, max_iter):
    """Preconditioned CG for (diag(diag) + K) x = b with K in CSR pieces.

    Warm-starts from the incoming contents of x and overwrites it with the
    solution.  Convergence is certified on the recomputed true residual, not
    just the CG recurrence.  Returns (iterations, relative residual, converged).
    """
    n = b.shape[0]
    K = sp.csr_matrix((data, indices, indptr), shape=(n, n))

    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        x[:] = 0.0
        return 0, 0.0, True
    tol = rtol * bnorm

    r = b - (diag * x + K.dot(x))
    rnorm = float(np.linalg.norm(r))
    if rnorm <= tol:
        return 0, rnorm / bnorm, True

    z = inv_precond * r
    p = z.copy()
    rz = float(r @ z)
    iters = 0
    while iters < max_iter:
        Ap = diag * p + K.dot(p)
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        iters += 1
        rnorm = float(np.linalg.norm(r))
        if rnorm <= tol:
            r = b - (diag * x + K.dot(x))
            rnorm = float(np.linalg.norm(r))
            if rnorm <= tol:
                return iters, rnorm / bnorm, True
            z = inv_precond * r
            p = z.copy()
            rz = float(r @ z)
            continue
        z = inv_precond * r
        rz_new = float(r @ z)
        p *= rz_new / rz
        p += z
        rz = rz_new
    return iters, rnorm / bnorm, False
