"""Dense float64 matrix operations with hand-derived gradients.

Every differentiable operation has a matching ``*_backward`` companion, and
``grad_check`` verifies any (value, gradients) pair against central finite
differences.  Row normalisation pre-scales each row by its largest entry
magnitude before taking the norm: this cannot overflow, and an exactly
rescaled row normalises to bit-identical output, which is what makes the
cosine losses and retrieval metrics exactly scale-invariant.
"""

import numpy as np

NORM_EPS = 1e-12


def _shape(a: np.ndarray) -> str:
    return "x".join(str(d) for d in a.shape)


def require_finite(a: np.ndarray, what: str = "array") -> np.ndarray:
    """Raise ValueError if any entry is NaN or infinite."""
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what} contains non-finite entries")
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product; the inner dimensions must agree."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {_shape(a)} @ {_shape(b)}")
    return require_finite(a @ b, "matmul result")


def matmul_backward(grad, a, b):
    """Gradients of sum(grad * (a @ b)) with respect to a and b."""
    return grad @ b.T, a.T @ grad


def _same_shape(a, b, op):
    if a.shape != b.shape:
        raise ValueError(f"{op} shape mismatch: {_shape(a)} vs {_shape(b)}")


def add(a, b):
    _same_shape(a, b, "add")
    return a + b


def add_backward(grad):
    return grad, grad


def sub(a, b):
    _same_shape(a, b, "sub")
    return a - b


def sub_backward(grad):
    return grad, -grad


def mul(a, b):
    """Elementwise (Hadamard) product."""
    _same_shape(a, b, "mul")
    return a * b


def mul_backward(grad, a, b):
    return grad * b, grad * a


def exp(a):
    with np.errstate(over="ignore"):
        out = np.exp(a)
    return require_finite(out, "exp result")


def exp_backward(grad, out):
    """out is the forward result exp(a)."""
    return grad * out


def log(a):
    if np.any(a <= 0.0):
        raise ValueError("log requires strictly positive entries")
    return np.log(a)


def log_backward(grad, a):
    return grad / a


def relu(a):
    return np.maximum(a, 0.0)


def relu_backward(grad, a):
    return grad * (a > 0.0)


def normalize_rows_fwd(m: np.ndarray, eps: float = NORM_EPS):
    """Divide each row by max(||row||_2, eps); returns (out, norms, full).

    ``norms`` is the per-row divisor actually used (column vector) and
    ``full`` marks rows that were divided by their true norm rather than by
    eps.  Rows are pre-scaled by their largest entry magnitude so the norm
    never overflows and the result is invariant under exact row rescaling.
    Zero rows pass through unchanged (0 / eps).
    """
    m = np.asarray(m, dtype=np.float64)
    scale = np.max(np.abs(m), axis=1, keepdims=True)
    safe = np.where(scale > 0.0, scale, 1.0)
    u = m / safe
    unorm = np.sqrt(np.sum(u * u, axis=1, keepdims=True))
    norms = scale * unorm
    full = norms >= eps
    out = np.empty_like(m)
    big = full[:, 0]
    out[big] = u[big] / unorm[big]
    if not big.all():
        out[~big] = m[~big] / eps
    return out, np.where(full, norms, eps), full


def normalize_rows_bwd(grad, out, norms, full):
    """Backward pass matching normalize_rows_fwd.

    For full rows: d(x/||x||) = (g - (g.v) v) / ||x|| with v the normalised
    row; for eps-clipped rows the map is linear, so the gradient is g / eps.
    """
    gv = np.sum(grad * out, axis=1, keepdims=True)
    return (grad - np.where(full, gv, 0.0) * out) / norms


def l2_normalize_rows(m: np.ndarray, eps: float = NORM_EPS) -> np.ndarray:
    """Each row divided by max(||row||_2, eps)."""
    out, _, _ = normalize_rows_fwd(m, eps)
    return out


def cosine_matrix(a: np.ndarray, b: np.ndarray, eps: float = NORM_EPS) -> np.ndarray:
    """Pairwise cosine similarities: entry (i, j) = cos(a_i, b_j)."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"cosine_matrix dim mismatch: {_shape(a)} vs {_shape(b)}")
    return l2_normalize_rows(a, eps) @ l2_normalize_rows(b, eps).T


def central_difference(f, params, step):
    """Central finite-difference gradients of a scalar function.

    ``f`` is called with the (mutated in place, then restored) parameter
    list and must return a scalar; nothing else about f is used, so this is
    independent of any analytic gradient code.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = f(params)
            flat[i] = orig - step
            down = f(params)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * step)
        grads.append(g)
    return grads


def grad_check(f, params, step: float = 1e-5) -> float:
    """Compare analytic gradients against central finite differences.

    ``f(params)`` must return ``(value, grads)`` with one gradient array per
    parameter.  Returns the worst symmetric relative error
    |a - d| / (|a| + |d| + 1e-12) over every entry; raises if the objective
    is non-finite anywhere it is evaluated.
    """
    if step <= 0.0:
        raise ValueError(f"grad_check needs step > 0, got {step}")

    def value_only(ps):
        v = float(f(ps)[0])
        if not np.isfinite(v):
            raise ValueError(f"grad_check: objective returned non-finite value {v}")
        return v

    value_only(params)
    _, analytic = f(params)
    numeric = central_difference(value_only, params, step)
    worst = 0.0
    for a, d in zip(analytic, numeric):
        if a.shape != d.shape:
            raise ValueError(f"grad_check: gradient shape {_shape(a)} != parameter shape {_shape(d)}")
        if a.size:
            err = np.abs(a - d) / (np.abs(a) + np.abs(d) + 1e-12)
            worst = max(worst, float(err.max()))
    return worst
