"""Slow reference implementations used as test oracles."""

import numpy as np


def _mirror_index(i, n):
    # whole-sample reflection: d c b | a b c d | c b a
    period = 2 * (n - 1)
    i = abs(i) % period
    return period - i if i >= n else i


def dense_conv(grid, kh, kv):
    """Direct 2-D convolution with the outer-product kernel."""
    h, w = grid.shape
    out = np.zeros_like(grid)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for a in range(-kv.radius, kv.radius + 1):
                for b in range(-kh.radius, kh.radius + 1):
                    acc += (
                        kv.taps[kv.radius + a]
                        * kh.taps[kh.radius + b]
                        * grid[_mirror_index(i - a, h), _mirror_index(j - b, w)]
                    )
            out[i, j] = acc
    return out


def mirror_index(i, n):
    return _mirror_index(i, n)


def median_oracle(w, radius):
    h, wd = w.shape
    out = np.empty_like(w)
    for i in range(h):
        for j in range(wd):
            vals = sorted(
                w[_mirror_index(i + a, h), _mirror_index(j + b, wd)]
                for a in range(-radius, radius + 1)
                for b in range(-radius, radius + 1)
            )
            out[i, j] = vals[len(vals) // 2]
    return out


def bilinear_oracle(target, reference, w, baseline):
    """Scalar per-pixel bilinear lookup with reference fill outside the image."""
    h, wd = target.shape
    out = np.empty_like(target)
    for i in range(h):
        for j in range(wd):
            x = j + baseline[0] * w[i, j]
            y = i + baseline[1] * w[i, j]
            if not (0 <= x <= wd - 1 and 0 <= y <= h - 1):
                out[i, j] = reference[i, j]
                continue
            x0 = min(int(np.floor(x)), wd - 2)
            y0 = min(int(np.floor(y)), h - 2)
            fx, fy = x - x0, y - y0
            out[i, j] = (
                target[y0, x0] * (1 - fx) * (1 - fy)
                + target[y0, x0 + 1] * fx * (1 - fy)
                + target[y0 + 1, x0] * (1 - fx) * fy
                + target[y0 + 1, x0 + 1] * fx * fy
            )
    return out


def dense_system(weights, irls, g, delta_I, alpha, w):
    """Normal equations built entry by entry from the energy's stencil."""
    h, wd = w.shape
    n = h * wd
    A = np.zeros((n, n))
    b = np.zeros(n)
    idx = lambda i, j: i * wd + j
    wr = weights * irls
    for i in range(h):
        for j in range(wd):
            p = idx(i, j)
            A[p, p] += np.sum(wr[:, :, i, j] * g[:, :, i, j] ** 2)
            b[p] -= np.sum(wr[:, :, i, j] * g[:, :, i, j] * delta_I[:, :, i, j])
    # lagged diffusivity from forward differences of w
    for i in range(h):
        for j in range(wd):
            dx = w[i, j + 1] - w[i, j] if j + 1 < wd else 0.0
            dy = w[i + 1, j] - w[i, j] if i + 1 < h else 0.0
            d = 1.0 / np.sqrt(dx * dx + dy * dy + 1e-6)
            for (ni, nj) in ((i, j + 1), (i + 1, j)):
                if ni < h and nj < wd:
                    p, q = idx(i, j), idx(ni, nj)
                    c = alpha * d
                    A[p, p] += c
                    A[q, q] += c
                    A[p, q] -= c
                    A[q, p] -= c
                    b[p] -= c * (w[i, j] - w[ni, nj])
                    b[q] -= c * (w[ni, nj] - w[i, j])
    return A, b


def white_ratio_oracle(sigma, n=4096, sigma0=1 / np.sqrt(2), step=0.02):
    """Power ratio for a white image by separable spatial-domain quadrature.

    The gradient spectrum factorises as a(w1) b(w2), so every expectation is a
    product of 1-D integrals; the variance of G * g^2 is evaluated as
    2 * int K(tau) C(tau)^2 dtau with C the covariance and K = G * G.
    """
    d = 2 * np.pi / n
    w = -np.pi + (np.arange(n) + 0.5) * d
    a = w ** 2 * np.exp(-sigma0 ** 2 * w ** 2)
    b = np.exp(-sigma0 ** 2 * w ** 2)

    def mean(f):
        return f.sum() * d / (2 * np.pi)

    v = mean(a) * mean(b)
    damp = np.exp(-sigma ** 2 * w ** 2)
    half = np.exp(-sigma ** 2 * w ** 2 / 2)
    eh2 = mean(a * damp) * mean(b * damp)
    egh = mean(a * half) * mean(b * half)
    sk = sigma * np.sqrt(2)
    tau = np.arange(-12 * sk, 12 * sk, step)
    K = np.exp(-tau ** 2 / (2 * sk * sk)) / (sk * np.sqrt(2 * np.pi))
    cos = np.cos(np.outer(tau, w))
    ca = cos @ a * d / (2 * np.pi)
    cb = cos @ b * d / (2 * np.pi)
    var = 2 * (K * ca ** 2).sum() * step * (K * cb ** 2).sum() * step
    return (v * v + var) / (v * eh2 + 2 * egh ** 2)
