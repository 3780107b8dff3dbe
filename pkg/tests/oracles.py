"""Independent reference computations used by the tests.

Everything here is deliberately naive: explicit loops in numpy, no torch
convolution, no FFT. The package code must agree with these, not the reverse.
"""

import numpy as np
import torch


def brute_force_degradation(image, kernels, weight_field):
    """Per-pixel spatially varying convolution with reflected borders.

    image [B, C, H, W], kernels [K_c, K, K], weight_field [B, K_c, H, W].
    At each pixel the local kernel K(x, y) = sum_j w_j(x, y) k_j is formed
    explicitly and convolved (flipped taps) with the reflected neighbourhood.
    """
    image = np.asarray(image, dtype=np.float64)
    kernels = np.asarray(kernels, dtype=np.float64)
    w = np.asarray(weight_field, dtype=np.float64)
    B, C, H, W = image.shape
    K = kernels.shape[-1]
    r = K // 2
    out = np.zeros_like(image)
    for b in range(B):
        padded = np.pad(image[b], ((0, 0), (r, r), (r, r)), mode="reflect")
        for x in range(H):
            for y in range(W):
                local = np.zeros((K, K))
                for j in range(kernels.shape[0]):
                    local += w[b, j, x, y] * kernels[j]
                for c in range(C):
                    acc = 0.0
                    for u in range(K):
                        for v in range(K):
                            # convolution: tap (u, v) reads pixel (x - (u - r), y - (v - r))
                            acc += local[u, v] * padded[c, x + r - (u - r), y + r - (v - r)]
                    out[b, c, x, y] = acc
    return out


def naive_dft2(x):
    """O(N^4) 2-D DFT of a [..., M, N] array."""
    x = np.asarray(x, dtype=np.complex128)
    M, N = x.shape[-2:]
    out = np.zeros_like(x)
    for k in range(M):
        for l in range(N):
            acc = 0
            for m in range(M):
                for n in range(N):
                    acc = acc + x[..., m, n] * np.exp(-2j * np.pi * (k * m / M + l * n / N))
            out[..., k, l] = acc
    return out


def numeric_grad(fn, tensors, step=1e-4):
    """Central differences of the scalar ``fn()`` w.r.t. every entry of ``tensors``."""
    grads = []
    for t in tensors:
        g = torch.zeros_like(t)
        flat, gflat = t.data.view(-1), g.view(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + step
            plus = fn().item()
            flat[i] = orig - step
            minus = fn().item()
            flat[i] = orig
            gflat[i] = (plus - minus) / (2 * step)
        grads.append(g)
    return grads


def numeric_grad_entries(fn, entries, step=1e-4):
    """Central differences for selected ``(tensor, flat_index)`` entries."""
    out = []
    for t, i in entries:
        flat = t.data.view(-1)
        orig = flat[i].item()
        flat[i] = orig + step
        plus = fn().item()
        flat[i] = orig - step
        minus = fn().item()
        flat[i] = orig
        out.append((plus - minus) / (2 * step))
    return torch.tensor(out, dtype=torch.float64)


def max_rel_error(analytic, numeric, floor=1e-6):
    a = torch.as_tensor(analytic).double().flatten()
    n = torch.as_tensor(numeric).double().flatten()
    denom = torch.maximum(torch.maximum(a.abs(), n.abs()), torch.full_like(a, floor))
    return ((a - n).abs() / denom).max().item()


def projected(fn, seed=0):
    """Turn a tensor-valued ``fn`` into a scalar via a fixed random projection."""
    cache = {}

    def scalar():
        out = fn()
        if "r" not in cache:
            g = torch.Generator().manual_seed(seed)
            cache["r"] = torch.randn(out.shape, generator=g, dtype=out.dtype)
        return (out * cache["r"]).sum()

    return scalar


def gradient_check(fn, tensors, step=1e-4, seed=0):
    """Max relative error between autograd and central differences."""
    scalar = projected(fn, seed)
    for t in tensors:
        t.grad = None
    scalar().backward()
    analytic = [t.grad.clone() for t in tensors]
    with torch.no_grad():
        numeric = numeric_grad(scalar, tensors, step)
    return max(max_rel_error(a, n) for a, n in zip(analytic, numeric))
