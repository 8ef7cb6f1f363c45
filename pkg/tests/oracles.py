"""Independent reference implementations used as test oracles.

Everything in this module is deliberately written with a different algorithm
shape than the library code (nested loops, dense matrices, direct windowed
formulas) so agreement between the two routes is meaningful evidence.
"""

import numpy as np


def naive_conv2d(image, weights, bias=None):
    """Quadruple-loop zero-padded same cross-correlation.

    image: (H, W, Cin), weights: (Cout, Cin, k, k), bias: (Cout,) or None.
    """
    h, w, cin = image.shape
    cout, cin_w, k, _ = weights.shape
    assert cin == cin_w
    pad = (k - 1) // 2
    out = np.zeros((h, w, cout), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            for o in range(cout):
                acc = 0.0
                for i in range(cin):
                    for dy in range(k):
                        for dx in range(k):
                            yy = y + dy - pad
                            xx = x + dx - pad
                            if 0 <= yy < h and 0 <= xx < w:
                                acc += image[yy, xx, i] * weights[o, i, dy, dx]
                out[y, x, o] = acc + (bias[o] if bias is not None else 0.0)
    return out


def conv_operator_matrix(weights, height, width):
    """Dense matrix of the zero-padded same convolution as a linear operator.

    Maps flattened (H, W, Cin) to flattened (H, W, Cout). Built column by
    column through ``naive_conv2d`` on unit vectors.
    """
    cout, cin, _, _ = weights.shape
    n_in = height * width * cin
    n_out = height * width * cout
    matrix = np.zeros((n_out, n_in))
    for col in range(n_in):
        basis = np.zeros(n_in)
        basis[col] = 1.0
        image = basis.reshape(height, width, cin)
        matrix[:, col] = naive_conv2d(image, weights).ravel()
    return matrix


def dense_ista(matrix, observation_flat, lam, step, iterations):
    """Matrix-form proximal gradient on 0.5*||A z - y||^2 + lam*||z||_1."""
    z = np.zeros(matrix.shape[1])
    trace = []
    for _ in range(iterations):
        grad = matrix.T @ (matrix @ z - observation_flat)
        u = z - step * grad
        z = np.sign(u) * np.maximum(np.abs(u) - lam * step, 0.0)
        trace.append(z.copy())
    return z, trace


def dense_objective(matrix, observation_flat, lam, z):
    residual = matrix @ z - observation_flat
    return 0.5 * float(residual @ residual) + lam * float(np.abs(z).sum())


def gaussian_taps(size=11, sigma=1.5):
    half = (size - 1) / 2.0
    offsets = np.arange(size) - half
    taps = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def ssim_direct(a, b, window=11, sigma=1.5, c1=0.01**2, c2=0.03**2):
    """Direct per-pixel windowed SSIM map: explicit 2-D window applied to
    zero-padded neighborhoods, no separable blurring, no vectorized maps.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    assert a.shape == b.shape
    h, w, c = a.shape
    taps = gaussian_taps(window, sigma)
    weights = np.outer(taps, taps)
    pad = (window - 1) // 2
    pa = np.pad(a, ((pad, pad), (pad, pad), (0, 0)))
    pb = np.pad(b, ((pad, pad), (pad, pad), (0, 0)))
    out = np.zeros((h, w, c))
    for ch in range(c):
        for y in range(h):
            for x in range(w):
                wa = pa[y : y + window, x : x + window, ch]
                wb = pb[y : y + window, x : x + window, ch]
                mu_a = float((weights * wa).sum())
                mu_b = float((weights * wb).sum())
                mu_aa = float((weights * wa * wa).sum())
                mu_bb = float((weights * wb * wb).sum())
                mu_ab = float((weights * wa * wb).sum())
                var_a = mu_aa - mu_a * mu_a
                var_b = mu_bb - mu_b * mu_b
                cov = mu_ab - mu_a * mu_b
                out[y, x, ch] = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
                    (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
                )
    return out


def smooth_image(rng, size=64, channels=3):
    """Band-limited synthetic image: sums of low-frequency sinusoid products,
    rescaled per channel to [0.1, 0.9]. Smooth enough to be denoisable.
    """
    yy, xx = np.meshgrid(
        np.arange(size) / size, np.arange(size) / size, indexing="ij"
    )
    img = np.zeros((size, size, channels))
    for c in range(channels):
        acc = np.zeros((size, size))
        for _ in range(3):
            fy, fx = rng.uniform(0.5, 2.0, 2)
            py, px = rng.uniform(0.0, 1.0, 2)
            acc += rng.uniform(0.3, 1.0) * np.sin(
                2 * np.pi * (fy * yy + py)
            ) * np.sin(2 * np.pi * (fx * xx + px))
        acc = (acc - acc.min()) / (acc.max() - acc.min())
        img[:, :, c] = 0.1 + 0.8 * acc
    return img


OVERFIT_GAINS = (0.5, 0.8, 0.9)


def build_overfit_dataset(root, n_pairs=4, size=64, seed=0, noise_sigma=0.02):
    """Synthetic paired set: truth is smooth content; source applies the
    per-channel attenuation gains plus Gaussian noise.
    """
    from sinet.imageio import save_image

    rng = np.random.default_rng(seed)
    gains = np.asarray(OVERFIT_GAINS)
    (root / "raw").mkdir(parents=True, exist_ok=True)
    (root / "reference").mkdir(parents=True, exist_ok=True)
    for i in range(n_pairs):
        truth = smooth_image(rng, size=size)
        source = truth * gains + rng.normal(0.0, noise_sigma, truth.shape)
        save_image(truth, root / "reference" / f"pair{i}.png")
        save_image(source, root / "raw" / f"pair{i}.png")
