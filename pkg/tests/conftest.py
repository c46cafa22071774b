import numpy as np
import pytest

from rsdf.imageio import RgbdImage


def toy_stats(n, rng, *, lab_scale=60.0):
    """Random RegionStats with n regions (weights sum to 1)."""
    from rsdf.superpixel import RegionStats

    count = rng.integers(1, 50, size=n)
    return RegionStats(
        mean_lab=np.column_stack([rng.uniform(0, 100, n), rng.uniform(-lab_scale, lab_scale, (n, 2))]),
        mean_depth=rng.uniform(0, 1, n),
        centroid=rng.uniform(0, 1, (n, 2)),
        weight=count / count.sum(),
        count=count,
    )


def blob_image(seed=0, size=64):
    """Grey-blue textured background with one red ellipse nearer the camera."""
    rng = np.random.default_rng(seed)
    rgb = np.clip(np.array([90, 110, 130]) + rng.integers(-10, 10, (size, size, 3)), 0, 255).astype(np.uint8)
    yy, xx = np.mgrid[:size, :size]
    gt = ((yy - size * 0.47) ** 2 / (size * 0.19) ** 2 + (xx - size * 0.56) ** 2 / (size * 0.22) ** 2) < 1
    rgb[gt] = [220, 40, 40]
    depth = np.where(gt, 0.3, 0.9) + rng.normal(0, 0.02, (size, size))
    return RgbdImage.from_arrays(rgb, depth, gt.astype(np.uint8))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def blob():
    return blob_image()


def naive_forward(params, x, mask=None):
    """Slow reference forward for one (32, 32, 6) patch: explicit loops, no im2col."""
    p = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}

    def conv(a, w, b):
        f, k = w.shape[0], w.shape[1]
        h, wd = a.shape[0] - k + 1, a.shape[1] - k + 1
        out = np.zeros((h, wd, f))
        for r in range(h):
            for c in range(wd):
                win = a[r : r + k, c : c + k, :]
                for o in range(f):
                    out[r, c, o] = np.sum(win * w[o]) + b[o]
        return out

    def pool(a):
        h, wd = a.shape[0] // 2, a.shape[1] // 2
        out = np.zeros((h, wd, a.shape[2]))
        for r in range(h):
            for c in range(wd):
                out[r, c] = a[2 * r : 2 * r + 2, 2 * c : 2 * c + 2].mean(axis=(0, 1))
        return out

    sig = lambda z: 1.0 / (1.0 + np.exp(-z))  # noqa: E731
    a = pool(sig(conv(x, p["conv1.weight"], p["conv1.bias"])))
    a = pool(sig(conv(a, p["conv2.weight"], p["conv2.bias"])))
    a = sig(conv(a, p["conv3.weight"], p["conv3.bias"])).ravel()
    h = np.maximum(p["fc4.weight"] @ a + p["fc4.bias"], 0.0)
    if mask is not None:
        h = h * mask
    z = p["fc5.weight"] @ h + p["fc5.bias"]
    e = np.exp(z - z.max())
    return e / e.sum()


def gradcheck(seed, batch=3, step=1e-3, per_tensor=40, gain=4.0):
    """Max relative error per tensor between backprop and central differences.

    Train mode with one dropout mask frozen for every evaluation. Small
    tensors are checked in full, larger ones on ``per_tensor`` random entries.
    """
    from rsdf.nn.network import backward, forward_batch, init_weights, loss

    rng = np.random.default_rng(seed)
    net = init_weights(seed, sigmoid_gain=gain).astype(np.float64)
    for k in net.params:
        if k.endswith(".bias"):
            net.params[k][...] = rng.normal(0, 0.1, net.params[k].shape)
    x = rng.uniform(0, 1, (batch, 32, 32, 6))
    y = rng.integers(0, 2, batch)
    mask = (rng.random((batch, 200)) < 0.5) / 0.5
    probs, cache = forward_batch(net, x, "train", mask=mask)
    grads = backward(net, cache, y)

    def f():
        return loss(forward_batch(net, x, "train", mask=mask)[0], y)

    worst = {}
    for name, param in net.params.items():
        flat = param.reshape(-1)
        idx = np.arange(flat.size) if flat.size <= per_tensor else rng.choice(flat.size, per_tensor, replace=False)
        err = 0.0
        for i in idx:
            old = flat[i]
            flat[i] = old + step
            up = f()
            flat[i] = old - step
            down = f()
            flat[i] = old
            num = (up - down) / (2 * step)
            ana = grads[name].reshape(-1)[i]
            scale = max(abs(num), abs(ana))
            if scale > 1e-7:
                err = max(err, abs(num - ana) / scale)
            else:
                err = max(err, abs(num - ana))
        worst[name] = err
    return worst
