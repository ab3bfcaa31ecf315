"""Independent reference values frozen into the C++ tests.

Run: python3 tests/oracles/gen_oracles.py
Uses numpy, scipy, scikit-image, scikit-learn and torch; none of them are
build dependencies.
"""
import numpy as np
import scipy.linalg
import torch
import torch.nn.functional as F
from skimage.metrics import structural_similarity
from sklearn.metrics import roc_auc_score


def schedule():
    b = np.linspace(1e-4, 0.02, 200)
    ab = np.cumprod(1.0 - b)
    print("schedule alpha_bar[0]=%.17g alpha_bar[99]=%.17g alpha_bar[199]=%.17g" % (ab[0], ab[99], ab[199]))


def frechet():
    mu1 = np.array([0.1, -0.4, 0.7])
    mu2 = np.array([0.3, 0.2, -0.1])
    a = np.array([[1.0, 0.2, 0.1], [0.2, 0.8, -0.3], [0.1, -0.3, 1.5]])
    b = np.array([[0.5, -0.1, 0.0], [-0.1, 1.2, 0.4], [0.0, 0.4, 0.9]])
    s = scipy.linalg.sqrtm(a @ b).real
    d = np.sum((mu1 - mu2) ** 2) + np.trace(a + b - 2 * s)
    print("frechet 3d = %.17g" % d)


def ssim_case():
    i, j = np.meshgrid(np.arange(16), np.arange(16), indexing="ij")
    a = (np.sin(0.7 * i) * np.cos(0.45 * j)).astype(np.float32).astype(np.float64)
    b = (0.8 * np.sin(0.7 * i + 0.3) * np.cos(0.45 * j) + 0.1 * np.cos(1.1 * i * j / 16)).astype(np.float32).astype(np.float64)
    v = structural_similarity(a, b, data_range=2.0, gaussian_weights=True, sigma=1.5, use_sample_covariance=False)
    print("ssim pattern = %.17g" % v)


def auc_case():
    labels = [0, 1, 1, 0, 1, 0, 0, 1, 1, 0, 1, 0]
    scores = [0.1, 0.4, 0.35, 0.8, 0.4, 0.4, 0.05, 0.9, 0.6, 0.6, 0.2, 0.3]
    print("auc ties = %.17g" % roc_auc_score(labels, scores))


def grad_cam_case():
    # Highlighter with stages {3, 4} on 8x8 single-channel input; weights are a
    # closed-form function of (parameter index, element index).
    shapes = [(3, 1, 3, 3), (3,), (4, 3, 3, 3), (4,), (2, 4), (2,)]
    params = []
    for pi, shp in enumerate(shapes):
        n = int(np.prod(shp))
        k = np.arange(n)
        vals = 0.5 * np.sin(1.3 * k + 0.7 * pi + 0.2)
        params.append(torch.tensor(vals.astype(np.float32).reshape(shp), dtype=torch.float64))
    w0, b0, w1, b1, hw, hb = params
    y, x = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
    imgs = []
    for n in range(2):
        imgs.append((0.8 * np.sin(0.9 * y + 0.4 * x + n)).astype(np.float32))
    X = torch.tensor(np.stack(imgs)[:, None], dtype=torch.float64, requires_grad=True)
    h0 = F.relu(F.conv2d(X, w0, b0, padding=1))
    h1 = F.relu(F.conv2d(F.avg_pool2d(h0, 2), w1, b1, padding=1))
    h1.retain_grad()
    logits = h1.mean(dim=(2, 3)) @ hw.T + hb
    logits[:, 1].sum().backward()
    wts = h1.grad.mean(dim=(2, 3))
    cam = F.relu((wts[:, :, None, None] * h1).sum(1, keepdim=True))
    up = F.interpolate(cam, size=(8, 8), mode="bilinear", align_corners=False)[:, 0]
    for n in range(2):
        m = up[n].detach().numpy()
        m = (m - m.min()) / (m.max() - m.min())
        print("gradcam[%d] = {%s}" % (n, ", ".join("%.9g" % v for v in m.ravel())))
    print("logits = %s" % logits.detach().numpy().ravel().tolist())


def center_gaussian():
    h, w, s = 5, 7, 0.25 * 5
    i, j = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    g = np.exp(-((i - 2) ** 2 + (j - 3) ** 2) / (2 * s * s))
    g = (g - g.min()) / (g.max() - g.min())
    print("center 5x7 (1,1)=%.17g (2,5)=%.17g (4,6)=%.17g" % (g[1, 1], g[2, 5], g[4, 6]))


if __name__ == "__main__":
    schedule()
    frechet()
    ssim_case()
    auc_case()
    grad_cam_case()
    center_gaussian()
