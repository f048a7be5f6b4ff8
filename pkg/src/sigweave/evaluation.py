"""Quality metrics and protocols: PSNR/SSIM, the same-category swap test, and
the probe-classifier protocol (train a small supervised model on partly
synthetic data, test on real data only).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, Sample
from .errors import InfeasibilityError, ShapeError, StratificationError
from .model import ModelState, decode, encode, exchange
from .nn import tensor as T
from .nn.tensor import Tensor

PSNR_CAP = 100.0  # reported cap for the +inf sentinel in aggregate stats


def _as_image(x) -> np.ndarray:
    arr = x.signal if isinstance(x, Sample) else np.asarray(x)
    return np.asarray(arr, dtype=np.float64)


def psnr(x, y) -> float:
    """10*log10(1/MSE) with MAX=1; returns +inf when the images are identical."""
    a, b = _as_image(x), _as_image(y)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    for img in (a, b):
        if img.min() < 0.0 or img.max() > 1.0:
            raise ValueError("psnr expects values in [0, 1]")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    r = size // 2
    g = np.exp(-np.arange(-r, r + 1, dtype=np.float64) ** 2 / (2.0 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation with a 1-D kernel along both axes."""
    win = g.size
    tmp = np.lib.stride_tricks.sliding_window_view(img, win, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(tmp, win, axis=1) @ g


def ssim(x, y, window: int = 11, sigma: float = 1.5, k1: float = 0.01,
         k2: float = 0.03, data_range: float = 1.0) -> float:
    """Mean local SSIM over Gaussian-weighted valid windows."""
    a, b = _as_image(x), _as_image(y)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < window:
        raise ValueError(f"image {a.shape} smaller than the {window}x{window} window")
    g = _gaussian_kernel(window, sigma)
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a**2
    var_b = _filter_valid(b * b, g) - mu_b**2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


@dataclass
class MetricReport:
    psnr_mean: float
    ssim_mean: float
    psnr_values: list[float]
    ssim_values: list[float]
    count: int

    def to_json(self) -> dict:
        return {
            "count": self.count,
            "psnr_mean": self.psnr_mean,
            "ssim_mean": self.ssim_mean,
            "psnr_values": self.psnr_values,
            "ssim_values": self.ssim_values,
        }

    @classmethod
    def from_scores(cls, psnr_values, ssim_values) -> "MetricReport":
        capped = [min(v, PSNR_CAP) for v in psnr_values]
        return cls(
            psnr_mean=float(np.mean(capped)),
            ssim_mean=float(np.mean(ssim_values)),
            psnr_values=list(psnr_values),
            ssim_values=list(ssim_values),
            count=len(capped),
        )


def swap_test(state: ModelState, dataset: Dataset, attribute: int, seed: int = 0,
              pairs: int = 64, same_category: bool = True, split: str | None = None) -> MetricReport:
    """Swap segment ``attribute`` from a reference into a source code, decode,
    and score the output against the original source signal.

    With same_category=True the pair shares the attribute's category, so a
    disentangled model must reproduce the source; same_category=False draws
    the contrast distribution for significance testing.
    """
    samples = [s for s in dataset.samples if split is None or s.split == split]
    eligible = []
    for i, s in enumerate(samples):
        for j, r in enumerate(samples):
            if i == j:
                continue
            same = s.scenario[attribute] == r.scenario[attribute]
            if same == same_category:
                eligible.append((i, j))
    if not eligible:
        kind = "sharing" if same_category else "differing on"
        raise InfeasibilityError(f"no sample pair {kind} attribute {attribute}")
    psnr_values, ssim_values = [], []
    for n in range(pairs):
        rng = np.random.default_rng([seed, n])
        i, j = eligible[int(rng.integers(len(eligible)))]
        src, ref = samples[i], samples[j]
        z_src = encode(state, src.signal)
        z_ref = encode(state, ref.signal)
        z_mix, _ = exchange(z_src, z_ref, attribute)
        out = np.clip(decode(state, z_mix), 0.0, 1.0)
        psnr_values.append(psnr(out, src.signal))
        ssim_values.append(ssim(out, src.signal))
    return MetricReport.from_scores(psnr_values, ssim_values)


def permutation_pvalue(high: list[float], low: list[float], permutations: int = 2000,
                       seed: int = 0) -> float:
    """One-sided permutation test for mean(high) > mean(low)."""
    a = np.minimum(np.asarray(high, dtype=np.float64), PSNR_CAP)
    b = np.minimum(np.asarray(low, dtype=np.float64), PSNR_CAP)
    observed = a.mean() - b.mean()
    pooled = np.concatenate([a, b])
    n = a.size
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(permutations):
        perm = rng.permutation(pooled)
        if perm[:n].mean() - perm[n:].mean() >= observed:
            hits += 1
    return (hits + 1) / (permutations + 1)


@dataclass
class ProbeReport:
    attribute: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    n_test: int

    def to_json(self) -> dict:
        return {
            "attribute": self.attribute, "accuracy": self.accuracy,
            "precision": self.precision, "recall": self.recall,
            "f1": self.f1, "n_test": self.n_test,
        }


def _probe_data(samples, attribute: int) -> tuple[np.ndarray, np.ndarray]:
    xs = np.stack([s.signal.reshape(-1) for s in samples]).astype(np.float32)
    ys = np.asarray([s.scenario[attribute] for s in samples], dtype=np.int64)
    return xs, ys


def probe_classify(train_set, test_set, attribute: int, seed: int = 0,
                   epochs: int = 200, learning_rate: float = 1e-3,
                   hidden: tuple[int, int] = (256, 64), batch_size: int = 32) -> ProbeReport:
    """Train a 3-layer fully connected classifier and score it on real samples.

    Synthetic samples may appear in the training set only; the test set must
    be entirely real.
    """
    train_samples = train_set.samples if isinstance(train_set, Dataset) else list(train_set)
    test_samples = test_set.samples if isinstance(test_set, Dataset) else list(test_set)
    if any(s.synthetic for s in test_samples):
        raise ValueError("probe test set must contain only real samples")
    if not train_samples or not test_samples:
        raise ValueError("probe needs non-empty train and test sets")

    x_train, y_train = _probe_data(train_samples, attribute)
    x_test, y_test = _probe_data(test_samples, attribute)
    n_classes = int(max(y_train.max(), y_test.max())) + 1
    present = set(int(c) for c in np.unique(y_train))
    missing = [c for c in range(n_classes) if c not in present]
    if missing:
        raise StratificationError(
            f"attribute {attribute}: train set missing category {missing[0]}"
        )
    if len(present) < 2:
        raise StratificationError(f"attribute {attribute}: need >= 2 categories to train")

    rng = np.random.default_rng(seed)
    dims = [x_train.shape[1], hidden[0], hidden[1], n_classes]
    params = []
    for i in range(3):
        w = Tensor((rng.standard_normal((dims[i], dims[i + 1])) / math.sqrt(dims[i])).astype(np.float32),
                   requires_grad=True)
        b = Tensor(np.zeros(dims[i + 1], dtype=np.float32), requires_grad=True)
        params += [w, b]

    def forward(xb: Tensor) -> Tensor:
        h = T.relu(T.matmul(xb, params[0]) + params[1])
        h = T.relu(T.matmul(h, params[2]) + params[3])
        return T.matmul(h, params[4]) + params[5]

    m = [np.zeros_like(p.data) for p in params]
    v = [np.zeros_like(p.data) for p in params]
    t = 0
    n = x_train.shape[0]
    for epoch in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            idx = order[lo : lo + batch_size]
            for p in params:
                p.zero_grad()
            loss = T.cross_entropy_logits(forward(Tensor(x_train[idx])), y_train[idx])
            loss.backward()
            t += 1
            for i, p in enumerate(params):
                g = p.grad
                m[i] = 0.9 * m[i] + 0.1 * g
                v[i] = 0.999 * v[i] + 0.001 * (g * g)
                m_hat = m[i] / (1.0 - 0.9**t)
                v_hat = v[i] / (1.0 - 0.999**t)
                p.data -= learning_rate * m_hat / (np.sqrt(v_hat) + 1e-8)

    with T.no_grad():
        logits = forward(Tensor(x_test))
    pred = logits.data.argmax(axis=1)
    return _probe_report(attribute, y_test, pred, n_classes)


def _probe_report(attribute: int, truth: np.ndarray, pred: np.ndarray, n_classes: int) -> ProbeReport:
    accuracy = float(np.mean(pred == truth))
    precisions, recalls, f1s = [], [], []
    for c in range(n_classes):
        tp = int(np.sum((pred == c) & (truth == c)))
        fp = int(np.sum((pred == c) & (truth != c)))
        fn = int(np.sum((pred != c) & (truth == c)))
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        precisions.append(prec)
        recalls.append(rec)
        f1s.append(f1)
    return ProbeReport(
        attribute=attribute,
        accuracy=100.0 * accuracy,
        precision=100.0 * float(np.mean(precisions)),
        recall=100.0 * float(np.mean(recalls)),
        f1=100.0 * float(np.mean(f1s)),
        n_test=int(truth.size),
    )


def write_pgm(img: np.ndarray, path) -> None:
    """Binary 8-bit PGM (P5) rounded from a [0, 1] image."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ShapeError(f"PGM dump expects a 2-D image, got shape {img.shape}")
    data = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header + data.tobytes())
