"""Robustness protocols: accuracy under transform, classification consistency,
stability curves and noise robustness, plus the image transforms they use.

Geometric transforms act on raw [0, 1] images before normalization; noise is
added to the normalized tensor.  SDs are sample SDs (ddof=1) over trials, or
over images for consistency; a single value has SD 0.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import softmax

from .data import ImageSet

__all__ = [
    "rotate_image",
    "translate_image",
    "add_gaussian_noise",
    "TransformSpec",
    "EvalReport",
    "summarize",
    "accuracy_under_transform",
    "classification_consistency",
    "pair_agreement",
    "stability_curve",
    "noise_robustness",
    "write_reports_csv",
    "write_reports_json",
    "REPORT_COLUMNS",
]

REPORT_COLUMNS = ("variant", "metric", "transform", "magnitude", "mean", "sd", "n")
_SNAP = 1e-9


# ----------------------------------------------------------------------------
# transforms


def _array(x) -> np.ndarray:
    return np.asarray(getattr(x, "data", x))


def rotate_image(x, degrees: float) -> np.ndarray:
    """Rotate counter-clockwise about the image center (like ``np.rot90``).

    Bilinear sampling; samples outside the image read as zero.  Works on the
    last two axes of any array.  Source coordinates within 1e-9 of an integer
    are snapped, so multiples of 90 degrees move pixels exactly.
    """
    x = _array(x)
    if not np.all(np.isfinite(x)):
        raise ValueError("rotate_image: input has non-finite values")
    if degrees == 0:
        return x.copy()
    h, w = x.shape[-2:]
    theta = math.radians(degrees)
    c, s = math.cos(theta), math.sin(theta)
    cy, cx = (h - 1) / 2, (w - 1) / 2
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    yy -= cy
    xx -= cx
    sy = c * yy + s * xx + cy
    sx = -s * yy + c * xx + cx
    for a in (sy, sx):
        near = np.abs(a - np.rint(a)) < _SNAP
        a[near] = np.rint(a[near])

    y0, x0 = np.floor(sy).astype(int), np.floor(sx).astype(int)
    fy, fx = sy - y0, sx - x0
    flat = x.reshape(-1, h, w)
    out = np.zeros_like(flat, dtype=np.result_type(x, np.float32))
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            yi, xi = y0 + dy, x0 + dx
            wgt = wy * wx
            ok = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w) & (wgt != 0)
            out[:, ok] += (wgt[ok] * flat[:, yi[ok], xi[ok]]).astype(out.dtype)
    return out.reshape(x.shape).astype(x.dtype, copy=False)


def translate_image(x, dx: int, dy: int) -> np.ndarray:
    """Integer shift: pixel (i, j) moves to (i + dy, j + dx); vacated pixels are zero."""
    x = _array(x)
    h, w = x.shape[-2:]
    if int(dx) != dx or int(dy) != dy:
        raise ValueError(f"translate_image: offsets must be integers, got ({dx}, {dy})")
    dx, dy = int(dx), int(dy)
    if abs(dx) >= w or abs(dy) >= h:
        raise ValueError(f"translate_image: offset ({dx}, {dy}) out of bounds for {h}x{w} image")
    out = np.zeros_like(x)
    src_y = slice(max(0, -dy), h - max(0, dy))
    dst_y = slice(max(0, dy), h - max(0, -dy))
    src_x = slice(max(0, -dx), w - max(0, dx))
    dst_x = slice(max(0, dx), w - max(0, -dx))
    out[..., dst_y, dst_x] = x[..., src_y, src_x]
    return out


def add_gaussian_noise(x, mean: float = 0.0, sigma: float = 1.0, seed=0) -> np.ndarray:
    """``x + n`` with ``n ~ Normal(mean, sigma^2)`` i.i.d., reproducible per seed."""
    x = _array(x)
    if sigma < 0:
        raise ValueError(f"noise sigma must be >= 0, got {sigma}")
    if sigma == 0 and mean == 0:
        return x.copy()
    rng = np.random.default_rng(seed)
    return (x + rng.normal(mean, sigma, size=x.shape)).astype(x.dtype, copy=False)


@dataclass(frozen=True)
class TransformSpec:
    """Bounds for a randomly sampled transform.

    rotation: angle ~ U[0, degrees].  translation: offsets ~ U{0..dx} x U{0..dy}.
    noise: fixed (mean, sigma), fresh noise per trial.
    """

    kind: str = "rotation"
    degrees: float = 0.0
    dx: int = 0
    dy: int = 0
    mean: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("rotation", "translation", "noise"):
            raise ValueError(f"transform kind must be rotation, translation or noise, got {self.kind!r}")
        if not -180 <= self.degrees <= 180:
            raise ValueError(f"rotation must be within [-180, 180] degrees, got {self.degrees}")
        if self.sigma < 0:
            raise ValueError(f"noise sigma must be >= 0, got {self.sigma}")

    def sample(self, rng: np.random.Generator):
        if self.kind == "rotation":
            return float(rng.uniform(min(0.0, self.degrees), max(0.0, self.degrees)))
        if self.kind == "translation":
            return int(rng.integers(min(0, self.dx), max(0, self.dx) + 1)), \
                int(rng.integers(min(0, self.dy), max(0, self.dy) + 1))
        return self.sigma

    @staticmethod
    def magnitude(kind: str, value) -> float:
        if kind == "translation":
            return float(math.hypot(*value))
        return float(value)

    @property
    def label(self) -> str:
        if self.kind == "rotation":
            return f"rotation<={self.degrees:g}deg"
        if self.kind == "translation":
            return f"translation<=({self.dx},{self.dy})px"
        return f"noise(mean={self.mean:g},sigma={self.sigma:g})"


# ----------------------------------------------------------------------------
# reports


@dataclass
class EvalReport:
    variant: str
    metric: str
    transform: str
    mean: float
    sd: float
    n: int
    curve: list[tuple[float, float]] = field(default_factory=list)
    values: list[float] = field(default_factory=list)  # per trial (or per image)
    drop: float | None = None  # clean minus noisy accuracy, noise protocol only

    def __post_init__(self):
        mags = [m for m, _ in self.curve]
        if any(b <= a for a, b in zip(mags, mags[1:])):
            raise ValueError("curve magnitudes must be strictly increasing")

    def to_dict(self) -> dict:
        return asdict(self)


def summarize(values: Sequence[float]) -> tuple[float, float]:
    """(mean, sample SD) of ``values``; SD is 0 for a single value."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("no values to summarize")
    mean = float(v.mean())
    sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return mean, sd


def _curve(mags: Sequence[float], values: Sequence[float]) -> list[tuple[float, float]]:
    # average values that share a magnitude, sorted
    groups: dict[float, list[float]] = {}
    for m, v in zip(mags, values):
        groups.setdefault(float(m), []).append(float(v))
    return [(m, float(np.mean(groups[m]))) for m in sorted(groups)]


def _variant(model) -> str:
    return str(getattr(model, "variant_tag", type(model).__name__))


def _logits(model, normalized: np.ndarray, batch: int = 64) -> np.ndarray:
    outs = []
    for i in range(0, len(normalized), batch):
        out = model(normalized[i : i + batch])
        outs.append(_array(out))
    return np.concatenate(outs)


def _predict(model, raw: np.ndarray, noise: tuple[float, float, object] | None = None) -> np.ndarray:
    x = model.normalize(raw)
    if noise is not None:
        x = add_gaussian_noise(x, *noise)
    return _logits(model, x).argmax(axis=1)


def _check_data(data: ImageSet) -> None:
    if len(data) == 0:
        raise ValueError("evaluation dataset is empty")


def _transformed(spec: TransformSpec, raw: np.ndarray, value) -> np.ndarray:
    if spec.kind == "rotation":
        return rotate_image(raw, value)
    if spec.kind == "translation":
        return translate_image(raw, *value)
    return raw


def _map_trials(fn, trials: int, threads: int) -> list:
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, range(trials)))
    return [fn(t) for t in range(trials)]


# ----------------------------------------------------------------------------
# protocols


def accuracy_under_transform(model, data: ImageSet, spec: TransformSpec, trials: int = 5, seed: int = 0,
                             threads: int = 1) -> EvalReport:
    """Accuracy with one sampled transform applied to every image, per trial.

    Trial ``t`` draws from ``default_rng([seed, t])``, so results do not depend
    on ``threads``.
    """
    _check_data(data)
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")

    def trial(t: int) -> tuple[float, float]:
        rng = np.random.default_rng([seed, t])
        value = spec.sample(rng)
        noise = (spec.mean, value, rng.integers(2**63)) if spec.kind == "noise" else None
        pred = _predict(model, _transformed(spec, data.images, value), noise)
        return TransformSpec.magnitude(spec.kind, value), float(np.mean(pred == data.labels))

    results = _map_trials(trial, trials, threads)
    mags = [m for m, _ in results]
    accs = [a for _, a in results]
    mean, sd = summarize(accs)
    return EvalReport(_variant(model), "accuracy", spec.label, mean, sd, trials, _curve(mags, accs), accs)


def pair_agreement(preds: Sequence[int]) -> float:
    """Fraction of ordered pairs (i != j) of predictions that agree; 1.0 for a single prediction."""
    preds = np.asarray(preds)
    k = len(preds)
    if k < 2:
        return 1.0
    counts = np.unique(preds, return_counts=True)[1].astype(np.int64)
    return float(np.sum(counts * (counts - 1)) / (k * (k - 1)))


def _consistency(model, data: ImageSet, steps: list, apply, magnitudes: list[float] | None,
                 label: str, threads: int) -> EvalReport:
    def predict(step):
        return _predict(model, apply(data.images, step))

    preds = np.stack(_map_trials(lambda i: predict(steps[i]), len(steps), threads), axis=1)  # (N, steps)
    per_image = [pair_agreement(p) for p in preds]
    mean, sd = summarize(per_image)
    curve = []
    if magnitudes is not None:
        # fraction of images whose prediction at each step matches the first step
        curve = _curve(magnitudes, np.mean(preds == preds[:, :1], axis=0))
    return EvalReport(_variant(model), "consistency", label, mean, sd, len(data), curve, per_image)


def classification_consistency(model, data: ImageSet, rotations: Sequence[float] = tuple(range(16)),
                               max_shift: int = 12, full_grid: bool = False,
                               threads: int = 1) -> tuple[EvalReport, EvalReport]:
    """Per-image pair agreement over rotations and over translations.

    Rotations default to 0..15 degrees in 1-degree steps.  Translations are the
    diagonal (t, t) for t = 0..max_shift, or the full grid with ``full_grid``.
    Returns (rotation report, translation report).
    """
    _check_data(data)
    rotations = list(rotations)
    rot = _consistency(model, data, rotations, rotate_image, [float(r) for r in rotations],
                       f"rotation 0..{rotations[-1]:g}deg ({len(rotations)} steps)", threads)
    if full_grid:
        shifts = [(dx, dy) for dy in range(max_shift + 1) for dx in range(max_shift + 1)]
        mags, label = None, f"translation grid (0,0)..({max_shift},{max_shift}) ({len(shifts)} steps)"
    else:
        shifts = [(t, t) for t in range(max_shift + 1)]
        mags, label = [float(t) for t in range(max_shift + 1)], \
            f"translation diagonal (0,0)..({max_shift},{max_shift}) ({len(shifts)} steps)"
    trans = _consistency(model, data, shifts, lambda x, s: translate_image(x, *s), mags, label, threads)
    return rot, trans


def stability_curve(model, image: np.ndarray, label: int, kind: str = "rotation",
                    magnitudes: Sequence[float] | None = None) -> EvalReport:
    """Softmax probability of the true class at each transform magnitude.

    ``image`` is one raw (C, H, W) image.  Translation magnitudes are diagonal
    shifts (t, t).  Defaults: 0..15 degrees, or shifts 0..12.
    """
    image = _array(image)
    if kind not in ("rotation", "translation"):
        raise ValueError(f"stability kind must be rotation or translation, got {kind!r}")
    if magnitudes is None:
        magnitudes = range(16) if kind == "rotation" else range(13)
    magnitudes = [float(m) for m in magnitudes]
    if kind == "rotation":
        batch = np.stack([rotate_image(image, m) for m in magnitudes])
    else:
        batch = np.stack([translate_image(image, int(m), int(m)) for m in magnitudes])
    probs = softmax(_logits(model, model.normalize(batch)).astype(np.float64), axis=1)
    values = probs[:, label]
    mean, sd = summarize(values)
    return EvalReport(_variant(model), "stability", kind, mean, sd, len(magnitudes),
                      list(zip(magnitudes, map(float, values))), [float(v) for v in values])


def noise_robustness(model, data: ImageSet, sigma: float = 2.0, trials: int = 5, seed: int = 0,
                     mean: float = 0.0, threads: int = 1) -> EvalReport:
    """Accuracy on noise-corrupted copies of ``data`` (noise on the normalized scale).

    ``drop`` is clean accuracy minus the mean noisy accuracy.
    """
    _check_data(data)
    clean = float(np.mean(_predict(model, data.images) == data.labels))
    rep = accuracy_under_transform(model, data, TransformSpec("noise", mean=mean, sigma=sigma), trials, seed,
                                   threads)
    rep.drop = clean - rep.mean
    return rep


# ----------------------------------------------------------------------------
# report files


def _rows(reports: Sequence[EvalReport]):
    for r in reports:
        yield [r.variant, r.metric, r.transform, "all", r.mean, r.sd, r.n]
        for mag, value in r.curve:
            yield [r.variant, r.metric, r.transform, mag, value, None, None]
        if r.drop is not None:
            yield [r.variant, f"{r.metric}_drop", r.transform, "all", r.drop, r.sd, r.n]


def _cell(v) -> str:
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def write_reports_csv(reports: Sequence[EvalReport], path) -> Path:
    """One summary row per report (magnitude ``all``), then its curve rows."""
    path = Path(path)
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        w.writerows([_cell(v) for v in row] for row in _rows(reports))
    return path


def write_reports_json(reports: Sequence[EvalReport], path) -> Path:
    path = Path(path)
    rows = [dict(zip(REPORT_COLUMNS, row)) for row in _rows(reports)]
    path.write_text(json.dumps({"rows": rows, "reports": [r.to_dict() for r in reports]}, indent=2) + "\n")
    return path
