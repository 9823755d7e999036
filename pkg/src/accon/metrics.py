"""Regression metrics, shot-split breakdowns and embedding geometry reports."""

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ContractError, DomainError

GM_EPS = 1e-8
MANY_MIN = 100
FEW_MAX = 20
PAIR_CAP = 20_000


@dataclass
class MetricReport:
    n: int
    mae: float
    mse: float
    gm: float
    r2: float | None
    pearson: float | None
    shot: dict | None = None

    def to_dict(self):
        out = asdict(self)
        if self.shot is None:
            out.pop("shot")
        return out


def _pearson(a, b):
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float((a * a).sum()) * float((b * b).sum()))
    if denom == 0.0:
        return None
    return float((a * b).sum()) / denom


def _report(yhat, y, gm_eps, strict):
    e = np.abs(yhat - y)
    n = len(y)
    mae = float(e.mean())
    mse = float((e * e).mean())
    gm = float(np.exp(np.log(e + gm_eps).mean()) - gm_eps) if gm_eps > 0 else float(np.exp(np.log(e).mean()))
    var = float(((y - y.mean()) ** 2).mean())
    if var == 0.0:
        if strict:
            raise DomainError("R^2 undefined: targets have zero variance")
        r2 = None
    else:
        r2 = 1.0 - mse / var
    return MetricReport(n, mae, mse, gm, r2, _pearson(yhat, y) if n >= 2 else None)


def compute_metrics(yhat, y, gm_eps=GM_EPS):
    """MAE, MSE, stabilised geometric-mean error, R^2 and Pearson r.

    GM is ``exp(mean(log(|e| + gm_eps))) - gm_eps``; with ``gm_eps = 0`` it is
    the plain geometric mean of absolute errors.
    """
    yhat = np.asarray(yhat, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if yhat.shape != y.shape:
        raise ContractError(f"prediction length {yhat.size} != target length {y.size}")
    if y.size < 2:
        raise ContractError("compute_metrics needs at least 2 samples")
    with np.errstate(divide="ignore"):
        return _report(yhat, y, gm_eps, strict=True)


def shot_split_metrics(yhat, y, train_hist, bin_edges, many_min=MANY_MIN, few_max=FEW_MAX, gm_eps=GM_EPS):
    """Metrics per many/medium/few-shot subset.

    Each test sample is routed by the training count of its label bin:
    ``count >= many_min`` is many, ``count < few_max`` is few, the rest medium.
    Empty subsets are omitted.  Subset R^2 or Pearson that is undefined
    (constant targets or a single sample) is reported as ``None``.
    """
    yhat = np.asarray(yhat, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    train_hist = np.asarray(train_hist)
    edges = np.asarray(bin_edges, dtype=np.float64)
    if len(edges) != len(train_hist) + 1:
        raise ContractError("histogram bins and edges do not align")
    bins = np.clip(np.searchsorted(edges, y, side="right") - 1, 0, len(train_hist) - 1)
    counts = train_hist[bins]
    routes = {
        "many": counts >= many_min,
        "medium": (counts < many_min) & (counts >= few_max),
        "few": counts < few_max,
    }
    out = {"thresholds": {"many_min": many_min, "few_max": few_max}}
    for name, sel in routes.items():
        if sel.any():
            with np.errstate(divide="ignore"):
                out[name] = _report(yhat[sel], y[sel], gm_eps, strict=False)
    return out


@dataclass
class GeometryReport:
    pearson: float
    n_samples: int
    n_pairs: int
    bins: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def write_curve_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_lo", "bin_hi", "mean_cos", "std_cos", "n_pairs"])
            for b in self.bins:
                w.writerow([_fmt(b["bin_lo"]), _fmt(b["bin_hi"]), _fmt(b["mean_cos"]), _fmt(b["std_cos"]), b["n_pairs"]])


def _fmt(v):
    return "" if v is None else format(float(v), ".17g")


def pairwise_cosines(z, y, label_range):
    """Upper-triangle pairs: (cosine, label distance / range width)."""
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    iu, ju = np.triu_indices(len(y), k=1)
    cos = (z @ z.T)[iu, ju]
    dist = np.abs(y[iu] - y[ju]) / label_range.width
    return cos, dist


def geometry_report(z, y, label_range, n_bins=10, seed=0, cap=PAIR_CAP):
    """Correlation between pairwise cosine and normalised label distance.

    Also bins pairs by distance into ``n_bins`` equal bins over [0, 1] and
    reports mean and sample std of the cosine per bin (``None`` where a bin
    has too few pairs).  More than ``cap`` samples are subsampled with ``seed``.
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(y) < 2 or np.unique(y).size < 2:
        raise DomainError("geometry report needs at least two distinct labels")
    if len(y) > cap:
        keep = np.sort(np.random.default_rng(seed).choice(len(y), size=cap, replace=False))
        z, y = z[keep], y[keep]
    cos, dist = pairwise_cosines(z, y, label_range)
    r = _pearson(cos, dist)
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    which = np.clip(np.searchsorted(edges, dist, side="right") - 1, 0, n_bins - 1)
    bins = []
    for b in range(n_bins):
        sel = cos[which == b]
        bins.append({
            "bin_lo": float(edges[b]),
            "bin_hi": float(edges[b + 1]),
            "mean_cos": float(sel.mean()) if sel.size else None,
            "std_cos": float(sel.std(ddof=1)) if sel.size >= 2 else None,
            "n_pairs": int(sel.size),
        })
    return GeometryReport(pearson=r, n_samples=len(y), n_pairs=int(cos.size), bins=bins)


def write_pairs_csv(path, z, y, label_range):
    cos, dist = pairwise_cosines(z, y, label_range)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label_distance", "cosine"])
        for d, c in zip(dist, cos):
            w.writerow([_fmt(d), _fmt(c)])
