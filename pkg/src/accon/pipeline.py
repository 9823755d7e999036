"""Run stages behind the CLI: each takes a validated RunConfig and an output dir.

Everything written here, apart from ``timing.csv``, is a pure function of
the config and seed, so reruns are byte-identical.
"""

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .data import LabeledDataset, generate, split
from .errors import AcconError, CheckFailure, InputError
from .losses import accon_batch_loss, bound_diagnostics, combined_loss, regression_loss
from .metrics import compute_metrics, geometry_report, shot_split_metrics, write_pairs_csv
from .model import ModelConfig, forward, init_params, load_checkpoint, predict, save_checkpoint
from .pairing import build_pair_sets
from .seeding import STREAMS, subseed, substream
from .train import fit, fit_free_embeddings, fit_two_stage

DATA_FILES = ("train.csv", "val.csv", "test.csv")
MANIFEST = "manifest.json"


# ---------------------------------------------------------------------------
# file helpers


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_clean(obj), fh, indent=2, allow_nan=False)
        fh.write("\n")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    return format(v, ".17g") if math.isfinite(v) else ""


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def archive_config(cfg, out):
    write_json(Path(out) / "config.json", cfg.model_dump(mode="json"))


# ---------------------------------------------------------------------------
# data


def dataset_spec(cfg):
    """The data spec with its seed resolved from the root seed when unset."""
    if cfg.data.seed is not None:
        return cfg.data
    return cfg.data.model_copy(update={"seed": subseed(cfg.seed, "data")})


def prepare_data(cfg):
    spec = dataset_spec(cfg)
    ds = generate(spec)
    return spec, split(ds, spec, substream(cfg.seed, "split"))


def gen_data(cfg, out):
    out = Path(out)
    data_dir = out / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    spec, parts = prepare_data(cfg)
    for name, part in zip(DATA_FILES, parts):
        part.to_csv(data_dir / name)
    edges = np.linspace(spec.label_range.y_min, spec.label_range.y_max, spec.dir_bins + 1)
    manifest = {
        "format": "accon-dataset",
        "version": 1,
        "root_seed": cfg.seed,
        "data_seed": spec.seed,
        "split_stream": STREAMS["split"],
        "spec": spec.model_dump(mode="json"),
        "counts": {n: len(p) for n, p in zip(("train", "val", "test"), parts)},
        "histogram_edges": edges.tolist(),
        "histograms": {n: p.histogram(spec.dir_bins).tolist() for n, p in zip(("train", "val", "test"), parts)},
    }
    write_json(data_dir / MANIFEST, manifest)
    archive_config(cfg, out)
    return manifest


def resolve_data_dir(cfg, out):
    return Path(cfg.data_dir) if cfg.data_dir else Path(out) / "data"


def load_data(cfg, data_dir):
    data_dir = Path(data_dir)
    missing = [n for n in (*DATA_FILES, MANIFEST) if not (data_dir / n).is_file()]
    if missing:
        raise InputError(f"missing dataset files in {data_dir}: {', '.join(missing)} (run gen-data first)")
    with open(data_dir / MANIFEST, encoding="utf-8") as fh:
        manifest = json.load(fh)
    rng_spec = manifest.get("spec", {}).get("label_range")
    if rng_spec != cfg.data.label_range.model_dump(mode="json"):
        raise InputError(f"{data_dir}: label range {rng_spec} does not match config")
    parts = tuple(LabeledDataset.from_csv(data_dir / n, cfg.data.label_range) for n in DATA_FILES)
    for name, part in zip(DATA_FILES, parts):
        if len(part) and part.input_dim != cfg.model.input_dim:
            raise InputError(f"{data_dir / name}: {part.input_dim} features, model expects {cfg.model.input_dim}")
    if len(parts[0]) == 0:
        raise InputError(f"{data_dir / 'train.csv'} is empty")
    return parts


# ---------------------------------------------------------------------------
# training and evaluation


def shot_edges(cfg):
    r = cfg.data.label_range
    n = max(1, math.ceil(r.width / cfg.eval.shot_bin_width - 1e-9))
    return np.linspace(r.y_min, r.y_max, n + 1)


def evaluate(params, model_cfg, cfg, train_ds, test_ds):
    """Test metrics (with shot split) and the embedding geometry report."""
    yhat, z = predict(params, test_ds.x, model_cfg)
    edges = shot_edges(cfg)
    hist = np.histogram(train_ds.y, bins=edges)[0]
    report = compute_metrics(yhat, test_ds.y, cfg.eval.gm_eps)
    shot = shot_split_metrics(
        yhat, test_ds.y, hist, edges, cfg.eval.many_min, cfg.eval.few_max, cfg.eval.gm_eps
    )
    report.shot = {k: (v.to_dict() if hasattr(v, "to_dict") else v) for k, v in shot.items()}
    geo = geometry_report(
        z, test_ds.y, cfg.data.label_range, cfg.eval.geometry_bins, seed=subseed(cfg.seed, "geometry")
    )
    return report, geo, yhat, z


def run_fit(cfg, train_ds, val_ds, callback=None):
    params = init_params(cfg.model, substream(cfg.seed, "init"))
    fn = fit_two_stage if cfg.train.mode == "two_stage" else fit
    return fn(params, cfg.model, train_ds, val_ds, cfg.train, cfg.loss, cfg.augment, seed=cfg.seed, callback=callback)


EPOCH_COLUMNS = (
    "epoch", "stage", "lr", "loss_total", "loss_reg", "loss_accon", "reg_weight", "accon_weight",
    "val_mae", "val_mse", "val_gm", "val_r2", "grad_norm_enc", "grad_norm_proj", "grad_norm_pred",
    "degenerate_rows",
)


def _epoch_rows(records):
    for r in records:
        yield [
            r.epoch, r.stage, r.lr, r.loss_total, r.loss_reg, r.loss_accon, r.reg_weight, r.accon_weight,
            r.val_mae, r.val_mse, r.val_gm, r.val_r2, r.grad_norms.get("enc"), r.grad_norms.get("proj"),
            r.grad_norms.get("pred"), r.degenerate_rows,
        ]


def _train_one(cfg, out, parts):
    out = Path(out)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    train_ds, val_ds, test_ds = parts
    result = run_fit(cfg, train_ds, val_ds)
    write_csv(out / "epochs.csv", EPOCH_COLUMNS, _epoch_rows(result.records))
    write_csv(out / "timing.csv", ("epoch", "stage", "wall_ms"),
              ([r.epoch, r.stage, r.wall_ms] for r in result.records))
    save_checkpoint(out / "checkpoints" / "best.json", result.best_params, cfg.model, {"epoch": result.best_epoch})
    save_checkpoint(out / "checkpoints" / "final.json", result.params, cfg.model, {"epoch": len(result.records)})

    best_val = None
    if len(val_ds) >= 2:
        yv, _ = predict(result.best_params, val_ds.x, cfg.model)
        best_val = compute_metrics(yv, val_ds.y, cfg.eval.gm_eps).to_dict()
    report, geo, _, _ = evaluate(result.best_params, cfg.model, cfg, train_ds, test_ds)
    geo.write_curve_csv(out / "geometry_curve.csv")
    traces = {
        "total": [r.loss_total for r in result.records],
        "reg": [r.loss_reg for r in result.records],
    }
    if any(r.loss_accon is not None for r in result.records):
        traces["accon"] = [r.loss_accon for r in result.records]
    summary = {
        "mode": cfg.train.mode,
        "seed": cfg.seed,
        "gamma": cfg.loss.gamma,
        "tau": cfg.loss.tau,
        "epochs": len(result.records),
        "best_epoch": result.best_epoch,
        "best_val": best_val,
        "test": report.to_dict(),
        "geometry": geo.to_dict(),
        "loss_trace": traces,
    }
    write_json(out / "summary.json", summary)
    archive_config(cfg, out)
    return summary


def _free_embedding(cfg, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    fe = cfg.free_embedding
    r = cfg.data.label_range
    labels = np.linspace(r.y_min, r.y_max, fe.n_labels)
    loss_cfg = cfg.loss if fe.tau is None else cfg.loss.model_copy(update={"tau": fe.tau})
    train_cfg = cfg.train.model_copy(update={"lr0": fe.lr, "lr_after": fe.lr})
    res = fit_free_embeddings(labels, fe.dim, train_cfg, loss_cfg, r, seed=cfg.seed, steps=fe.steps)
    geo = geometry_report(res.embeddings, res.labels, r, cfg.eval.geometry_bins)
    write_csv(out / "free_trace.csv", ("step", "loss", "alignment_error"),
              ([k + 1, l, a] for k, (l, a) in enumerate(zip(res.losses, res.alignment))))
    geo.write_curve_csv(out / "geometry_curve.csv")
    summary = {
        "mode": "free_embedding",
        "seed": cfg.seed,
        "tau": loss_cfg.tau,
        "steps": fe.steps,
        "labels": res.labels.tolist(),
        "embeddings": res.embeddings.tolist(),
        "loss_first": res.losses[0],
        "loss_final": res.losses[-1],
        "alignment_first": res.alignment[0],
        "alignment_final": res.alignment[-1],
        "geometry": geo.to_dict(),
    }
    write_json(out / "summary.json", summary)
    archive_config(cfg, out)
    return summary


def train(cfg, out):
    if cfg.train.mode == "free_embedding":
        return _free_embedding(cfg, out)
    parts = load_data(cfg, resolve_data_dir(cfg, out))
    summary = _train_one(cfg, out, parts)
    if cfg.compare_vanilla and cfg.loss.gamma > 0:
        vcfg = cfg.with_overrides(loss=cfg.loss.model_copy(update={"gamma": 0.0}), compare_vanilla=False)
        vanilla = _train_one(vcfg, Path(out) / "vanilla", parts)
        summary["vanilla"] = {
            "test_mae": vanilla["test"]["mae"],
            "geometry_pearson": vanilla["geometry"]["pearson"],
        }
        summary["deltas"] = {
            "mae": summary["test"]["mae"] - vanilla["test"]["mae"],
            "geometry_pearson": summary["geometry"]["pearson"] - vanilla["geometry"]["pearson"],
        }
        write_json(Path(out) / "summary.json", summary)
    return summary


def eval_run(cfg, out, checkpoint=None):
    out = Path(out)
    ckpt = Path(checkpoint) if checkpoint else out / "checkpoints" / "best.json"
    if not ckpt.is_file():
        raise InputError(f"checkpoint not found: {ckpt} (run train first)")
    params, model_cfg = load_checkpoint(ckpt)
    if model_cfg.input_dim != cfg.data.input_dim:
        raise InputError(f"checkpoint expects {model_cfg.input_dim} features, data has {cfg.data.input_dim}")
    train_ds, val_ds, test_ds = load_data(cfg.with_overrides(model=model_cfg), resolve_data_dir(cfg, out))
    report, geo, _, z = evaluate(params, model_cfg, cfg, train_ds, test_ds)
    dest = out / "eval"
    dest.mkdir(parents=True, exist_ok=True)
    metrics = {"checkpoint": ckpt.name, "test": report.to_dict()}
    if len(val_ds) >= 2:
        yv, _ = predict(params, val_ds.x, model_cfg)
        metrics["val"] = compute_metrics(yv, val_ds.y, cfg.eval.gm_eps).to_dict()
    write_json(dest / "metrics.json", metrics)
    write_json(dest / "geometry.json", geo.to_dict())
    geo.write_curve_csv(dest / "geometry_curve.csv")
    write_pairs_csv(dest / "pairs.csv", z, test_ds.y, cfg.data.label_range)
    return metrics


@dataclass
class PairedOutcome:
    seed: int
    vanilla_mae: float
    accon_mae: float
    vanilla_pearson: float
    accon_pearson: float


def paired_study(cfg, seeds):
    """Vanilla (gamma 0) and ACCon runs sharing data, split and init per seed."""
    out = []
    for seed in seeds:
        base = cfg.with_overrides(seed=seed)
        _, (train_ds, val_ds, test_ds) = prepare_data(base)
        row = {}
        for tag, gamma in (("vanilla", 0.0), ("accon", cfg.loss.gamma)):
            run = base.with_overrides(loss=base.loss.model_copy(update={"gamma": gamma}))
            res = run_fit(run, train_ds, val_ds)
            report, geo, _, _ = evaluate(res.best_params, run.model, run, train_ds, test_ds)
            row[tag] = (report.mae, geo.pearson)
        out.append(PairedOutcome(seed, row["vanilla"][0], row["accon"][0], row["vanilla"][1], row["accon"][1]))
    return out


# ---------------------------------------------------------------------------
# gradcheck


@dataclass
class GradcheckCase:
    index: int
    n_rows: int
    input_dim: int
    proj_dim: int
    hidden: int
    activation: str
    reg_kind: str
    tau: float
    attempts: int
    max_rel_error: float
    worst_param: str
    worst_index: tuple
    analytic: float
    numeric: float
    n_checked: int


def _smooth_enough(params, model_cfg, x, y, loss_cfg, pairs, margin):
    out = forward(params, x, model_cfg)
    if np.linalg.norm(out.projection.data, axis=1).min() < margin:
        return False
    if model_cfg.activation == "relu":
        pre = x @ params["enc0.w"].data + params["enc0.b"].data
        if np.abs(pre).min() < margin:
            return False
    if loss_cfg.reg_kind == "mae" and np.abs(out.prediction.data - y).min() < margin:
        return False
    c = out.contrast.data @ out.contrast.data.T
    if pairs.negative.any() and np.abs(c[pairs.negative]).max() > 1.0 - margin:
        return False
    return True


def _resolvable(f, params, gc):
    """Every gradient entry sits above the central-difference noise floor.

    Rounding in ``f`` limits a central difference to about
    ``eps_mach * |f| / h``; entries smaller than ``1/tol`` times that (for
    instance a saturated contrastive term meeting exactly cancelling MAE
    signs) cannot be resolved to ``tol`` relative error by any step size.
    """
    ts = params.parameters()
    ad.zero_grad(ts)
    loss = f()
    ad.backward(loss)
    floor = np.finfo(float).eps * max(1.0, abs(loss.item())) / gc.h / gc.tol
    ok = all(t.grad is not None and np.abs(t.grad).min() > floor for t in ts)
    ad.zero_grad(ts)
    return ok


def _gradcheck_case(k, rng, cfg):
    gc = cfg.gradcheck
    r = cfg.data.label_range
    for attempt in range(1, 101):
        n = int(rng.integers(2, max(2, gc.max_samples // 2) + 1))
        d_in = int(rng.integers(1, gc.max_input_dim + 1))
        proj = int(rng.integers(2, gc.max_proj_dim + 1))
        hidden = int(rng.integers(2, 6))
        activation = ("tanh", "relu")[int(rng.integers(2))]
        reg_kind = ("mae", "mse")[int(rng.integers(2))]
        tau = float(gc.taus[k % len(gc.taus)])
        model_cfg = ModelConfig(input_dim=d_in, encoder_layers=(hidden,), activation=activation, proj_dim=proj)
        loss_cfg = cfg.loss.model_copy(update={"tau": tau, "eps": gc.eps, "reg_kind": reg_kind})
        params = init_params(model_cfg, rng)
        # spread labels over a few coarse values so positives beyond the twin view occur
        y = r.y_min + r.width * rng.integers(0, 4, size=n) / 3.0 + rng.uniform(0, 0.5, size=n)
        y = np.minimum(y, r.y_max)
        x = rng.normal(size=(2 * n, d_in))
        y2 = np.concatenate([y, y])
        pairs = build_pair_sets(y2, loss_cfg.bin)
        if not (pairs.negative.any() and _smooth_enough(params, model_cfg, x, y2, loss_cfg, pairs, gc.smooth_margin)):
            continue

        def f(params=params, model_cfg=model_cfg, x=x, y2=y2, pairs=pairs, loss_cfg=loss_cfg, reg_kind=reg_kind):
            out = forward(params, x, model_cfg)
            reg = regression_loss(out.prediction, y2, reg_kind)
            acc = accon_batch_loss(out.contrast, y2, pairs, loss_cfg, r)
            return combined_loss(reg, acc, loss_cfg.gamma)

        if _resolvable(f, params, gc):
            attempts = attempt
            break
    else:
        raise CheckFailure(f"gradcheck case {k}: no smooth configuration found in 100 draws")

    names = params.names()
    rep = ad.gradcheck(f, [params[nm] for nm in names], h=gc.h)
    return GradcheckCase(
        k, 2 * n, d_in, proj, hidden, activation, reg_kind, tau, attempts, rep.max_rel_error,
        names[rep.worst_param], tuple(int(i) for i in rep.worst_index), rep.analytic, rep.numeric, rep.n_checked,
    )


def gradcheck_run(cfg, out=None):
    """Gradient check of the combined loss over model parameters on random small cases.

    Every case has at least one negative pair so the contrastive term is
    live.  Cases near non-differentiable points (relu kinks, MAE residuals
    at zero, negative-pair cosines at the clip, vanishing rows) are redrawn.  Raises CheckFailure
    naming the worst coordinate when any case exceeds the tolerance.
    """
    rng = substream(cfg.seed, "gradcheck")
    cases = [_gradcheck_case(k, rng, cfg) for k in range(cfg.gradcheck.n_configs)]
    worst = max(cases, key=lambda c: c.max_rel_error)
    report = {
        "n_configs": len(cases),
        "tol": cfg.gradcheck.tol,
        "max_rel_error": worst.max_rel_error,
        "passed": worst.max_rel_error <= cfg.gradcheck.tol,
        "worst": {"case": worst.index, "param": worst.worst_param, "index": list(worst.worst_index),
                  "analytic": worst.analytic, "numeric": worst.numeric},
        "cases": [c.__dict__ for c in cases],
    }
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        write_json(Path(out) / "gradcheck.json", report)
        archive_config(cfg, out)
    if not report["passed"]:
        raise CheckFailure(
            f"gradcheck failed: max relative error {worst.max_rel_error:.3e} > {cfg.gradcheck.tol:g} "
            f"at case {worst.index}, {worst.worst_param}{list(worst.worst_index)} "
            f"(analytic {worst.analytic!r}, numeric {worst.numeric!r})"
        )
    return report


# ---------------------------------------------------------------------------
# boundcheck


def _random_batch(rng, cfg, single_label):
    bc = cfg.boundcheck
    r = cfg.data.label_range
    n = int(rng.integers(1, max(1, bc.max_samples // 2) + 1))
    dim = int(rng.integers(2, bc.max_dim + 1))
    if single_label:
        y = np.full(n, r.y_min + r.width * rng.random())
    elif rng.random() < 0.5:
        y = r.y_min + r.width * rng.random(n)
    else:
        y = r.y_min + np.floor(r.width * rng.random(n) / 10.0) * 10.0
    z = rng.normal(size=(2 * n, dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return np.concatenate([y, y]), z


def _gap(z, y, pairs, loss_cfg, r):
    rep = bound_diagnostics(z, y, pairs, loss_cfg, r)
    return rep.l_accon - rep.l_star_stated, rep


def _hill_climb(rng, z, y, pairs, loss_cfg, r, steps):
    """Greedy random search lowering ``L - L*_stated``; checks the inequality at every accepted step."""
    gap, rep = _gap(z, y, pairs, loss_cfg, r)
    worst_margin = rep.min_margin
    scale = 0.3
    for _ in range(steps):
        cand = z + scale * rng.normal(size=z.shape)
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        g, cand_rep = _gap(cand, y, pairs, loss_cfg, r)
        worst_margin = min(worst_margin, cand_rep.min_margin)
        if g < gap:
            z, gap, rep = cand, g, cand_rep
        else:
            scale = max(scale * 0.97, 1e-3)
    return gap, worst_margin, rep


def boundcheck_run(cfg, out=None):
    """Survey the bound diagnostics over random batches.

    The per-anchor inequality is asserted (CheckFailure naming the batch
    seed); the two closed-form bound variants are only reported.
    """
    bc = cfg.boundcheck
    r = cfg.data.label_range
    base = subseed(cfg.seed, "boundcheck")
    rows, violations = [], []
    hill = []
    for b in range(bc.n_batches):
        batch_seed = base + b
        rng = np.random.default_rng(batch_seed)
        single = bool(rng.random() < bc.single_label_fraction)
        y, z = _random_batch(rng, cfg, single)
        tau = float(bc.taus[b % len(bc.taus)])
        loss_cfg = cfg.loss.model_copy(update={"tau": tau})
        pairs = build_pair_sets(y, loss_cfg.bin)
        rep = bound_diagnostics(z, y, pairs, loss_cfg, r)
        min_margin = rep.min_margin
        if b < bc.hill_climb_batches and bc.hill_climb_steps > 0:
            gap, climb_margin, climbed = _hill_climb(rng, z, y, pairs, loss_cfg, r, bc.hill_climb_steps)
            hill.append({"batch_seed": batch_seed, "min_gap": gap, "min_margin": climb_margin,
                         "stated_ok": climbed.stated_ok, "derived_ok": climbed.derived_ok})
            min_margin = min(min_margin, climb_margin)
        ok = min_margin >= -1e-9
        if not ok:
            violations.append(batch_seed)
        rows.append([batch_seed, len(y), z.shape[1], tau, single, rep.l_accon, rep.l_star_stated,
                     rep.l_star_derived, min_margin, ok, rep.stated_ok, rep.derived_ok])
    n = len(rows)
    report = {
        "n_batches": n,
        "intermediate_ok": not violations,
        "violating_batch_seeds": violations,
        "min_margin": min(row[8] for row in rows),
        "stated_pass_fraction": sum(row[10] for row in rows) / n,
        "derived_pass_fraction": sum(row[11] for row in rows) / n,
        "per_tau": {
            format(t, "g"): {
                "n": sum(1 for row in rows if row[3] == t),
                "stated_pass_fraction": _frac([row[10] for row in rows if row[3] == t]),
                "derived_pass_fraction": _frac([row[11] for row in rows if row[3] == t]),
            }
            for t in dict.fromkeys(float(t) for t in bc.taus)
        },
        "hill_climb": hill,
    }
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "boundcheck.json", report)
        write_csv(out / "boundcheck_batches.csv",
                  ("batch_seed", "n_rows", "dim", "tau", "single_label", "l_accon", "l_star_stated",
                   "l_star_derived", "min_margin", "intermediate_ok", "stated_ok", "derived_ok"), rows)
        archive_config(cfg, out)
    if violations:
        raise CheckFailure(
            f"per-anchor inequality violated on {len(violations)} batch(es); first batch seed {violations[0]}"
        )
    return report


def _frac(flags):
    return sum(flags) / len(flags) if flags else None


# ---------------------------------------------------------------------------
# sweep


SWEEP_COLUMNS = ("cell", "gamma", "proj_dim", "status", "test_mae", "test_mse", "test_gm", "test_r2",
                 "geometry_pearson", "best_epoch", "error")


def sweep_cells(cfg):
    dims = cfg.sweep.scaled_dims(cfg.sweep.dim_divisor or 1)
    cells = []
    if cfg.sweep.include_vanilla:
        cells.append(("vanilla", 0.0, cfg.model.proj_dim))
    for g in cfg.sweep.gammas:
        for d in dims:
            cells.append((f"g{g:g}_d{d}", float(g), int(d)))
    return cells


def _run_cell(args):
    cfg_json, name, gamma, dim, cell_dir, data_dir = args
    from .config import RunConfig

    cfg = RunConfig.model_validate_json(cfg_json)
    cell_cfg = cfg.with_overrides(
        loss=cfg.loss.model_copy(update={"gamma": gamma}),
        model=cfg.model.model_copy(update={"proj_dim": dim}),
        compare_vanilla=False,
    )
    try:
        Path(cell_dir).mkdir(parents=True, exist_ok=True)
        archive_config(cell_cfg, cell_dir)
        parts = load_data(cell_cfg, data_dir)
        s = _train_one(cell_cfg, cell_dir, parts)
        t = s["test"]
        return [name, gamma, dim, "ok", t["mae"], t["mse"], t["gm"], t["r2"], s["geometry"]["pearson"],
                s["best_epoch"], ""]
    except (AcconError, ArithmeticError, ValueError) as exc:
        return [name, gamma, dim, "failed", None, None, None, None, None, None, f"{type(exc).__name__}: {exc}"]


def sweep_threads():
    raw = os.environ.get("ACCON_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InputError(f"ACCON_THREADS must be a positive integer, got {raw!r}") from None


def sweep(cfg, out):
    out = Path(out)
    cells = sweep_cells(cfg)
    if not cells:
        raise InputError("sweep grid is empty")
    data_dir = resolve_data_dir(cfg, out)
    if not (data_dir / MANIFEST).is_file():
        gen_data(cfg, out)
    archive_config(cfg, out)
    cfg_json = cfg.model_dump_json()
    jobs = [(cfg_json, name, g, d, out / "cells" / name, data_dir) for name, g, d in cells]
    workers = min(sweep_threads(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell, jobs))
    else:
        rows = [_run_cell(j) for j in jobs]
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
    ok = [r for r in rows if r[3] == "ok"]
    vanilla = next((r for r in ok if r[0] == "vanilla"), None)
    accon = [r for r in ok if r[0] != "vanilla"]
    summary = {
        "n_cells": len(rows),
        "n_failed": len(rows) - len(ok),
        "vanilla_mae": vanilla[4] if vanilla else None,
        "accon_beats_vanilla_fraction": (
            sum(r[4] <= vanilla[4] for r in accon) / len(accon) if vanilla and accon else None
        ),
    }
    write_json(out / "sweep.json", summary)
    return rows, summary
