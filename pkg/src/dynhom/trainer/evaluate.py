"""Evaluation harness: corner error per sample, CDF over thresholds, and
slicing by dynamic-area ratio.

An estimator is any callable ``f(i1, i2) -> (3, 3) homography`` following
the package convention ``warp(i1, H) ~ i2``; samples are evaluated with
``i1 = patch_b`` and ``i2 = patch_a``, matching the ground truth stored by
the pair generator.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..datasynth.store import LoadedDataset
from ..errors import DatasetEmpty
from ..geometry import PatchFrame, mean_corner_error

DEFAULT_THRESHOLDS = tuple(np.geomspace(0.1, 20.0, 40))
DEFAULT_RATIO_THRESHOLDS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 1.0)


def identity_estimator(i1, i2):
    return np.eye(3)


def oracle_estimator(dataset: LoadedDataset):
    """Test double returning the stored ground truth (by sample identity)."""
    index = {}

    def est(i1, i2):
        return dataset.homography[index["i"]]

    est.set_index = lambda i: index.__setitem__("i", i)
    return est


def model_estimator(model, mode: str = "infer"):
    def est(i1, i2):
        return model.estimate(i1, i2, mode=mode).homography[0]

    return est


def evaluate(estimator, dataset: LoadedDataset,
             thresholds=DEFAULT_THRESHOLDS,
             ratio_thresholds=DEFAULT_RATIO_THRESHOLDS) -> dict:
    """Corner errors for every sample plus summary, CDF, and ratio slices."""
    if len(dataset) == 0:
        raise DatasetEmpty("cannot evaluate an empty dataset")
    frame = PatchFrame(dataset.patch_size, dataset.patch_size)
    errors = np.empty(len(dataset))
    for i in range(len(dataset)):
        if hasattr(estimator, "set_index"):
            estimator.set_index(i)
        h_est = estimator(dataset.patch_b[i], dataset.patch_a[i])
        errors[i] = mean_corner_error(h_est, dataset.homography[i], frame)

    cdf = [(float(t), float((errors <= t).mean())) for t in thresholds]
    slices = []
    for rt in ratio_thresholds:
        sel = errors[dataset.ratios <= rt]
        slices.append({
            "ratio_threshold": float(rt),
            "n": int(sel.size),
            "mean_ec": float(sel.mean()) if sel.size else float("nan"),
            "median_ec": float(np.median(sel)) if sel.size else float("nan"),
        })
    return {
        "errors": errors,
        "summary": {
            "n": int(errors.size),
            "mean_ec": float(errors.mean()),
            "median_ec": float(np.median(errors)),
        },
        "cdf": cdf,
        "slices": slices,
    }


def write_metrics(reports: dict[str, dict], out_dir) -> None:
    """metrics.json (summaries), cdf.csv (threshold x estimator fractions),
    slices.csv (per estimator and ratio threshold)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = list(reports)

    summary = {name: reports[name]["summary"] for name in names}
    (out / "metrics.json").write_text(json.dumps(summary, sort_keys=True, indent=1))

    with (out / "cdf.csv").open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["threshold"] + [f"fraction_{n}" for n in names])
        n_rows = len(reports[names[0]]["cdf"])
        for i in range(n_rows):
            row = [reports[names[0]]["cdf"][i][0]]
            row += [reports[n]["cdf"][i][1] for n in names]
            w.writerow([repr(v) for v in row])

    with (out / "slices.csv").open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["estimator", "ratio_threshold", "n", "mean_ec", "median_ec"])
        for name in names:
            for s in reports[name]["slices"]:
                w.writerow([name, repr(s["ratio_threshold"]), s["n"],
                            repr(s["mean_ec"]), repr(s["median_ec"])])


def render_cdf_png(reports: dict[str, dict], path) -> None:
    """Single-panel CDF plot; fraction of samples within each error bound."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for name, rep in reports.items():
        xs = [t for t, _ in rep["cdf"]]
        ys = [f for _, f in rep["cdf"]]
        ax.plot(xs, ys, label=name)
    ax.set_xscale("log")
    ax.set_xlabel("corner error threshold (px)")
    ax.set_ylabel("fraction of samples")
    ax.set_ylim(0, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
