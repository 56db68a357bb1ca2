"""Scoring of a trained surrogate against reference values.

Errors use the same additive-constant gauge as the solver's error metric:
the prediction is shifted to match the reference at the first row before the
Euclidean norms are taken.
"""

import numpy as np
import torch

from .data import load_points
from .model import load_model
from .truths import truth_by_name


def predict(model, pts: np.ndarray) -> np.ndarray:
    with torch.no_grad():
        return model(torch.tensor(pts, dtype=torch.float32)).double().numpy()


def aligned_l2(pred: np.ndarray, ref: np.ndarray, ref_index: int = 0):
    shift = pred[ref_index] - ref[ref_index]
    err = np.abs(pred - shift - ref)
    l2 = float(np.linalg.norm(err))
    denom = float(np.linalg.norm(ref))
    return l2, (l2 / denom if denom > 0 else float("inf"))


def evaluate(model_path: str, points_csv: str, truth_name=None, truth_params=None) -> dict:
    model, sidecar = load_model(model_path)
    pts, values = load_points(points_csv)
    if pts.shape[0] == 0:
        return {"points": 0, "metrics": None}
    pred = predict(model, pts)
    out = {"points": int(pts.shape[0])}
    if values is not None:
        l2, rel = aligned_l2(pred, values)
        out["l2_vs_data"], out["relative_l2_vs_data"] = l2, rel
    if truth_name is not None:
        truth = truth_by_name(truth_name)(pts, **(truth_params or {}))
        l2, rel = aligned_l2(pred, truth)
        out["l2_vs_truth"], out["relative_l2_vs_truth"] = l2, rel
        if values is not None:
            l2_raw, rel_raw = aligned_l2(values, truth)
            out["raw_l2_vs_truth"], out["raw_relative_l2_vs_truth"] = l2_raw, rel_raw
    return out


def highfreq_energy(field: np.ndarray, top_fraction: float = 0.25) -> float:
    """Energy in the top-|frequency| quartile of the 2-D DFT spectrum.

    The mean is removed first so the additive gauge cannot leak into the
    comparison (it only affects the DC bin anyway).
    """
    grid = field - field.mean()
    spec = np.abs(np.fft.fft2(grid)) ** 2
    fx = np.abs(np.fft.fftfreq(grid.shape[0]))
    fy = np.abs(np.fft.fftfreq(grid.shape[1]))
    fmax = max(fx.max(), fy.max())
    mask = np.maximum(fx[:, None], fy[None, :]) >= (1.0 - top_fraction) * fmax
    return float(spec[mask].sum())
