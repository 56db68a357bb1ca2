"""Training loop for the solution surrogate.

The loss is a weighted sum of two mean squared errors: the interior misfit
against the Monte Carlo estimates, and the boundary misfit of the normal
derivative (by automatic differentiation of the network, dotted with the
stored outward normals) against the flux data b_1:

    L = (mu/N) sum |u(x) - u_hat(x)|^2 + (1/N_bc) sum |du/dn(x) - b1(x)|^2
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .data import load_boundary, load_interior
from .model import SolutionMLP, save_model


class NanLossError(RuntimeError):
    def __init__(self, epoch):
        super().__init__(f"loss became NaN at epoch {epoch}")
        self.epoch = epoch


@dataclass
class TrainConfig:
    interior_csv: str
    boundary_csv: str
    model_path: str = "surrogate.pt"
    mu: float = 2.0
    learning_rate: float = 1e-4
    epochs: int = 15_000
    seed: int = 0
    log_every: int = 100
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__ if f != "extra"}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**doc)


def normal_derivative(model, pts: torch.Tensor, normals: torch.Tensor) -> torch.Tensor:
    pts = pts.requires_grad_(True)
    u = model(pts)
    (grad,) = torch.autograd.grad(u.sum(), pts, create_graph=True)
    return (grad * normals).sum(dim=1)


def train(cfg: TrainConfig) -> dict:
    torch.manual_seed(cfg.seed)
    x_int, u_hat = load_interior(cfg.interior_csv)
    x_bc, n_bc, b1 = load_boundary(cfg.boundary_csv)
    if x_bc.shape[1] != x_int.shape[1]:
        from .data import ColumnMismatchError

        raise ColumnMismatchError("interior and boundary dimensions disagree")

    dim = x_int.shape[1]
    model = SolutionMLP(dim)
    xt = torch.tensor(x_int, dtype=torch.float32)
    ut = torch.tensor(u_hat, dtype=torch.float32)
    xb = torch.tensor(x_bc, dtype=torch.float32)
    nb = torch.tensor(n_bc, dtype=torch.float32)
    bt = torch.tensor(b1, dtype=torch.float32)

    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    curve = []
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        opt.zero_grad()
        interior_mse = torch.mean((model(xt) - ut) ** 2)
        flux_mse = torch.mean((normal_derivative(model, xb.clone(), nb) - bt) ** 2)
        loss = cfg.mu * interior_mse + flux_mse
        if not torch.isfinite(loss):
            raise NanLossError(epoch)
        loss.backward()
        opt.step()
        if epoch % cfg.log_every == 0 or epoch == cfg.epochs - 1:
            curve.append([epoch, float(loss.item())])
    wall = time.perf_counter() - t0

    model.eval()
    meta = {
        "mu": cfg.mu,
        "learning_rate": cfg.learning_rate,
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "interior_rows": int(x_int.shape[0]),
        "boundary_rows": int(x_bc.shape[0]),
    }
    save_model(model, cfg.model_path, meta)

    with torch.no_grad():
        train_pred = model(xt).double().numpy()
    report = {
        "model": cfg.model_path,
        "final_loss": curve[-1][1],
        "loss_curve": curve,
        "wall_time": wall,
        "train_rmse_vs_data": float(np.sqrt(np.mean((train_pred - u_hat) ** 2))),
        **meta,
    }
    with open(cfg.model_path + ".train.json", "w") as fh:
        json.dump(report, fh, indent=2)
    return report
