"""Coordinate-to-value MLP: input d, four tanh hidden layers of width 64,
scalar output.  Serialized as a torch state dict plus a JSON sidecar carrying
the architecture and normalization constants."""

import json

import torch
from torch import nn

HIDDEN_WIDTH = 64
HIDDEN_LAYERS = 4


class SolutionMLP(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        layers = [nn.Linear(dim, HIDDEN_WIDTH), nn.Tanh()]
        for _ in range(HIDDEN_LAYERS - 1):
            layers += [nn.Linear(HIDDEN_WIDTH, HIDDEN_WIDTH), nn.Tanh()]
        layers.append(nn.Linear(HIDDEN_WIDTH, 1))
        self.net = nn.Sequential(*layers)
        self.dim = dim

    def forward(self, x):
        return self.net(x).squeeze(-1)


def save_model(model: SolutionMLP, path: str, meta: dict):
    torch.save(model.state_dict(), path)
    sidecar = {
        "dim": model.dim,
        "hidden_width": HIDDEN_WIDTH,
        "hidden_layers": HIDDEN_LAYERS,
        "activation": "tanh",
        "normalization": "none",
        **meta,
    }
    with open(path + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2)


def load_model(path: str) -> tuple[SolutionMLP, dict]:
    with open(path + ".json") as fh:
        sidecar = json.load(fh)
    model = SolutionMLP(sidecar["dim"])
    model.load_state_dict(torch.load(path, weights_only=True))
    model.eval()
    return model, sidecar
