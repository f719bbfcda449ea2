"""Generate the trained-model fixtures checked into the core test suite.

Produces four containers under tests/fixtures/ (relative to the repo
root, override with --out-dir):

  two_moons.splc      relu MLP 2-32-32-1 trained on the two-moons set
  two_moons_bn.splc   same task with BatchNorm1d layers, folded on export
  small_cnn.splc      random conv net at the ~40k-parameter scale, 1x28x28
  inr_pwl.splc        implicit field with a piecewise-linear positional
                      encoding (5 segments per period), trained on a
                      circle signed-distance target

Training is deliberately tiny; everything is seeded so reruns reproduce
the same containers bit for bit.
"""

import argparse
import pathlib
import sys

import numpy as np
import torch
from torch import nn

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from splc_exporter import PiecewiseLinear, export_model  # noqa: E402


def train(model, X, y, loss_fn, steps=600, lr=5e-3):
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    model.train()
    for _ in range(steps):
        opt.zero_grad()
        loss = loss_fn(model(X).squeeze(-1), y)
        loss.backward()
        opt.step()
    model.eval()
    return float(loss.detach())


def two_moons_data():
    from sklearn.datasets import make_moons

    X, y = make_moons(n_samples=400, noise=0.10, random_state=0)
    return torch.tensor(X, dtype=torch.float32), torch.tensor(y, dtype=torch.float32)


def moons_mlp(out_dir):
    torch.manual_seed(1)
    X, y = two_moons_data()
    model = nn.Sequential(nn.Linear(2, 32), nn.ReLU(), nn.Linear(32, 32), nn.ReLU(), nn.Linear(32, 1))
    loss = train(model, X, y, nn.BCEWithLogitsLoss())
    acc = ((model(X).squeeze(-1) > 0) == (y > 0.5)).float().mean()
    report = export_model(model, str(out_dir / "two_moons.splc"))
    print(f"two_moons: loss {loss:.4f}, accuracy {acc:.3f}, parity {report.max_discrepancy:.2e}")


def moons_mlp_bn(out_dir):
    torch.manual_seed(2)
    X, y = two_moons_data()
    model = nn.Sequential(
        nn.Linear(2, 32), nn.BatchNorm1d(32), nn.ReLU(),
        nn.Linear(32, 32), nn.BatchNorm1d(32), nn.ReLU(),
        nn.Linear(32, 1),
    )
    loss = train(model, X, y, nn.BCEWithLogitsLoss())
    acc = ((model(X).squeeze(-1) > 0) == (y > 0.5)).float().mean()
    report = export_model(model, str(out_dir / "two_moons_bn.splc"))
    folded = [row for row in report.layer_mapping if "folded" in row[2]]
    assert len(folded) == 2, "both batch-norm layers should fold"
    print(f"two_moons_bn: loss {loss:.4f}, accuracy {acc:.3f}, parity {report.max_discrepancy:.2e}")


def small_cnn(out_dir):
    torch.manual_seed(3)
    model = nn.Sequential(
        nn.Conv2d(1, 8, 3, padding=1), nn.ReLU(), nn.AvgPool2d(2),
        nn.Conv2d(8, 8, 3, padding=1), nn.ReLU(), nn.AvgPool2d(2),
        nn.Flatten(), nn.Linear(8 * 7 * 7, 96), nn.ReLU(), nn.Linear(96, 10),
    )
    model.eval()
    n_params = sum(p.numel() for p in model.parameters())
    report = export_model(model, str(out_dir / "small_cnn.splc"), input_shape=(1, 28, 28))
    print(f"small_cnn: {n_params} parameters, parity {report.max_discrepancy:.2e}")


def sin_pwl(max_abs, per_period=5, period=2.0):
    """Piecewise-linear interpolation of sin(pi t): `per_period` segments
    per period, clamped flat outside [-max_abs, max_abs]."""
    step = period / per_period
    knots = np.arange(-max_abs, max_abs + step / 2, step)
    vals = np.sin(np.pi * knots)
    slopes = np.concatenate([[0.0], np.diff(vals) / step, [0.0]])
    return PiecewiseLinear(knots, slopes, value_at_zero=float(np.sin(0.0)))


def inr_pwl(out_dir):
    torch.manual_seed(4)
    freq = torch.tensor([[1.0, 0], [0, 1.0], [2.0, 0], [0, 2.0], [4.0, 0], [0, 4.0]])
    encoder = nn.Linear(2, 6, bias=False)
    with torch.no_grad():
        encoder.weight.copy_(freq)
    model = nn.Sequential(encoder, sin_pwl(max_abs=4.0), nn.Linear(6, 32), nn.ReLU(), nn.Linear(32, 1))
    rng = np.random.default_rng(0)
    U = torch.tensor(rng.uniform(-1, 1, size=(512, 2)), dtype=torch.float32)
    target = torch.linalg.norm(U, dim=1) - 0.7  # circle signed distance
    loss = train(model, U, target, nn.MSELoss(), steps=400, lr=1e-2)
    report = export_model(model, str(out_dir / "inr_pwl.splc"))
    print(f"inr_pwl: loss {loss:.5f}, parity {report.max_discrepancy:.2e}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    default = pathlib.Path(__file__).resolve().parents[2] / "tests" / "fixtures"
    parser.add_argument("--out-dir", type=pathlib.Path, default=default)
    args = parser.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    moons_mlp(args.out_dir)
    moons_mlp_bn(args.out_dir)
    small_cnn(args.out_dir)
    inr_pwl(args.out_dir)
    print(f"fixtures written to {args.out_dir}")


if __name__ == "__main__":
    main()
