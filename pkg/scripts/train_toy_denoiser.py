#!/usr/bin/env python3
"""Fit the single-conv test model to a procedural denoising task.

Demo only: the sampling pipeline never requires trained weights. Clean
targets are smooth random fields; inputs are the targets plus scaled noise
and the depth channel. The 3x3 conv is solved in closed form (ridge
regression on im2col patches) and written out as a weight blob.
"""

import argparse
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from uvdiff import rng
from uvdiff.denoiser import ModelConfig, denoise, init_toy_model, save_model


def smooth_field(shape, *key):
    rough = rng.normal_field(shape, *key)
    padded = np.pad(rough, ((2, 2), (2, 2), (0, 0)), mode="wrap")
    win = sliding_window_view(padded, (5, 5), axis=(0, 1))
    return win.mean(axis=(3, 4))


def im2col(x):
    padded = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(padded, (3, 3), axis=(0, 1))  # (H, W, C, 3, 3)
    h, w, c = x.shape
    return win.reshape(h * w, c * 9)


def run(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--samples", type=int, default=24)
    parser.add_argument("--size", type=int, default=32)
    parser.add_argument("--channels", type=int, default=4)
    parser.add_argument("--sigma", type=float, default=0.5)
    parser.add_argument("--ridge", type=float, default=1e-4)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="out/linear_denoiser")
    args = parser.parse_args(argv)

    c = args.channels
    rows, targets = [], []
    for i in range(args.samples):
        clean = smooth_field((args.size, args.size, c), args.seed, "clean", i)
        noise = rng.normal_field((args.size, args.size, c), args.seed, "noise", i)
        depth = rng.uniform_field((args.size, args.size), args.seed, "depth", i)
        noisy = clean + args.sigma * noise
        stacked = np.concatenate([noisy, depth[:, :, None]], axis=2)
        rows.append(im2col(stacked))
        targets.append(clean.reshape(-1, c))
    x = np.concatenate(rows)
    y = np.concatenate(targets)

    gram = x.T @ x + args.ridge * np.eye(x.shape[1])
    weights = np.linalg.solve(gram, x.T @ y)  # ((C+1)*9, C)

    model = init_toy_model(args.seed, ModelConfig(kind="linear", latent_channels=c))
    baseline = float(np.mean((x @ im2col_kernel(model.conv_in) - y) ** 2))
    model.conv_in = weights.T.reshape(c, c + 1, 3, 3)
    model.bias_in = np.zeros(c)
    fitted = float(np.mean((x @ weights - y) ** 2))
    print(f"mse untrained: {baseline:.5f}")
    print(f"mse fitted:    {fitted:.5f}")

    # sanity: run the fitted model through the standard denoise entry point
    clean = smooth_field((args.size, args.size, c), args.seed, "clean", 999)
    noisy = clean + args.sigma * rng.normal_field(clean.shape, args.seed, "noise", 999)
    depth = rng.uniform_field((args.size, args.size), args.seed, "depth", 999)
    pred, _ = denoise(noisy, args.sigma, depth, np.zeros(8), model)
    print(f"holdout mse:   {float(np.mean((pred - clean) ** 2)):.5f}")
    print(f"noisy mse:     {float(np.mean((noisy - clean) ** 2)):.5f}")

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    print(f"weights written to {out}.json / {out}.bin")


def im2col_kernel(kernel):
    # (Cout, Cin, 3, 3) -> (Cin*9, Cout) matching im2col column order
    c_out = kernel.shape[0]
    return kernel.reshape(c_out, -1).T


if __name__ == "__main__":
    run()
