"""Writes the T4v1 golden tensors in tests/data using NumPy and PyTorch.

Run from the repo root: python3 tests/oracles/make_goldens.py
"""
import pathlib
import struct

import numpy as np
import torch
import torch.nn.functional as F

DATA = pathlib.Path(__file__).resolve().parent.parent / "data"


def save(name, array):
    array = np.ascontiguousarray(array, dtype="<f8")
    assert array.ndim == 4
    with open(DATA / name, "wb") as f:
        f.write(b"T4v1")
        f.write(struct.pack("<4Q", *array.shape))
        f.write(array.tobytes())


def main():
    DATA.mkdir(exist_ok=True)
    rng = np.random.default_rng(20240611)

    # Byte-level container check: value i is i * 0.25 - 7.
    save("ramp_2x3x4x5.t4", (np.arange(120) * 0.25 - 7.0).reshape(2, 3, 4, 5))

    x = rng.uniform(-1, 1, (2, 4, 9, 7))
    wt = rng.uniform(-1, 1, (6, 4, 3, 3))
    b = rng.uniform(-1, 1, (1, 6, 1, 1))
    y = F.conv2d(torch.from_numpy(x), torch.from_numpy(wt), torch.from_numpy(b.ravel()),
                 stride=2, padding=1)
    save("conv_input.t4", x)
    save("conv_weight.t4", wt)
    save("conv_bias.t4", b)
    save("conv_s2_output.t4", y.numpy())

    r = rng.uniform(-1, 1, (1, 2, 5, 7))
    t = torch.from_numpy(r)
    save("resize_input.t4", r)
    save("resize_up_10x14.t4", F.interpolate(t, size=(10, 14), mode="bilinear",
                                             align_corners=False).numpy())
    save("resize_down_3x4.t4", F.interpolate(t, size=(3, 4), mode="bilinear",
                                             align_corners=False).numpy())

    bn_in = rng.normal(0.5, 2.0, (3, 4, 5, 5))
    gamma = rng.uniform(0.5, 1.5, 4)
    beta = rng.uniform(-1, 1, 4)
    out = F.batch_norm(torch.from_numpy(bn_in), None, None, torch.from_numpy(gamma),
                       torch.from_numpy(beta), training=True, eps=1e-5)
    save("bn_input.t4", bn_in)
    save("bn_affine.t4", np.stack([gamma, beta]).reshape(2, 4, 1, 1))
    save("bn_train_output.t4", out.numpy())


if __name__ == "__main__":
    main()
