"""Reconstruction error of the convolutional autoencoder per pooling variant.

The encoder has four conv blocks (48, 96, 192, 32 channels) with pooling
after the first three, so 32x32 inputs reach a 4x4 bottleneck.  Loss is MSE
multiplied by the batch size.
"""

import numpy as np

from edgepool.data import synth_dataset
from edgepool.models import CAESpec, build_cae
from edgepool.training import TrainConfig, train

NAMES = {"normal": "Normal", "blur": "Gaussian", "lgca": "LGCA", "wadca": "WADCA"}


def main():
    data = synth_dataset("shapes4", 64, 32, seed=0)
    cfg = TrainConfig(optimizer="adam", lr=1e-3, epochs=5, batch=16, loss="mse")
    print("Pooling    MSE per epoch")
    for kind, name in NAMES.items():
        model = build_cae(CAESpec(height=32, width=32, pooling=kind), seed=0, dtype=np.float32)
        res = train(model, data, cfg)
        print(f"{name:9s}  " + "  ".join(f"{r.loss:.3f}" for r in res.records))


if __name__ == "__main__":
    main()
