"""Train the small classifier with each pooling variant and compare robustness.

A short version of the desk-scale experiment: 32x32 shapes, a few epochs of
Adam, then plain accuracy and classification consistency (agreement of
predictions across 16 rotations and 13 diagonal shifts) on held-out images.
Takes well under a minute on one core.
"""

import time

import numpy as np

from edgepool.data import synth_dataset
from edgepool.models import ClassifierSpec, build_classifier
from edgepool.robustness import classification_consistency, noise_robustness
from edgepool.training import TrainConfig, evaluate, train


def main():
    train_set = synth_dataset("shapes2", 400, 32, seed=0)
    test_set = synth_dataset("shapes2", 100, 32, seed=1)
    cfg = TrainConfig(optimizer="adam", lr=1e-3, epochs=10, batch=16)

    print("variant  train acc  test acc  rotation cons.  shift cons.  noise drop  time")
    for kind in ("normal", "blur", "lgca", "wadca"):
        start = time.time()
        model = build_classifier(ClassifierSpec(pooling=kind), seed=0, dtype=np.float32)
        train(model, train_set, cfg)
        _, train_acc = evaluate(model, train_set)
        _, test_acc = evaluate(model, test_set)
        rot, shift = classification_consistency(model, test_set, max_shift=8)
        noise = noise_robustness(model, test_set, sigma=0.5, trials=3)
        print(f"{kind:7s}  {train_acc:8.1%}  {test_acc:8.1%}  {rot.mean:14.1%}  {shift.mean:11.1%}  "
              f"{noise.drop:+10.1%}  {time.time() - start:4.0f}s")


if __name__ == "__main__":
    main()
