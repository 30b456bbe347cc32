"""Why blur pooling helps with shifts, and where it cannot.

An impulse moved by one pixel either stays inside a 2x2 pooling window or
crosses into the next one.  Max pooling ignores the first kind of move
completely and jumps a whole output cell on the second.  Blur pooling
spreads both moves out, so its output always changes a little and never
jumps.
"""

import numpy as np

from edgepool.pooling import PoolingLayer, PoolingVariant, blur_pool, normal_pool


def impulse(i, j, size=8):
    x = np.zeros((1, 1, size, size))
    x[0, 0, i, j] = 1.0
    return x


def distance(pool, a, b):
    return float(np.linalg.norm(pool(impulse(*a)).data - pool(impulse(*b)).data))


def main():
    blur, plain = PoolingVariant("blur"), PoolingVariant("normal")
    print("shift            max pool   blur pool")
    for a, b, note in (((3, 2), (3, 3), "inside a block"), ((3, 3), (3, 4), "across blocks")):
        d_max = distance(lambda x: normal_pool(x, plain), a, b)
        d_blur = distance(lambda x: blur_pool(x, blur), a, b)
        print(f"{a}->{b}  {d_max:8.3f}   {d_blur:8.3f}   ({note})")

    # same comparison for every horizontal shift of a row, including learnable layers
    layers = {kind: PoolingLayer.build(PoolingVariant(kind), 1, reduction=1, rng=0)
              for kind in ("normal", "blur", "lgca", "wadca")}
    print("\nmean / max output change over all one-pixel horizontal shifts in row 3")
    for kind, layer in layers.items():
        ds = [distance(layer, (3, j), (3, j + 1)) for j in range(7)]
        print(f"{kind:7s} mean {np.mean(ds):.3f}  max {np.max(ds):.3f}")


if __name__ == "__main__":
    main()
