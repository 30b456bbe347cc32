"""How LGCA and WADCA split a feature map before attention.

Both layers feed two branches to the attention block: a low-frequency part
and the rest.  LGCA uses a binomial blur and its residual; WADCA uses the
approximate-only and detail-only Haar reconstructions.  This script prints
what each branch keeps on a synthetic shape image.
"""

import numpy as np

from edgepool.data import synth_dataset
from edgepool.filters import gaussian_blur, laplacian
from edgepool.haar import approx_recon, detail_recon, dwt2


def energy(a):
    return float(np.sum(np.asarray(a, dtype=np.float64) ** 2))


def main():
    data = synth_dataset("shapes2", 2, 32, seed=0)
    x = data.images[:1, :1].astype(np.float64)  # one gray channel
    print(f"image: {data.classes[data.labels[0]]}, 32x32, energy {energy(x):.2f}\n")

    g, lap = gaussian_blur(x).data, laplacian(x).data
    a, d = approx_recon(x).data, detail_recon(x).data
    print("branch              energy   share   max |sum - x|")
    for name, low, high in (("gaussian/laplacian", g, lap), ("haar approx/detail", a, d)):
        total = energy(low) + energy(high)
        print(f"{name:18s}  {energy(low):7.2f}  {energy(low) / total:6.1%}   {np.max(np.abs(low + high - x)):.1e}")
        print(f"{'':18s}  {energy(high):7.2f}  {energy(high) / total:6.1%}")

    # the Haar projections are orthogonal, the Gaussian ones are not
    print(f"\n<approx, detail>     = {np.sum(a * d):+.2e}")
    print(f"<gaussian, laplacian> = {np.sum(g * lap):+.2e}")

    # where the high-frequency branches live: on the shape's outline
    edge = np.abs(lap[0, 0]) > 0.05
    print(f"\nlaplacian |value| > 0.05 on {edge.sum()} of {edge.size} pixels (the outline)")
    c = dwt2(x)
    print("haar subband energies: " + ", ".join(f"{n} {energy(b.data):.2f}" for n, b in zip(("ll", "lh", "hl", "hh"),
                                                                                            c.bands)))


if __name__ == "__main__":
    main()
