"""Regenerate the bundled attitude controller (6 -> 64 -> 64 -> 64 -> 3).

The network approximates a stabilizing linear state feedback u = -G x on
[-1, 1]^6.  The result is deterministic for a given seed.

    python3 scripts/make_attitude_controller.py [out_path]
"""

import sys
from pathlib import Path

import numpy as np

from polar_reach.neural_network import NeuralNetwork, nn_dump, nn_forward

SEED = 20220923
HIDDEN = 64

# u = -G x, x = (w1, w2, w3, p1, p2, p3); makes w_i' ~ -2 w_i - p_i near the origin
GAIN = np.array(
    [
        [8.0, 0.0, 0.0, 4.0, 0.0, 0.0],
        [0.0, 4.0, 0.0, 0.0, 2.0, 0.0],
        [0.0, 0.0, 2.0, 0.0, 0.0, 1.0],
    ]
)


def _sparse_rotation(rng: np.random.Generator) -> np.ndarray:
    """Orthogonal matrix mixing neurons in pairs: random 2x2 rotations, then a permutation."""
    R = np.zeros((HIDDEN, HIDDEN))
    for j in range(0, HIDDEN, 2):
        th = rng.uniform(-np.pi, np.pi)
        R[j : j + 2, j : j + 2] = [[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]]
    return R[rng.permutation(HIDDEN)]


def build(seed: int = SEED, scale: float = 0.5) -> NeuralNetwork:
    """Sigmoid layers kept near their linear regime, identity readout undoing them.

    ``scale`` sets the pre-activation magnitude of the first layer on the unit
    box; later layers are sparse orthogonal maps ``4Q`` re-centred around 1/2, so
    each hidden layer approximately passes its input on.  The readout inverts
    the chain's linearization and applies the feedback gain.
    """
    rng = np.random.default_rng(seed)
    A, _ = np.linalg.qr(rng.normal(size=(HIDDEN, 6)))
    c = scale * np.sqrt(HIDDEN / 6) / 2
    Ws, bs, chain = [c * A], [np.zeros(HIDDEN)], []
    for _ in range(2):
        Q = _sparse_rotation(rng)
        chain.append(Q)
        Ws.append(4.0 * Q)
        bs.append(-2.0 * Q.sum(axis=1))
    W_out = -4.0 * GAIN @ (A.T / c) @ chain[0].T @ chain[1].T
    b_out = -0.5 * W_out.sum(axis=1)
    return NeuralNetwork(Ws + [W_out], bs + [b_out], ["sigmoid"] * 3 + ["identity"])


def main() -> None:
    default = Path(__file__).resolve().parents[1] / "src" / "polar_reach" / "data" / "attitude.nn"
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else default
    net = build()
    X = np.random.default_rng(1).uniform(-1.0, 1.0, (1000, 6))
    err = np.abs(nn_forward(net, X) + X @ GAIN.T).max()
    nn_dump(net, out)
    print(f"wrote {out} (max fit error on [-1,1]^6: {err:.3g})")


if __name__ == "__main__":
    main()
