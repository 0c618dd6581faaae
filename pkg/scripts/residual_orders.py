"""Integral-equation residual of the ordered product under dt refinement.

Prints the residual for the ordering the product satisfies (generator on the
left, jump operator acting on V(tau-)) and for the right-multiplied ordering,
which only holds when the family commutes.
"""
import numpy as np

from sere._random import child
from sere.evolution import MatrixFamily, integral_equation_residual
from sere.hawkes import ExpHawkesKernel
from sere.markov import FiniteMarkovChain
from sere.swish import simulate_swish

DTS = (8e-3, 4e-3, 2e-3, 1e-3)


def main():
    rng = np.random.default_rng(0)
    kernel = ExpHawkesKernel(1.0, 1.0, 2.0)
    chain = FiniteMarkovChain([[0.3, 0.7], [0.6, 0.4]])
    print("family  ordering   " + "  ".join(f"dt={dt:.0e}" for dt in DTS))
    for i in range(5):
        G = rng.normal(size=(2, 2, 2))
        G /= np.linalg.norm(G, 2, axis=(1, 2))[:, None, None]
        J = rng.normal(size=(2, 2, 2))
        J = 0.8 * J / np.linalg.norm(J, 2, axis=(1, 2))[:, None, None] - np.eye(2)
        fam = MatrixFamily(G, J)
        path = simulate_swish(kernel, chain, 0, 1.0, child(1, i))
        f = rng.normal(size=2)
        for ordering in ("product", "right"):
            res = [integral_equation_residual(path, fam, f, 1.0, dt, ordering) for dt in DTS]
            print(f"{i:6d}  {ordering:9s}  " + "  ".join(f"{r:9.2e}" for r in res))


if __name__ == "__main__":
    main()
