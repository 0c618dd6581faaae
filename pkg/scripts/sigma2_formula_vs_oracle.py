"""Tabulate the closed-form summation variance against the chain-CLT oracle.

For each chain and kernel the formula value
``2 lambda_hat rho[m^2 a (R0 - I) a + m2 a^2 / 2]`` is printed next to
``lambda_hat * sigma_chain^2`` and a Monte Carlo estimate of
``Var(eps * sum_{k <= N(t/eps^2)} a(x_k))`` at ``t = 1``.
"""
import numpy as np

from sere._random import child
from sere.hawkes import ExpHawkesKernel
from sere.limits import LimitSpec, summation_sigma2
from sere.markov import FiniteMarkovChain, stationary_distribution
from sere.swish import simulate_swish

CHAINS = {
    "iid": [[0.5, 0.5], [0.5, 0.5]],
    "alternating": [[0.0, 1.0], [1.0, 0.0]],
    "sticky": [[0.9, 0.1], [0.1, 0.9]],
}
KERNELS = {"poisson": (1.0, 0.0, 1.0), "hawkes": (1.0, 1.0, 2.0)}
EPS, N_REP = 0.05, 2000


def mc_variance(kernel, chain, a, seed):
    horizon = 1.0 / EPS**2
    ends = [EPS * a[simulate_swish(kernel, chain, 0, horizon, child(seed, i)).states[1:]].sum() for i in range(N_REP)]
    return float(np.var(ends, ddof=1))


def main():
    a = np.array([1.0, -1.0])
    print(f"{'chain':12s} {'kernel':8s} {'formula':>9s} {'oracle':>9s} {'ratio':>7s} {'mc':>9s}")
    for cname, P in CHAINS.items():
        chain = FiniteMarkovChain(P)
        assert abs(stationary_distribution(chain).mean(a)) < 1e-12
        for kname, params in KERNELS.items():
            kernel = ExpHawkesKernel(*params)
            spec = LimitSpec.from_model(kernel, chain, n_events=200_000, seed=1)
            sv = summation_sigma2(a, chain, spec)
            mc = mc_variance(kernel, chain, a, 2)
            print(f"{cname:12s} {kname:8s} {sv.formula:9.4f} {sv.oracle:9.4f} {sv.ratio:7.3f} {mc:9.4f}")


if __name__ == "__main__":
    main()
