"""Finite-eps bias of the averaged summation from starting the Hawkes clock empty.

E[N(t/eps)] = lambda_hat t/eps - (lambda_hat - lambda)(1 - exp(-(beta - alpha) t/eps)) / (beta - alpha),
so eps * E[N] misses lambda_hat t by about eps (lambda_hat - lambda) / (beta - alpha).
The table compares that bias to the Monte Carlo standard error at 1e4 replicas.
"""
import math

import numpy as np

from sere._random import child
from sere.hawkes import ExpHawkesKernel, simulate_hawkes

KERNELS = [(1.0, 1.0, 2.0), (1.0, 5.0, 10.0), (1.0, 0.0, 1.0)]
N_REP = 10_000


def main():
    print(f"{'kernel':>14s} {'eps':>6s} {'bias':>9s} {'mc_se':>9s} {'bias/se':>8s}")
    for params in KERNELS:
        k = ExpHawkesKernel(*params)
        for eps in (0.2, 0.05, 0.02):
            T = 1.0 / eps
            bias = eps * k.expected_count(T) - k.lambda_hat
            counts = np.array([len(simulate_hawkes(k, T, child(5, i))) for i in range(N_REP)])
            se = eps * counts.std(ddof=1) / math.sqrt(N_REP)
            print(f"{str(params):>14s} {eps:6.2f} {bias:9.4f} {se:9.4f} {abs(bias) / se:8.2f}")


if __name__ == "__main__":
    main()
