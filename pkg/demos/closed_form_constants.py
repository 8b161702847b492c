#!/usr/bin/env python3
"""Closed-form objects of the model for a range of group sizes.

Prints the constant A = E[sup of the price-deflated marginal-value process],
the initial contribution levels l0 (planner) and kappa (single agent in the
symmetric equilibrium), the calibrated multipliers, and the free-rider ratio
kappa/l0 = (a+b)/(n a+b).
"""
import numpy as np

from pgcsim import ModelParams, constants, free_rider_ratio

header = f"{'n':>3} {'A':>10} {'l0':>10} {'kappa':>10} " \
         f"{'lambda_sp':>11} {'lambda_nash':>12} {'ratio':>8}"
print(header)
print("-" * len(header))
for n in (1, 2, 3, 4, 8, 16):
    p = ModelParams(n_agents=n)
    c = constants(p)
    print(f"{n:>3} {c.A:>10.6f} {c.l0:>10.6f} {c.kappa:>10.6f} "
          f"{c.lambda_sp:>11.6f} {c.lambda_nash:>12.6f} {c.ratio:>8.5f}")

print()
print("the ratio is volatility-free:")
for sigma in (0.05, 0.2, 0.4):
    r = free_rider_ratio(ModelParams(sigma_x=sigma))
    print(f"  sigma_x = {sigma:<5} ratio = {r:.12f}")

# underprovision worsens like 1/n: each agent only internalises their own
# share of the public good's marginal value
ns = np.array([1, 2, 4, 8, 16, 32, 64])
ratios = np.array([free_rider_ratio(ModelParams(n_agents=int(n)))
                   for n in ns])
print()
print("n * ratio ->", np.round(ns * ratios, 4), " (tends to (a+b)/a = 2)")
