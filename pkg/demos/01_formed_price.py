"""Traders facing a price path, and the price formed by an order-flow path."""

# %% setup
import numpy as np

from flowprice import (
    ModelParams, SampledPath, compatibility_residual, constant_price_flow, formed_price,
    induced_order_flow, solve_thetas, theta2_at,
)

params = ModelParams(kappa=0.5, phi=1.0, A=2.0, sigma=0.1, T=1.0, E0=1.0)
grid = params.grid(2000)

# %% the quadratic value function
# theta2 starts at -A at the horizon and relaxes towards -sqrt(kappa phi) going backward
print("theta2(0), theta2(T):", theta2_at(params, 0.0), theta2_at(params, params.T))
print("fixed point -sqrt(kappa phi):", -np.sqrt(params.kappa * params.phi))

price = SampledPath.from_function(grid, lambda t: 100 + 0.3 * np.sin(4 * t) + 0.2 * t)
thetas = solve_thetas(params, price)
print("V(0, q=1) =", thetas.value(0.0, 1.0))

# %% order flow generated by optimal traders
state = induced_order_flow(params, price)
lam = state.Lambda
print("mean inventory E(T):", state.E.values[-1])
print("supply rate at 0, T/2, T:", lam.at(0.0), lam.at(0.5), lam.at(1.0))

# %% and back: the formed price of that flow reproduces the input price
back = formed_price(params, lam, price.values[0])
print("round-trip error:", np.max(np.abs(back.values - price.values)))

# halving the step cuts the error by four
for n in (250, 500, 1000):
    g = params.grid(n)
    p = SampledPath.from_function(g, lambda t: 100 + 0.3 * np.sin(4 * t) + 0.2 * t)
    b = formed_price(params, induced_order_flow(params, p).Lambda, p.values[0])
    print(f"  n={n:5d}  error={np.max(np.abs(b.values - p.values)):.3e}")

# %% compatibility: the equilibrium flow clears, a perturbed one does not
good = compatibility_residual(params, lam, price.values[0])
bad = compatibility_residual(params, lam.with_values(lam.values + 0.05), price.values[0])
print("compatibility residual, equilibrium vs perturbed:",
      np.max(np.abs(good.values)), np.max(np.abs(bad.values)))

# %% a flow that keeps the price constant
# with no initial inventory the solution is lambda0 cosh(sqrt(phi/kappa) t)
flat = constant_price_flow(ModelParams(1.0, 1.0, 0.0, T=1.0, E0=0.0), lambda0=1.0)
print("Lambda(1) =", flat.values[-1], " cosh(1) =", np.cosh(1.0))
