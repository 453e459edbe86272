"""N traders with linear permanent impact: mean inventory, expected price, equilibrium check."""

# %% setup
import numpy as np

from flowprice import (
    FinitePopParams, ModelParams, SampledPath, convergence_errors, mean_inventory_bvp,
    permanent_impact_sanity,
)
from flowprice.sim import LinearImpactPrice, gateaux_residual, smooth_directions, symmetric_equilibrium

base = ModelParams(kappa=1.0, phi=1.0, A=1.0, T=1.0, E0=1.0)
fp = FinitePopParams(base, N=10, alpha=0.5)

# %% mean inventory from the two-point boundary problem
E = mean_inventory_bvp(fp, n_steps=1000)
for t in (0.25, 0.5, 1.0):
    print(f"E_N({t}) = {E.at(t):.12f}")

# %% the expected formed price is p0 + alpha (E_N - E_N(0)) under linear impact
p = permanent_impact_sanity(fp, p0=100.0)
print("expected price at T:", p.values[-1])

# %% the gap to the mean-field price shrinks like 1/N
flow = SampledPath.from_function(base.grid(1000), lambda t: 1 + np.sin(2 * t))
res = convergence_errors(FinitePopParams(base, 10, 1.0), [5, 10, 20, 40, 80], flow, 100.0)
for n, e, s in zip(res.Ns, res.errors, res.scaled):
    print(f"  N={n:3d}  error={e:.3e}  N*error={s:.9f}")

# %% the symmetric profile is a Nash equilibrium of the N-player game
controls, q0 = symmetric_equilibrium(fp, 2000)
grid = base.grid(2000)
price_map = LinearImpactPrice(SampledPath.constant(grid, 100.0), fp.alpha)
dirs = smooth_directions(grid, 10, seed=1)
at_eq = [gateaux_residual(fp, price_map, controls, w, 0, [1e-2, 5e-3], q0) for w in dirs]
idle = [gateaux_residual(fp, price_map, np.zeros_like(controls), w, 0, [1e-2, 5e-3], q0) for w in dirs]
print("max |Gateaux| at equilibrium:", np.max(np.abs(at_eq)))
print("min |Gateaux| when nobody trades:", np.min(np.abs(idle)))
