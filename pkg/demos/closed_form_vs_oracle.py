# %% [markdown]
# # Closed form against brute force
#
# The instance-averaged success probability of depth-1 QAOA can be computed
# exactly with a polynomial-size sum. Here we put it next to a Monte-Carlo
# average of dense statevector simulations for a random 3-bit truth table.

# %%
import numpy as np

from qaoa_csp import Poisson, QaoaAngles, SamplerConfig, SuccessQuery, TruthTable, evaluate_success
from qaoa_csp.experiments import estimate_threshold
from qaoa_csp.oracle import mc_average_success

rng = np.random.default_rng(1)
table = TruthTable(3, rng.integers(0, 2, 8))
print("truth table rows:", "".join(str(int(v)) for v in table.values))

# %%
# Use the satisfiability threshold as the clause density, as the experiments do.
r = estimate_threshold(table, n_probe=10, samples=200, seed=1).r_star
print("threshold density r* =", r)

# %%
angles = QaoaAngles(gamma=1.3, beta=0.6)
for n in (6, 8, 10):
    exact = evaluate_success(SuccessQuery(table, n, angles, Poisson(r)))
    est = mc_average_success(n, table, SamplerConfig(m_mode=Poisson(r), seed=n), angles, 1000)
    z = (est.mean - exact.probability) / est.std_error
    print(f"n={n:2d}  closed form {exact.probability:.6f}  MC {est.mean:.6f} +- {est.std_error:.6f}  z={z:+.2f}")
