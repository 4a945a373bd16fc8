# %% [markdown]
# # Classical and quantum scaling for a small family of tables
#
# `sweep` chains everything: threshold estimation, a 50x50 angle grid, the
# quantum success curve with its fit, and median DPLL work (decisions plus
# propagations) on the equivalent CNF.

# %%
from qaoa_csp.experiments import records_to_csv, sweep
from qaoa_csp.tables import first_false_rows_table

tables = [first_false_rows_table(3, i) for i in (1, 2, 4)]
records = sweep(tables, range(8, 15), "threshold", seed=7, grid=20, threshold_n=10, threshold_samples=100,
                classical_n_values=range(8, 15), classical_instances=100,
                labels=[f"first{i}false" for i in (1, 2, 4)])

# %%
for rec in records:
    print(f"{rec['table']:>12}: r={rec['r']:.3f}  quantum b={rec['fit_b']:+.4f}  classical b={rec['classical_fit_b']:+.4f}")

# %%
print(records_to_csv(records, ["table", "r", "gamma", "beta", "fit_a", "fit_b"]))
