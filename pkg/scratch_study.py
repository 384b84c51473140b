"""Dev scratch: criterion-5 style study at desk scale."""
import time

import numpy as np

from svinefactor import dgp, pipeline

t0 = time.time()
spec = dgp.benchmark_spec(n_reps=50, seed=20240501)
opts = pipeline.FitOptions(starts=4, seed=1, maxfev=100, xatol=1e-3)
report = dgp.run_study(spec, pipeline_opts=opts, t_values=[100, 500, 2000], d_values=[100])
for c in report.cells:
    print(
        f"n={c.t_len} d={c.n_dim} reps={c.n_reps} rmse_params={c.rmse_params_mean:.4f} "
        f"factors={np.round(c.rmse_factors_mean, 4)} loadings={np.round(c.rmse_loadings_mean, 4)}",
        flush=True,
    )
print(f"total {time.time()-t0:.0f}s")
