"""Four estimators on one noisy sample of y' = -0.5 y, y(0) = 1.

Run: python demos/estimators_tour.py
"""

import numpy as np

from odecover.estimators import (
    DesignSample,
    fit_constrained_krr,
    fit_nls,
    fit_picard,
    fit_standard_spline,
    linear_param_model,
)

rng = np.random.default_rng(1)
xs = np.linspace(0, 0.9, 60)
truth = np.exp(-0.5 * xs)
data = DesignSample(xs, truth + 0.05 * rng.standard_normal(xs.size), sigma=0.05)
model = linear_param_model()

# every function in the constrained KRR class is flat at x = 0, so a truth with
# nonzero initial slope (here -0.5) leaves a bias that more data does not remove
fits = {
    "spline": fit_standard_spline(data),
    "constrained KRR (beta=1)": fit_constrained_krr(data, beta=1),
    "nonlinear least squares": fit_nls(data, model),
    "Picard (R=8, T=256)": fit_picard(data, model, y0_hat=1.0),
}
for name, fit in fits.items():
    mse = float(np.mean((fit.fitted - truth) ** 2))
    extra = "" if fit.theta is None else f"  theta={fit.theta[0]:.4f}"
    print(f"{name:<26s} in-sample MSE {mse:.2e}{extra}")
