"""Every numerical default in one place.

=====================  ==========  ==================================================
name                   value       used by
=====================  ==========  ==================================================
dt                     1e-3        RK4 step of the flow
projection_tol         1e-9        largest domain violation snapped back after a step
burn_in                200         stationary runs (time units, or steps for maps)
spacing                1           stationary runs
n_samples              1000        stationary runs
replicas               200         fixed-time marginal estimates
resample_n             512         W1 in d >= 2 when clouds are not equal-weight
bootstrap              200         resamples behind every trend CI
N_list                 100,1000,   every experiment
                       10000
spot_atoms             50          restart-and-compare check of stationarity
split_half_threshold   0.05        flag for stationary estimates
=====================  ==========  ==================================================

Pass thresholds are engineering choices, not derived quantities:

* ``slope_window`` -- log-log slope of the mean absolute error against N,
  bracketing the central-limit rate N^(-1/2);
* ``residual_max``, ``w1_max``, ``support_max`` -- terminal values at the
  largest N.
"""

DEFAULTS = {
    "dt": 1e-3,
    "projection_tol": 1e-9,
    "burn_in": 200,
    "spacing": 1,
    "n_samples": 1000,
    "replicas": 200,
    "resample_n": 512,
    "bootstrap": 200,
    "N_list": (100, 1000, 10000),
    "spot_atoms": 50,
    "split_half_threshold": 0.05,
    "threads": 1,
}

T_LISTS = {
    "hypothesis1": (1, 3, 5),
    "theorem": (1, 5),
    "corollary": (),
    "support": (),
}

TOLERANCES = {
    "slope_window": (-0.7, -0.3),
    "residual_max": 0.03,
    "w1_max": 0.02,
    "support_max": 0.05,
    "spot_alpha": 0.05,
}

# starting points of the fixed-time experiment, per zoo model
Y0 = {
    "sis": (0.2,),
    "sirs": (0.9, 0.1, 0.0),
    "hopf": (1.0, 0.0),
    "logistic": (0.8, 0.2),
}
