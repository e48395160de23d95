import math

ARTIFACT_VERSION = "0.3.0"

# density
DENSITY_TOL = 1e-12
POST_OPERATOR_TOL = 1e-10
NEGATIVE_CLIP = 1e-14

# numerics
DEFAULT_QUAD_TOL = 1e-10
DEFAULT_BISECT_TOL = 1e-12
DEFAULT_ENSEMBLE_CHUNK = 4096

# transfer
DEFAULT_POWER_TOL = 1e-13
DEFAULT_POWER_MAX_ITER = 10_000
BRANCH_CHECK_TOL = 1e-10

# chains
DEFAULT_UNIFORMIZATION_TOL = 1e-12
RENORMALIZE_SLACK = 1e-12
DEFAULT_DP_PANELS = 64
EXPLOSIVITY_KWARGS = {
    "divergence": 1e12,
    "cauchy": 1e-14,
    "horizon": 100_000,
    "patience": 10,
}

# spectral
RANK_TOL = 1e-8
CLUSTER_TOL = 1e-6
ILL_CONDITIONED = 1e10
REMAINDER_MARGIN = 0.1
DEFAULT_JORDAN_LADDER = (250.0, 500.0, 1000.0)

# sde
SDE_QUAD_RANGE = (1e-8, 1e4)
SDE_CROSSCHECK_RANGE = (1e-6, 1e6)
DEFAULT_EM_KWARGS = {
    "dt": 1e-3,
    "burn_in": 50.0,
    "T": 2050.0,
    "sample_every": 0.1,
    "n_paths": 16,
}

# pdmp
REGION_TOL = 1e-9
GUARD_TIME_TOL = 1e-10
DEFAULT_GUARD_STEP = 0.05
DEFAULT_STALL_HORIZON = 1e4

# structured
DEFAULT_LOTKA_BRACKET = (-1.0, 1.0)
MAX_BRACKET_DOUBLINGS = 60
BENCHMARK_CELLCYCLE = {
    "xb_lo": 0.5,
    "xb_hi": 1.4,
    "a_lo": 1.0,
    "a_hi": 1.2,
    "n_xb": 90,
    "da": 0.01,
}
RENEWAL_SANITY_RATE = math.log(2.0) / 1.1
