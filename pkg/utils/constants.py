"""
Centralized constants for the Kolmogorov laboratory.

This module consolidates the tolerances, grid sizes and default parameters
used throughout the codebase so that solver, verifier and inequality checks
agree on one set of numbers.
"""

# =============================================================================
# SAMPLING WINDOW (hypothesis checks)
# =============================================================================

# Half-width of the spatial sampling box |x|_inf <= R_s
DEFAULT_SAMPLING_RADIUS = 10.0

# Time samples over the declared interval
DEFAULT_TIME_SAMPLES = 64

# Space samples per axis
DEFAULT_SPACE_SAMPLES = 128

# Undeclared constants are inferred on |x|_inf <= min(R_i, R_s) and checked on the whole window
DEFAULT_INFERENCE_RADIUS = 5.0

# Substitute lower bound for the dominating function of c when c vanishes
DEFAULT_RHO_FLOOR = 1e-3

# Asymmetry allowed in the diffusion matrix
SYMMETRY_TOLERANCE = 1e-12

# Registered derivatives vs central differences
DERIVATIVE_CHECK_SAMPLES = 100
DERIVATIVE_CHECK_STEP = 1e-5
DERIVATIVE_CHECK_RTOL = 1e-6

# Default Hoelder exponent tag for coefficients
DEFAULT_HOLDER_EXPONENT = 0.5

# Default growth exponent of the diffusion bound |D q| <= C nu^gamma
DEFAULT_GAMMA = 0.5


# =============================================================================
# SOLVER
# =============================================================================

# Crank-Nicolson
DEFAULT_THETA = 0.5

DEFAULT_DT = 1e-3

# Grid spacing used when only a box is given
DEFAULT_H = 0.02

# Minimum grid points per axis
MIN_GRID_POINTS = 5

# Fraction of the half-width excluded near the boundary
CORE_FRACTION = 0.2

# Implicit Euler half steps taken before Crank-Nicolson on rough data
STARTUP_HALF_STEPS = 2

# Largest admissible |q12| / sqrt(q11 q22) for the splitting scheme
MAX_CROSS_DIFFUSION_RATIO = 0.9

# Relative slack on the sup-norm bound of a run
TOL_SOLVER = 1e-6

# Consecutive exhaustion levels, sup-norm on the core
TOL_EXHAUST = 1e-4

# Evolution law check
TOL_LAW = 5e-3

# Allowed violation of u_n <= u_{n+1} on shared nodes
MONOTONE_SLACK = 1e-10

# Exhausting boxes
DEFAULT_R_START = 6.0
DEFAULT_R_STEP = 2.0
DEFAULT_MAX_LEVELS = 5


# =============================================================================
# ORACLES
# =============================================================================

GAUSS_HERMITE_ORDER = 64

QUAD_TOLERANCE = 1e-10

# Truncation threshold of the backward variance integral
TIGHT_INTEGRAND_FLOOR = 1e-14

# Furthest backward horizon searched for the variance integral
TIGHT_MAX_BACKWARD = 400.0


# =============================================================================
# EXPLICIT CONSTANTS
# =============================================================================

# |sigma| below this uses the limiting r-substitution
SIGMA_ZERO_THRESHOLD = 1e-12

GOLDEN_SECTION_TOLERANCE = 1e-10

# Upper end of the epsilon_0 search bracket
EPS0_UPPER_BOUND = 1e6

# Proof parameters of the third-order estimate
DEFAULT_ALPHA = 4.0
DEFAULT_K1P = 1.0
DEFAULT_K2P = 1.0


# =============================================================================
# ESTIMATE VERIFICATION
# =============================================================================

# Relative margin tolerance on pointwise estimates (scaled by sup RHS)
TOL_ESTIMATE = 1e-6

MIN_RATE_SAMPLES = 4


# =============================================================================
# FELLER CLASSIFICATION
# =============================================================================

DEFAULT_FELLER_CUTOFFS = (2.0, 3.0, 4.0, 5.0, 6.0, 8.0)

MIN_FELLER_CUTOFFS = 4

# Increment ratio below which the tail sequence counts as Cauchy
FELLER_DECAY_RATIO = 0.5

# Number of trailing cutoffs inspected
FELLER_TAIL_WINDOW = 3

# Increments above this floor that do not shrink count as divergence
FELLER_INCREMENT_FLOOR = 1e-8


# =============================================================================
# MEASURES AND INEQUALITIES
# =============================================================================

MASS_TOLERANCE = 1e-6

TOL_INVARIANCE_ANALYTIC = 1e-5
TOL_INVARIANCE_BURNIN = 1e-3

# Forgetting test for the two-seed burn-in
DEFAULT_TOL_FORGET = 1e-4
BURNIN_RETRIES = 3
BURNIN_SEED_WIDTHS = (1.0, 2.0)

# Nodes with |f| below this are outside the support in the entropy check
ZERO_SET_THRESHOLD = 1e-14

# Doubling the box raising an integral by more than this counts as divergence
DIVERGENCE_GROWTH = 0.10

# Decay fits use t - s >= this
DECAY_MIN_ELAPSED = 1.0
MIN_DECAY_SAMPLES = 5

# Hypercontractivity check points as multiples of the threshold
HYPER_FACTORS = (1.0, 1.5, 2.0)
HYPER_SUBTHRESHOLD_FACTOR = 0.5

# Norms below this at the first decay sample mean nothing is left to decay
ALREADY_CONVERGED_NORM = 1e-12

# Drift-growth templates are fitted on the last decade of |x| in [e, R]
DRIFT_GROWTH_RADIUS = 1e4
DRIFT_GROWTH_SAMPLES = 64
# Fitted power above 2 + margin counts as super-quadratic
DRIFT_GAMMA_MARGIN = 0.25
# Fitted log exponent bands: >= lower is |x|^2 log|x|, >= upper is (log|x|)^alpha with alpha > 1
DRIFT_ALPHA_LOWER = 0.75
DRIFT_ALPHA_UPPER = 1.25

# Elapsed-time floor of the ultraboundedness probe
DEFAULT_ULTRA_DELTA = 1.0


# =============================================================================
# RUNNER
# =============================================================================

DEFAULT_SEED = 0

# Exit codes
EXIT_OK = 0
EXIT_JOB_FAILURE = 1
EXIT_PARSE_ERROR = 2
