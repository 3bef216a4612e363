"""Configuration file for the project."""

import tempfile
from pathlib import Path

# Environments
REJECTION_BUDGET = 1_000_000  # Attempts before a min-gap prior gives up
MIN_GAP_MEAN_SCALE = 0.4  # Gaussian min-gap means are drawn from [0, 0.4 * K]
DEFAULT_SIGMA = 0.5  # Reward noise of the stochastic bandit family
DEFAULT_MIN_GAP = 0.4
MAX_DISCRETE_MODELS = 10_000  # Cap on i.i.d. draws when gridding a continuous prior

# Exact solvers
DEFAULT_OBS_CELLS = 64  # Equal-width cells for quantized observations
MAX_EXACT_NODES = 10_000_000  # Node guard for backward induction
LAMBDA_TOLERANCE = 1e-3  # Bisection tolerance on lambda
LAMBDA_CEILING = 1e6  # Largest stop bonus tried before declaring infeasibility
LAMBDA_BRACKET_FACTOR = 4.0  # Initial upper bracket is 4 * N_max

# Learner
COST_FLOOR = 1e-4  # c_min in the cost update
EVAL_ROLLOUTS = 64  # Fresh greedy rollouts per epoch for the cost update
EPSILON_START = 1.0
EPSILON_FINAL = 0.05
LAYER_NORM_EPS = 1e-5

# Baselines
IIDS_GRID_SIZE = 30  # Candidate rewards per arm for the information-gain estimate
TIE_JITTER = 1e-12  # Deterministic jitter that breaks ties towards the lowest index
TOP_TWO_BETA = 0.5

# Statistics
DEFAULT_BOOTSTRAP_REPS = 2_000
CONFIDENCE_LEVEL = 0.95

# Files
CHECKPOINT_FILE_NAME = "checkpoint.npz"
METRICS_FILE_NAME = "metrics.csv"
MANIFEST_FILE_NAME = "manifest.json"
TRAJECTORIES_FILE_NAME = "trajectories.csv"
SUMMARY_FILE_NAME = "summary.csv"

OUTPUT_DIR = Path("runs")
CACHE_DIR = Path(tempfile.gettempdir()) / "pure_explorer" / "value_tables"

# Environment variables honoured when loading an experiment configuration
ENV_OUTPUT_DIR = "PURE_EXPLORER_OUTPUT_DIR"
ENV_SEED = "PURE_EXPLORER_SEED"
