# Settings for the hlikelihood toolkit
#
# For simplicity, this file contains only settings considered important or
# commonly used. Every value can be overridden from the environment or from a
# `.env` file at the repository root:
#
#     HLIK_JOBS=4
#     HLIK_LOG_LEVEL=DEBUG

import os
from pathlib import Path
from dotenv import load_dotenv

from hlikelihood.exceptions import ConfigError

# Load environment variables from .env file
env_path = Path(__file__).parent.parent / '.env'
load_dotenv(dotenv_path=env_path)

TOOL_NAME = "hlik"

# Worker count used when --jobs is not given. Results never depend on it.
DEFAULT_JOBS = 1


def default_jobs() -> int:
    """HLIK_JOBS as a positive integer, read when a command starts."""
    raw = os.getenv("HLIK_JOBS", str(DEFAULT_JOBS))
    try:
        jobs = int(raw)
    except ValueError:
        raise ConfigError(f"HLIK_JOBS must be a positive integer, got {raw!r}") from None
    if jobs < 1:
        raise ConfigError(f"HLIK_JOBS must be a positive integer, got {jobs}")
    return jobs


LOG_LEVEL = os.getenv("HLIK_LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s [%(name)s] %(levelname)s: %(message)s"

OUTPUT_DIR = Path(os.getenv("HLIK_OUTPUT_DIR", "."))

# Quadrature
QUAD_REL_TOL = 1e-8
QUAD_ABS_TOL = 1e-12
QUAD_MAX_SUBDIVISIONS = 2000
QUAD_TAIL_MAP = "logistic-compactify"

# Newton safeguards
NEWTON_MAX_HALVINGS = 40
NEWTON_MAX_ITER = 200
NEWTON_SCORE_TOL = 1e-8
NEWTON_STEP_TOL = 1e-10
# A natural-scale parameter beyond this bound is reported as divergence
DIVERGENCE_BOUND = 1e12
# An unfinished ascent whose parameter grew by this factor is reported as divergence
DIVERGENCE_GROWTH = 1e6
# Distance to a finite support face treated as "sitting on the boundary"
BOUNDARY_TOL = 1e-10

# Bartlett audit
AUDIT_ABS_TOL = 1e-6
# Absolute quadrature tolerance for the condition integrals; they are often near 0
AUDIT_QUAD_ABS_TOL = 1e-9
AUDIT_GRID_POINTS = 5
AUDIT_MC_DRAWS = 20_000

# Predictive density grids
GRID_NODES = 2001
GRID_TAIL_MASS = 1e-8

# Monte Carlo budgets
COVERAGE_REPLICATIONS = 10_000
MOMENT_DRAWS = 1_000_000
MC_CHUNK_SIZE = 100_000
