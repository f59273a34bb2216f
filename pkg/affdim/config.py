"""Configuration file for the affdim toolkit."""
import os
from dotenv import load_dotenv

load_dotenv()

# Logging Configuration
LOG_LEVEL = os.getenv("AFFDIM_LOG_LEVEL", "INFO")
LOG_DIR = os.getenv("AFFDIM_LOG_DIR", "")  # empty: console only
ENABLE_TRACING = os.getenv("AFFDIM_TRACING", "1") != "0"

# Parallelism (--threads overrides)
THREADS = int(os.getenv("AFFDIM_THREADS", "1"))
# Fixed work partition; results never depend on the thread count
CHUNK_SIZE = 4096

# Pressure sums
ENUMERATION_CAP = 2 ** 24
TAIL_BLOCK = 2 ** 14
SPECTRUM_CACHE_WORDS = 2 ** 22
DEFAULT_MC_SAMPLES = 20000

# Dimension solver
DEFAULT_TOL = 1e-3
DEFAULT_N_MAX = 16
MAX_BISECTION_STEPS = 200

# Linear algebra
SINGULAR_TOL = 1e-14
REL_TOL = 1e-9
ABS_TOL = 1e-12

# Projection of infinite words
DEFAULT_TRUNCATION_TOL = 1e-9
MAX_DEPTH_FACTOR = 10
EPS0_FRACTION = 0.1

# Estimators
BOX_MAX_DOUBLINGS = 14
BOX_MIN_WINDOW = 5
STARVATION_FACTOR = 4.0
PLATEAU_FLOOR_FRACTION = 0.1
PLATEAU_DECAY_RATIO = 0.7
ENERGY_ENUM_WORDS = 2 ** 16

# Reports and plots
SCHEMA_VERSION = 1
SVG_SIZE = 1024
SVG_POINT_RADIUS = 0.5
SVG_MAX_POINTS = 20000
