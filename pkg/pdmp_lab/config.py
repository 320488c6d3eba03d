"""
Configuration for the PDMP Lab toolkit
Engineering constants, defaults and environment overrides
"""

import os

from dotenv import load_dotenv

load_dotenv()

# Runtime (environment overrides)
WORKERS = int(os.getenv('PDMP_LAB_WORKERS', '1'))
LOG_LEVEL = os.getenv('PDMP_LAB_LOG_LEVEL', 'INFO')
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

# Simulation defaults
DEFAULT_BURN_IN = 200
DEFAULT_THIN = 1
DEFAULT_N_TRAJ = 100
DEFAULT_N_KEEP = 100
DEFAULT_N_STEPS = 50
MAX_REJECTION_ATTEMPTS = 10 ** 6

# Metric defaults
DEFAULT_C = 1.0
FM_MAX_ATOMS = 20000  # per side, after merging identical atoms
DEFAULT_FIT_N_MAX = 10
DEFAULT_FIT_N_REP = 2000
DEFAULT_N_BOOT = 5
CORRESPONDENCE_FACTOR = 3.0
MIN_CORRESPONDENCE_ATOMS = 10

# Diagnostics defaults
FD_STEP = 1e-6
FD_MIN_STEP = 1e-12
SVD_RTOL = 1e-8
FIXED_POINT_TOL = 1e-10
FIXED_POINT_MAX_ITER = 2000
EQUILIBRIUM_HORIZON = 50.0  # flow time before testing for a rest point
THETA_GRID_POINTS = 11
HYPOTHESIS_TOL = 1e-9
QUADRATURE_NODES = 64
MIN_SMALL_SET_MC = 10 ** 3
SMALL_SET_BINS = 20
SMALL_SET_WINDOW = 3
ACCESSIBILITY_N_MAX = 8
ACCESSIBILITY_SEEDS = 32
ACCESSIBILITY_SWEEPS = 40

# Continuity classifier
ATOM_EPS_FACTOR = 1e-9
ATOM_CLUSTER_MASS = 0.01
ATOM_FRACTION_SINGULAR = 0.5
ATOM_FRACTION_DIFFUSE = 0.01
HISTOGRAM_BINS = 50

# Output
CSV_FLOAT_FORMAT = '%.17g'
MANIFEST_NAME = 'manifest.json'
OUTPUT_FORMATS = ['csv', 'json']

# S3 Settings
S3_BUCKET_NAME = os.getenv('PDMP_LAB_S3_BUCKET')
AWS_ACCESS_KEY_ID = os.getenv('AWS_ACCESS_KEY_ID')
AWS_SECRET_ACCESS_KEY = os.getenv('AWS_SECRET_ACCESS_KEY')
AWS_REGION = os.getenv('AWS_REGION', 'us-east-1')
S3_BASE_FOLDER = 'pdmp-lab'

# Exit codes
EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
