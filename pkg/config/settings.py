import math
import os

from dotenv import load_dotenv

# Pick up a local .env before reading overrides
load_dotenv()

# Base directory
BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# Output configuration
OUTPUT_DIR = os.getenv('BUNDLE_NEWTON_OUT_DIR', os.path.join(BASE_DIR, 'output'))
LOG_LEVEL = os.getenv('BUNDLE_NEWTON_LOG_LEVEL', 'INFO')
ITERATES_FILE = 'iterates.csv'
CURVE_FILE = 'curve.csv'
STAGES_FILE = 'stages.csv'
META_FILE = 'meta.txt'
FLOAT_DIGITS = 17

# Damped Newton defaults
TOL = 1e-10
THETA_DES = 0.5
THETA_ACC = 0.9
THETA_STOP = 0.25
ALPHA0 = 1.0
ALPHA_FAIL = 1e-8
MAX_OUTER = 50
MAX_INNER = 20

# Numerical thresholds
DEGENERATE_NORM = 1e-12
POLE_THRESHOLD = 1e-12
UNIT_NORM_TOL = 1e-12
TANGENT_TOL = 1e-10
SINGULAR_CONDITION = 1e14

# Randomized tests
RANDOM_SEED = 20240611

# Problems
PROBLEMS = ['geodesic-force', 'obstacle', 'rod']
T_END = 1.0
N_INTERIOR = 100

# Elastic geodesic in a winding field ("almost antipodal" boundary points)
FORCE_SCALE = 3.0
GEODESIC_GAMMA0 = (math.sin(0.3), 0.0, -math.cos(0.3))
GEODESIC_GAMMA_T = (-math.sin(0.3) * math.cos(0.2), math.sin(0.3) * math.sin(0.2), math.cos(0.3))

# Obstacle (north pole cap); boundary points sit below the cap at height 0.5
H_REF = 0.1
P0 = 1.0
P_GROWTH = 1.2
VIOLATION_TOL = 1e-3
MAX_STAGES = 200
OBSTACLE_GAMMA0 = (math.sin(math.pi / 3), 0.0, math.cos(math.pi / 3))
OBSTACLE_GAMMA_T = (
    -math.sin(math.pi / 3) * math.cos(0.2),
    math.sin(math.pi / 3) * math.sin(0.2),
    math.cos(math.pi / 3),
)

# Inextensible rod
SIGMA = 1.0
ROD_YA = (0.0, 0.0, 0.0)
ROD_YB = (0.8, 0.0, 0.0)
ROD_VA = (1.0 / math.sqrt(5.0), 0.0, 2.0 / math.sqrt(5.0))
ROD_VB = (1.0 / math.sqrt(1.64), 0.0, 0.8 / math.sqrt(1.64))

# Exit codes
EXIT_CODES = {
    'converged': 0,
    'solver_error': 1,
    'damping_failed': 2,
    'max_iterations': 3,
    'config_error': 4,
}
