import logging
import os

# Application constants

# debugging
if 'DTCOOK_DEBUG' in os.environ:
    _DEBUG = os.environ['DTCOOK_DEBUG'].lower() in ['1', 'true', 'yes']
else:
    _DEBUG = False

if (_DEBUG):
    logging.getLogger().setLevel(logging.DEBUG)

_CONF_DIR = os.path.dirname(os.path.abspath(__file__))

# default documents shipped with the repository
_DEFAULT_MATERIAL_FILE = os.path.join(_CONF_DIR, 'material_default.json')
_BENCHMARK_CASE_FILE = os.path.join(_CONF_DIR, 'benchmark_case.json')
_PIPELINE_CASE_FILE = os.path.join(_CONF_DIR, 'pipeline_case.json')

# physical constants
_GAS_CONSTANT = 8.314462618 # J mol-1 K-1
_SATURATION_DOMAIN = (273.15, 500.0) # K, validity range of p_sat(T)
_SATURATION_EPSILON = 1.0e-6 # clamp of S_g inside flux/evaporation evaluation

# solver defaults (overridden by the "solver" section of a case document)
_NEWTON_TOLERANCE = 1.0e-8 # max-norm of the scaled residual
_NEWTON_MAX_ITERATIONS = 12
_DT_INITIAL = 0.1 # s
_DT_MIN = 1.0e-3 # s
_DT_MAX = 5.0 # s
_OUTPUT_INTERVAL = 1.0 # s
_STEP_TOLERANCE = 0.05 # step-doubling error, in units of the state error scales
_GRID_STEP_TOLERANCE = 0.002 # step-doubling error used by grid convergence studies

# system identification defaults
_SAMPLING_INTERVAL = 10.0 # s
_OUTPUT_LAGS = 5
_INPUT_LAGS = 5
_MAX_DEGREE = 3
_RIDGE = 1.0e-8
_RIDGE_FALLBACK = 1.0e-8
_MIN_IMPROVEMENT = 0.01 # relative validation-RMSE gain needed to accept a term
_SELECTION_BUDGET = 12 # nonlinear terms added at most
_SHORTLIST = 0 # 0 scores every candidate by free run, n > 0 only the n best one-step candidates
_CONDITION_LIMIT = 1.0e12 # cond(X'X) above which an unregularized fit falls back
_DIVERGENCE_FACTOR = 10.0 # free run aborts beyond this many training output ranges

# excitation defaults (source: oven temperature APRBS)
_APRBS_RANGE = (280.0, 450.0) # K
_APRBS_HOLD = 500.0 # s
_APRBS_FREQUENCY = (0.0017, 0.0017) # Hz
_APRBS_MIN_SAMPLES_PER_HALF_PERIOD = 8

# model file
_MODEL_EXTENSION = '.dtrom'
_MODEL_FORMAT_VERSION = 1

# benchmarking
_BENCH_REPETITIONS = 5

# exit codes of the command-line program
_EXIT_OK = 0
_EXIT_CONFIG = 2
_EXIT_SOLVER = 3
_EXIT_IDENTIFICATION = 4
_EXIT_DIVERGENCE = 5

# default command-line options
# Allow environment variables for DTCOOK_OUTPUT_DIR, DTCOOK_WORKERS and
# DTCOOK_SEED to override these settings
if 'DTCOOK_OUTPUT_DIR' in os.environ:
    _OUTPUT_DIR = os.environ['DTCOOK_OUTPUT_DIR']
else:
    _OUTPUT_DIR = 'out'

if 'DTCOOK_WORKERS' in os.environ:
    _WORKERS = int(os.environ['DTCOOK_WORKERS'])
else:
    # FOM cases and fan-out candidates run in this many workers
    _WORKERS = 1

if 'DTCOOK_SEED' in os.environ:
    _SEED = int(os.environ['DTCOOK_SEED'])
else:
    _SEED = 20210311

# fit timestamp written into model metadata; a fixed value keeps model files
# byte-identical across runs
if 'SOURCE_DATE_EPOCH' in os.environ:
    _FIT_TIMESTAMP = int(os.environ['SOURCE_DATE_EPOCH'])
else:
    _FIT_TIMESTAMP = 0

# long-running acceptance tests
if 'DTCOOK_SLOW_TESTS' in os.environ:
    _SLOW_TESTS = os.environ['DTCOOK_SLOW_TESTS'].lower() in ['1', 'true', 'yes']
else:
    _SLOW_TESTS = False
