import os
import logging

parent_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
output_dir = os.path.join(parent_dir, 'output')
os.makedirs(output_dir, exist_ok=True)

max_workers = 4

# Console logger for protocol events and progress messages
logger = logging.getLogger('hovmerge')

console_handler = logging.StreamHandler()
formatter = logging.Formatter('%(message)s')
console_handler.setFormatter(formatter)

if not logger.handlers:
    logger.addHandler(console_handler)

# Set the log level according to the environment
environment = os.getenv('ENVIRONMENT', 'production')

if environment == 'production':
    logger.setLevel(logging.WARNING)
else:
    logger.setLevel(logging.DEBUG)

# sim_logger stores one record per finished run
sim_logger = logging.getLogger('hovmerge.sim')
sim_logger.propagate = False

if not sim_logger.handlers:
    file_handler = logging.FileHandler(os.path.join(output_dir, 'simulation.log'))
    file_formatter = logging.Formatter('%(asctime)s - %(message)s')
    file_handler.setFormatter(file_formatter)
    sim_logger.addHandler(file_handler)

sim_logger.setLevel(logging.DEBUG)

# sweep_logger stores one record per sweep point and any fault that aborted a sweep
sweep_logger = logging.getLogger('hovmerge.sweep')
sweep_logger.propagate = False

if not sweep_logger.handlers:
    file_handler = logging.FileHandler(os.path.join(output_dir, 'sweep.log'))
    file_formatter = logging.Formatter('%(asctime)s - %(message)s')
    file_handler.setFormatter(file_formatter)
    sweep_logger.addHandler(file_handler)

sweep_logger.setLevel(logging.DEBUG)

# Controller and vehicle constants
ALPHA = 2.0             # 1/s
HEADWAY = 1.0           # s
REL_VEL_GAIN = 1.0      # 1/s
ACCEL_FEEDBACK = 0.6
TAU = 0.5               # s
VEHICLE_LENGTH = 7.5    # m, length plus margin
D_MAX = 2.0             # m/s^2
A_MAX = 3.0             # m/s^2
V_MAX = 38.0            # m/s
REGION_LENGTH = 500.0   # m
HOLD_DISTANCE = 150.0   # m, hold point sits at -HOLD_DISTANCE
T_V = 2.5               # s
ENHANCED_BRAKE_FACTOR = 1.5

# Merge protocol
DECISION_INTERVAL = 0.1  # s
MIN_LEAD_GAP = 10.0      # m

# Platoon stream
N_PLAT = 6
L_PLAT = 5
SPAWN_X = -1500.0
DESPAWN_X = 1500.0

# Run horizons
DT = 0.1
DESK_T_MAX = 2000.0
DESK_REPLICATIONS = 5
FULL_T_MAX = 20000.0
FULL_REPLICATIONS = 25
BASE_SEED = 0

# Sweep grids
T_V_GRID = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5]
V_MAX_GRID = [33.0, 34.0, 35.0, 36.0, 37.0, 38.0]
HOLD_DISTANCE_GRID = [110.0, 130.0, 150.0, 170.0]
SWEEP_VARIABLES = ('T_v', 'v_max', 'x_g_dist')

# Results CSV
CSV_FLOAT_FORMAT = '%.6g'
CSV_COLUMNS = ['kind', 'seed', 'T_v', 'v_max', 'L_plat', 'N_plat', 'x_g_dist',
               'a_tot', 'd_tot', 't_ave', 'merge_rate', 'mean_queue_wait', 'failures',
               'a_tot_se', 'd_tot_se', 't_ave_se', 'merge_rate_se']
METRIC_COLUMNS = ['a_tot', 'd_tot', 't_ave', 'merge_rate', 'mean_queue_wait', 'failures']

default_config_path = os.path.join(parent_dir, 'configs', 'default.json')
