from pathlib import Path

# -------------------- Path related --------------------- #

PACKAGE_ROOT = Path(__file__).resolve().parent
PROJECT_ROOT = PACKAGE_ROOT.parent.parent

LOGS_DIR = PROJECT_ROOT / "logs"
TEMPLATES_DIR = PACKAGE_ROOT / "templates"

# ------------------- Latent codes ---------------------- #

LATENT_DTYPE = "float64"
PCA_ORTHONORMAL_TOL = 1e-8

# ------------------ HRF / GLM design ------------------- #

# SPM canonical two-gamma parameters (seconds)
HRF_PEAK_DELAY_S = 6.0
HRF_UNDERSHOOT_DELAY_S = 16.0
HRF_PEAK_DISPERSION = 1.0
HRF_UNDERSHOOT_DISPERSION = 1.0
HRF_PEAK_UNDERSHOOT_RATIO = 6.0
HRF_KERNEL_LENGTH_S = 32.0
FFT_ROUNDOFF = 1e-12

DEFAULT_TR_S = 2.0
MICROTIME_BINS = 16

BIAS_REGRESSOR = "bias"
CONSTANT_REGRESSOR = "constant"
LATENT_REGRESSOR_PREFIX = "latent_"
MOTION_REGRESSOR_PREFIX = "motion_"

RANK_TOLERANCE = 1e-10

# --------------------- Decoder fit --------------------- #

DEFAULT_RIDGE = 0.0
MIN_RECIPROCAL_CONDITION = 1e-12

# ------------------- Voxel selection ------------------- #

T_THRESHOLD = 4.0
GAIN_THRESHOLD_PCT = 8.0

# --------------------- Statistics ---------------------- #

MC_DRAWS = 1_000_000
MC_CHUNK_DRAWS = 50_000
MAX_ENUMERATION = 100_000_000
DEFAULT_SEED = 20190422
NEMENYI_ALPHA = 0.05

# Nemenyi critical values q_0.05 (studentized range / sqrt(2), infinite df)
NEMENYI_Q_005 = {
    2: 1.960,
    3: 2.343,
    4: 2.569,
    5: 2.728,
    6: 2.850,
    7: 2.949,
    8: 3.031,
    9: 3.102,
    10: 3.164,
}

# ------------------------ SSIM ------------------------- #

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_DATA_RANGE = 1.0

# --------------------- Simulator ----------------------- #

SIM_N_TRAIN = 800
SIM_N_TEST = 20
SIM_N_LATENT = 64
SIM_N_VOXELS = 1500
SIM_STIM_DURATION_S = 1.0
SIM_ISI_S = 2.0
SIM_TEST_REPEATS = 5
SIM_N_FIXATION = 100
SIM_LEAD_IN_S = 6.0
SIM_TAIL_S = 32.0
SIM_VOXEL_SIZE_MM = 3.0

# ------------------- File formats ---------------------- #

MATRIX_MAGIC = b"LDMX"
MATRIX_VERSION = 1
MATRIX_HEADER_FORMAT = "<4sIQQ"
MATRIX_SUFFIX = ".ldmx"
IDS_SUFFIX = ".ids"
COLS_SUFFIX = ".cols"
REPORT_FLOAT_FORMAT = "%.6g"
