from dotenv import load_dotenv
import os

load_dotenv()

# Online algorithm (eGLB)
DEFAULT_ETA = float(os.getenv("EGLB_ETA", "1.7e-4"))
DEFAULT_MU_CARBON = float(os.getenv("EGLB_MU_CARBON", "1500"))
DEFAULT_MU_WATER = float(os.getenv("EGLB_MU_WATER", "60"))

# Offline optimum and MPC
DEFAULT_MPC_WINDOW = int(os.getenv("EGLB_MPC_WINDOW", "24"))
OFFLINE_TOL = float(os.getenv("EGLB_OFFLINE_TOL", "1e-4"))
OFFLINE_MAX_ITERS = int(os.getenv("EGLB_OFFLINE_MAX_ITERS", "2000"))
MPC_MAX_ITERS = int(os.getenv("EGLB_MPC_MAX_ITERS", "300"))

# Equity-oblivious baselines (GLB-C2 / GLB-All weights)
C2_CARBON_WEIGHT = float(os.getenv("EGLB_C2_CARBON_WEIGHT", "1500"))
ALL_CARBON_WEIGHT = float(os.getenv("EGLB_ALL_CARBON_WEIGHT", "1500"))
ALL_WATER_WEIGHT = float(os.getenv("EGLB_ALL_WATER_WEIGHT", "60"))

# Trace synthesis
DEFAULT_PUE = float(os.getenv("EGLB_DEFAULT_PUE", "1.1"))
DEFAULT_SEED = int(os.getenv("EGLB_SEED", "0"))
AUGMENT_PERTURBATION = float(os.getenv("EGLB_PERTURBATION", "0.25"))
GATEWAY_PERTURBATION = float(os.getenv("EGLB_GATEWAY_PERTURBATION", "0.05"))

# Numerics
FEASIBILITY_TOL = float(os.getenv("EGLB_FEASIBILITY_TOL", "1e-9"))

# Logging and output
LOG_LEVEL = os.getenv("EGLB_LOG_LEVEL", "INFO").upper()
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
OUTPUT_DIR = os.getenv("EGLB_OUTPUT_DIR", "runs")
