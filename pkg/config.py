import os
import psutil
from dotenv import load_dotenv

class Config:
    def __init__(self, profile: str = None):
        # Load profile-specific .env file if profile is provided
        if profile:
            env_file = f'.env.{profile}'
            if os.path.exists(env_file):
                load_dotenv(env_file, override=True)
            else:
                # Fall back to default .env if profile-specific file doesn't exist
                load_dotenv()
        else:
            load_dotenv()

    # Logging / output locations
    @property
    def LOG_LEVEL(self):
        return os.getenv('LOG_LEVEL', 'INFO')

    @property
    def LOG_DIR(self):
        return os.getenv('LOG_DIR', 'logs')

    @property
    def REPORT_DIR(self):
        return os.getenv('REPORT_DIR', 'reports')

    # Worker pools
    @property
    def CPCM_THREADS(self):
        default = psutil.cpu_count(logical=False) or 1
        return max(1, int(os.getenv('CPCM_THREADS', default)))

    # Independence testing
    @property
    def N_PERM_DISCOVERY(self):
        return int(os.getenv('N_PERM_DISCOVERY', 499))

    @property
    def N_PERM_ACCEPTANCE(self):
        return int(os.getenv('N_PERM_ACCEPTANCE', 999))

    @property
    def MEDIAN_HEURISTIC_MAX_POINTS(self):
        return int(os.getenv('MEDIAN_HEURISTIC_MAX_POINTS', 1000))

    # Discovery
    @property
    def DEFAULT_ALPHA(self):
        return float(os.getenv('DEFAULT_ALPHA', 0.05))

    @property
    def DEFAULT_LAMBDA(self):
        return float(os.getenv('DEFAULT_LAMBDA', 2.0))

    # Spline estimator
    @property
    def SPLINE_INTERIOR_KNOTS(self):
        return int(os.getenv('SPLINE_INTERIOR_KNOTS', 10))

    @property
    def SPLINE_DEGREE(self):
        return int(os.getenv('SPLINE_DEGREE', 3))

    @property
    def CV_FOLDS(self):
        return int(os.getenv('CV_FOLDS', 5))

    @property
    def MAX_NEWTON_ITER(self):
        return int(os.getenv('MAX_NEWTON_ITER', 100))
