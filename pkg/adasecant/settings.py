import logging
import os
from typing import Optional

from dotenv import load_dotenv

load_dotenv()

LOG_LEVEL = os.getenv("ADASECANT_LOG_LEVEL", "WARNING")
DEFAULT_SEED = int(os.getenv("ADASECANT_SEED", "0"))
RESULTS_DIR = os.getenv("ADASECANT_RESULTS_DIR", "results")
FD_STEP = float(os.getenv("ADASECANT_FD_STEP", "1e-5"))

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: Optional[str] = None) -> None:
    """Install the root handler once; later calls only adjust the level."""
    resolved = (level or LOG_LEVEL).upper()
    numeric = getattr(logging, resolved, None)
    if not isinstance(numeric, int):
        numeric = logging.WARNING
    root = logging.getLogger()
    if not root.handlers:
        logging.basicConfig(level=numeric, format=LOG_FORMAT)
    root.setLevel(numeric)
