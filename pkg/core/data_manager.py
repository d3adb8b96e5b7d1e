import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

from core.physics.atoms import TransitionTable, load_transition_table
from core.physics.casimir import PermittivityTable, gainp_two_oscillator_table, load_permittivity_table

logger = logging.getLogger(__name__)

BUNDLED_DIR = Path(__file__).resolve().parent.parent / "assets"
TRANSITIONS_FILE = "rb87_transitions.csv"
PERMITTIVITY_FILE = "gainp_permittivity.csv"
SETTINGS_FILE = "settings_default.json"


class DataConfigurator:
    """Data asset resolution; SLF_DATA_DIR overrides the bundled assets file by file."""

    def __init__(self, data_dir: Optional[Union[str, Path]] = None):
        self.data_dir = Path(data_dir) if data_dir else self._get_data_dir()

    @staticmethod
    def _get_data_dir() -> Path:
        env_path = os.getenv("SLF_DATA_DIR")
        return Path(env_path) if env_path else BUNDLED_DIR

    def resolve(self, name: str) -> Optional[Path]:
        candidate = self.data_dir / name
        if candidate.exists():
            return candidate
        bundled = BUNDLED_DIR / name
        if bundled.exists():
            if self.data_dir != BUNDLED_DIR:
                logger.info("%s not in %s, using the bundled copy", name, self.data_dir)
            return bundled
        return None

    def transitions(self) -> TransitionTable:
        path = self.resolve(TRANSITIONS_FILE)
        if path is None:
            raise FileNotFoundError(f"{TRANSITIONS_FILE} missing from {self.data_dir} and {BUNDLED_DIR}")
        return load_transition_table(path)

    def permittivity(self, path: Optional[Union[str, Path]] = None) -> PermittivityTable:
        """Explicit file, else a data-dir table, else the analytic two-oscillator model."""
        if path is not None:
            return load_permittivity_table(path)
        found = self.resolve(PERMITTIVITY_FILE)
        if found is not None:
            return load_permittivity_table(found)
        logger.warning("no %s found; using the two-oscillator GaInP model", PERMITTIVITY_FILE)
        return gainp_two_oscillator_table()

    def default_settings(self) -> Dict[str, Any]:
        path = self.resolve(SETTINGS_FILE)
        if path is None:
            return {}
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)

    def digests(self) -> Dict[str, str]:
        """sha256 of every data file in use, keyed by file name."""
        digests = {}
        for name in (TRANSITIONS_FILE, PERMITTIVITY_FILE, SETTINGS_FILE):
            path = self.resolve(name)
            if path is not None:
                digests[name] = hashlib.sha256(path.read_bytes()).hexdigest()
        return digests
