"""Platform-specific application directory management."""

import logging
import os
import sys
from pathlib import Path

import platformdirs

logger = logging.getLogger(__name__)


class AppDirectories:
    """Resolves where logs go and which .env files are read."""

    APP_NAME = "pecl-lab"
    APP_AUTHOR = None  # Use None to avoid duplicate folder structure

    def __init__(self):
        self._logs_dir = None
        self._env_loaded = False

    def _check_development_mode(self) -> bool:
        """Check if running in development mode."""
        return (
            os.getenv("PECL_LAB_DEV", "").lower() in ("1", "true", "yes")
            or "pytest" in sys.modules
        )

    @property
    def logs_dir(self) -> Path:
        """Directory for log files; PECL_LAB_LOG_DIR wins over platform defaults."""
        if self._logs_dir is None:
            override = os.getenv("PECL_LAB_LOG_DIR")
            if override:
                self._logs_dir = Path(override)
            elif self._check_development_mode():
                self._logs_dir = Path.cwd() / "logs"
            else:
                self._logs_dir = Path(
                    platformdirs.user_log_dir(appname=self.APP_NAME, appauthor=self.APP_AUTHOR)
                )
        return self._logs_dir

    @property
    def env_files(self):
        return [Path(".env"), Path(".env.local")]

    def load_env_files(self):
        """Load .env files once; existing environment variables win."""
        if self._env_loaded:
            return
        from dotenv import load_dotenv

        for env_file in self.env_files:
            if env_file.exists():
                load_dotenv(env_file, override=False)
                logger.debug(f"Loaded environment from: {env_file}")
        self._env_loaded = True


app_dirs = AppDirectories()
