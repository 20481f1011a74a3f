"""
Run context and exit codes of the command-line harness.

RunContext carries the seed, output directory, thread count, environment
settings and configuration file of one invocation. ContextManager runs a
command inside it and turns advkern errors into process exit codes.
"""

from __future__ import annotations

import time
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Type

from pydantic import BaseModel, ValidationError

from advkern.config import Settings
from advkern.exceptions import (
    AdvKernError,
    ConfigurationError,
    DataError,
    DataIOError,
    KernelError,
    RadiusError,
    SolverError,
)
from advkern.utils.io import config_digest, read_json
from advkern.utils.logging import get_advkern_logger

# Get configured logger for this module
logger = get_advkern_logger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4

_EXIT_CODES: Tuple[Tuple[Type[BaseException], int], ...] = (
    (ValidationError, EXIT_CONFIG),
    (ConfigurationError, EXIT_CONFIG),
    (KernelError, EXIT_CONFIG),
    (RadiusError, EXIT_CONFIG),
    (SolverError, EXIT_SOLVER),
    (DataIOError, EXIT_IO),
    (DataError, EXIT_CONFIG),
    (AdvKernError, 1),
)


def exit_code_for(error: BaseException) -> int:
    """Exit code of an error raised by a command; unknown errors propagate."""
    for cls, code in _EXIT_CODES:
        if isinstance(error, cls):
            return code
    raise error


class RunContext:
    """
    Shared state of one harness invocation.

    The root command builds it from the global options and stores it in the
    Typer context, so every subcommand sees the same seed, output directory,
    thread count and configuration file.

    Attributes:
        seed (int): Run seed
        out_dir (Path): Directory receiving every output file
        threads (int): Worker threads
        settings (Settings): Environment defaults of the numerical knobs
        file_config (Dict[str, Any]): Configuration file contents keyed by command name
    """

    def __init__(
        self,
        seed: int = 0,
        out_dir: Path = Path("results"),
        threads: Optional[int] = None,
        config_file: Optional[Path] = None,
        settings: Optional[Settings] = None,
    ) -> None:
        """
        Initialize a RunContext.

        Raises:
            ConfigurationError: If the configuration file is not a JSON object or threads < 1
            DataIOError: If the configuration file cannot be read
        """
        self.seed = seed
        self.out_dir = Path(out_dir)
        self.settings = settings or Settings()
        self.threads = self.settings.threads if threads is None else threads
        if self.threads < 1:
            raise ConfigurationError(f"threads must be >= 1, got {self.threads}")
        self.file_config: Dict[str, Any] = {}
        if config_file is not None:
            data = read_json(config_file)
            if not isinstance(data, dict):
                raise ConfigurationError(f"Configuration file {config_file} must hold a JSON object")
            self.file_config = data

    def section(self, name: str) -> Dict[str, Any]:
        """Configuration file entries of one command."""
        section = self.file_config.get(name, {})
        if not isinstance(section, dict):
            raise ConfigurationError(f"Configuration section '{name}' must be a JSON object")
        return dict(section)

    def merge(self, name: str, options: Dict[str, Any]) -> Dict[str, Any]:
        """File entries of a command overridden by the options given on the command line."""
        merged = self.section(name)
        merged.update({key: value for key, value in options.items() if value not in (None, [], ())})
        return merged

    def digest(self, name: str, config: BaseModel) -> str:
        """Hash of the command name and its validated configuration."""
        return config_digest({"command": name, "config": config.model_dump(mode="json")})

    def output(self, filename: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / filename

    def __str__(self) -> str:
        return (
            f"RunContext(seed={self.seed}, out_dir='{self.out_dir}', threads={self.threads}, "
            f"sections={sorted(self.file_config)})"
        )


class ContextManager:
    """
    Runs one command inside a RunContext.

    Errors raised by the command are logged and turned into exit codes:
    2 for configuration, kernel and radius errors, 3 for solver failures and
    4 for data errors. Files already written by the command are left in place.
    """

    def __init__(self, ctx: RunContext):
        self.ctx = ctx

    def run(self, name: str, action: Callable[[], None]) -> int:
        """
        Execute a command action.

        Args:
            name (str): Command name, for log messages
            action (Callable[[], None]): The command body

        Returns:
            int: Process exit code
        """
        logger.info(f"Running '{name}' in {self.ctx}")
        start = time.perf_counter()
        try:
            action()
        except (AdvKernError, ValidationError) as e:
            code = exit_code_for(e)
            logger.error(f"'{name}' failed ({type(e).__name__}): {e}")
            return code
        finally:
            logger.info(f"'{name}' finished in {time.perf_counter() - start:.2f}s")
        return EXIT_OK
