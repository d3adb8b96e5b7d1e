import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from core.base import Command, CommandResult, ConfigError, UnsupportedCommandError
from core.data_manager import DataConfigurator
from core.physics.atoms import TransitionTable
from core.physics.lattice import StructureParams
from core.physics.pwe import BandSet, WaveguideSolver
from core.settings import ToolkitSettings

logger = logging.getLogger(__name__)


@dataclass
class RunContext:
    """Inputs of one command invocation, plus lazily built shared state."""

    settings: ToolkitSettings
    out_dir: Path
    structure: Optional[StructureParams] = None
    config_path: Optional[Path] = None
    threads: int = 1
    seed: int = 0
    data: DataConfigurator = field(default_factory=DataConfigurator)
    options: Dict[str, Any] = field(default_factory=dict)
    _cache: Dict[str, Any] = field(default_factory=dict, repr=False)

    def require_structure(self) -> StructureParams:
        if self.structure is None:
            raise ConfigError("this command needs a structure file (--config)")
        return self.structure

    def solver(self) -> WaveguideSolver:
        if "solver" not in self._cache:
            solver_settings = self.settings.solver
            self._cache["solver"] = WaveguideSolver(
                self.require_structure(), cutoff_2pi_over_a=solver_settings.cutoff_2pi_over_a,
                n_bands=solver_settings.n_bands, threads=self.threads,
            )
        return self._cache["solver"]

    def bands(self) -> BandSet:
        if "bands" not in self._cache:
            solver = self.solver()
            self._cache["bands"] = solver.solve(solver.k_grid(self.settings.solver.n_k))
        return self._cache["bands"]

    def transitions(self) -> TransitionTable:
        if "transitions" not in self._cache:
            self._cache["transitions"] = self.data.transitions()
        return self._cache["transitions"]

    def output(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / name


class SlowLightToolkit:
    """Dispatches a command name to the registered handlers."""

    def __init__(self):
        self._commands: List[Command] = []

        # Later registrations are tried first
        from core.commands.bands import BandsCommand, ModeFieldCommand, SlabNeffCommand
        from core.commands.c3 import C3Command
        from core.commands.optimize import OptimizeCommand
        from core.commands.purcell import PurcellCommand
        from core.commands.trap import DoubleWellScanCommand, TrapCommand, TrapScanCommand, ZeemanCommand

        self.register_command(SlabNeffCommand())
        self.register_command(BandsCommand())
        self.register_command(ModeFieldCommand())
        self.register_command(OptimizeCommand())
        self.register_command(PurcellCommand())
        self.register_command(TrapCommand())
        self.register_command(TrapScanCommand())
        self.register_command(ZeemanCommand())
        self.register_command(DoubleWellScanCommand())
        self.register_command(C3Command())

    @property
    def command_names(self) -> List[str]:
        return sorted(command.name for command in self._commands)

    def register_command(self, command: Command) -> None:
        self._commands.insert(0, command)

    def run(self, name: str, context: RunContext, **kwargs: Any) -> CommandResult:
        for command in self._commands:
            result = command.run(context, name=name, **kwargs)
            if result is not None:
                logger.info("%s wrote %d file(s)", name, len(result.outputs))
                return result
        raise UnsupportedCommandError(f"unknown command {name!r}; available: {', '.join(self.command_names)}")
