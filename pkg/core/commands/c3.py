from typing import Any, Optional

from core.base import Command, CommandResult
from core.commands.artifacts import write_json
from core.physics.casimir import compute_c3
from core.toolkit import RunContext


class C3Command(Command):
    """C3 for the ground-state atom facing the slab material."""

    name = "c3"

    def run(self, context: RunContext, **kwargs: Any) -> Optional[CommandResult]:
        if kwargs.get("name") != self.name:
            return None

        settings = context.settings.casimir
        table = context.data.permittivity(settings.permittivity_file)
        result = compute_c3(table, context.transitions(), settings.xi_range, settings.n_start, settings.n_max,
                            settings.rel_tol)
        summary = result.to_dict()
        return CommandResult(self.name, [write_json(summary, context.output("c3.json"))], summary)
