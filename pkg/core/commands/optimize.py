from typing import Any, Optional

from core.base import Command, CommandResult, MaxIterError
from core.commands.artifacts import write_csv, write_json
from core.physics.dispersion import optimize
from core.toolkit import RunContext


class OptimizeCommand(Command):
    """Row-perturbation search for a flat slow-light band."""

    name = "optimize"

    def run(self, context: RunContext, **kwargs: Any) -> Optional[CommandResult]:
        if kwargs.get("name") != self.name:
            return None

        params = context.require_structure()
        spec = context.settings.optimization
        solver = context.settings.solver
        strict = bool(context.options.get("strict", False))
        try:
            result = optimize(params, spec, seed=context.seed, cutoff_2pi_over_a=solver.cutoff_2pi_over_a,
                              n_bands=solver.n_bands, threads=context.threads, strict=strict)
            failure = None
        except MaxIterError as e:
            result, failure = e.result, e

        names = ["dy1", "dr1", "dy2", "dr2", "dy3", "dr3"]
        report = {
            "converged": result.converged,
            "cost": result.cost,
            "evaluations": result.evaluations,
            "perturbations_nm": dict(zip(names, result.params.perturbation_vector())),
            "target_ng": spec.target_ng,
            "dispersion": result.report.to_dict() if result.report is not None else None,
        }
        outputs = [
            write_csv(result.trace_frame(), context.output("optimize_trace.csv")),
            write_json(result.params.to_config(), context.output("optimized_structure.json")),
            write_json(report, context.output("optimize_report.json")),
        ]
        if failure is not None:
            # best-so-far files are on disk before the error propagates
            raise failure
        return CommandResult(self.name, outputs, report)
