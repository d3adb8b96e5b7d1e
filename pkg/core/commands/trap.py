import logging
from typing import Any, Optional

import scipy.constants as sc

from core.base import Command, CommandResult
from core.commands.artifacts import write_csv, write_json
from core.commands.purcell import coupling_field
from core.physics.casimir import compute_c3
from core.physics.coupling import Channel, coupling_map, thermal_coupling
from core.physics.trap import (
    TrapModel, axis_cuts, double_well_scan, intensity_offset, resolve_beam, wavelength_scan, zeeman_compensation,
)
from core.toolkit import RunContext

logger = logging.getLogger(__name__)


def c3_for(context: RunContext) -> Optional[float]:
    """C3 in J m^3: configured value, else computed from the permittivity data."""
    settings = context.settings.trap
    if not settings.include_cp:
        return None
    if settings.c3_Hz_um3 is not None:
        return settings.c3_Hz_um3 * sc.h * 1e-18
    casimir = context.settings.casimir
    table = context.data.permittivity(casimir.permittivity_file)
    result = compute_c3(table, context.transitions(), casimir.xi_range, casimir.n_start, casimir.n_max,
                        casimir.rel_tol)
    return result.c3_SI


def trap_model(context: RunContext) -> TrapModel:
    settings = context.settings.trap
    params = context.require_structure()
    solver, bands = context.solver(), context.bands()
    return TrapModel(
        resolver=lambda spec: resolve_beam(solver, spec, bands),
        table=context.transitions(),
        grid=settings.grid.axes(params.a),
        t_nm=params.t,
        mass=settings.mass_kg,
        F=settings.F,
        mF=settings.mF,
        c3_J_m3=c3_for(context),
        include_cp=settings.include_cp,
        box=settings.search_box_nm,
        threads=context.threads,
    )


class TrapCommand(Command):
    """Two-color potential, trap figures, axis cuts and the thermally averaged beta."""

    name = "trap"

    def run(self, context: RunContext, **kwargs: Any) -> Optional[CommandResult]:
        if kwargs.get("name") != self.name:
            return None

        settings = context.settings.trap
        model = trap_model(context)
        beams = model.beams(settings.beams)
        potential = model.potential(beams)
        report = model.analyze(potential)

        coupling = context.settings.coupling
        field, _, _ = coupling_field(context)
        channel = Channel(F=coupling.F, mF=coupling.mF, q=coupling.q, Fp=coupling.Fp, line=coupling.line)
        xs, ds, zs = model.grid
        cmap = coupling_map(field, channel, xs, ds, zs, model.table, coupling.gamma_prime,
                            coupling.both_directions, context.threads)
        summary = report.to_dict()
        summary["beta_thermal"] = thermal_coupling(potential, cmap, report.depth_mK, settings.temperature_fraction,
                                                   settings.mF, report.r_min)
        summary["c3_J_m3"] = model.c3_J_m3
        by_label = {beam.label: beam for beam in beams}
        if "red" in by_label and "blue" in by_label:
            summary["intensity_offset_a"] = intensity_offset(by_label["red"].field, by_label["blue"].field,
                                                             context.require_structure().a, report.r_min[1])

        outputs = [write_json(summary, context.output("trap_report.json"))]
        for axis, frame in axis_cuts(potential, report).items():
            outputs.append(write_csv(frame, context.output(f"trap_cut_{axis}.csv")))
        return CommandResult(self.name, outputs, summary)


class TrapScanCommand(Command):
    """Feasible wavelength intervals of one beam under a power cap."""

    name = "trap-scan"

    def run(self, context: RunContext, **kwargs: Any) -> Optional[CommandResult]:
        if kwargs.get("name") != self.name:
            return None

        settings = context.settings.trap
        result = wavelength_scan(trap_model(context), settings.beams, settings.scan_label, settings.scan_range_nm,
                                 settings.scan_step_nm, settings.scan_power_cap_mW, settings.scan_power_step_mW)
        summary = {
            "label": settings.scan_label,
            "power_cap_mW": settings.scan_power_cap_mW,
            "intervals_nm": [list(item) for item in result.intervals],
            "feasible_width_nm": result.feasible_width_nm,
        }
        outputs = [
            write_csv(result.table, context.output("trap_scan.csv")),
            write_json(summary, context.output("trap_scan.json")),
        ]
        return CommandResult(self.name, outputs, summary)


class ZeemanCommand(Command):
    """mF broadening with single beams versus detuned counter-propagating pairs."""

    name = "zeeman"

    def run(self, context: RunContext, **kwargs: Any) -> Optional[CommandResult]:
        if kwargs.get("name") != self.name:
            return None

        settings = context.settings.trap
        report = zeeman_compensation(trap_model(context), settings.beams, settings.red_pair_detuning_GHz,
                                     settings.blue_pair_detuning_GHz)
        summary = report.to_dict()
        return CommandResult(self.name, [write_json(summary, context.output("zeeman.json"))], summary)


class DoubleWellScanCommand(Command):
    """Double-well flag along a power ramp of one beam."""

    name = "double-well-scan"

    def run(self, context: RunContext, **kwargs: Any) -> Optional[CommandResult]:
        if kwargs.get("name") != self.name:
            return None

        settings = context.settings.trap
        frame = double_well_scan(trap_model(context), settings.beams, settings.double_well_label,
                                 settings.double_well_powers_mW)
        summary = {"label": settings.double_well_label, "double_well_powers_mW":
                   [float(p) for p, flag in zip(frame["power_mW"], frame["double_well_z"]) if flag]}
        return CommandResult(self.name, [write_csv(frame, context.output("double_well_scan.csv"))], summary)
