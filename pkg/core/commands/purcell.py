from typing import Any, Optional, Tuple

import numpy as np

from core.base import Command, CommandResult, ConfigError
from core.commands.artifacts import write_csv, write_json
from core.physics import C_NM_THZ
from core.physics.atoms import free_space_rate
from core.physics.coupling import (
    Channel, beta_factor, channel_rates, coupling_map, ellipticity, gamma1d, purcell_along_band, sigma_ratio,
)
from core.physics.pwe import Field3D, mode_at_frequency
from core.toolkit import RunContext


def span(start: float, stop: float, step: float) -> np.ndarray:
    if stop <= start:
        return np.array([start])
    return np.arange(start, stop + step / 2, step)


def coupling_field(context: RunContext) -> Tuple[Field3D, int, float]:
    """Mode seen by the atom: explicit (band, k) or the guided mode at the line wavelength."""
    settings = context.settings.coupling
    params = context.require_structure()
    solver, bands = context.solver(), context.bands()
    if settings.k_over_pi_a is not None:
        if settings.band is None:
            raise ConfigError("coupling.k_over_pi_a needs coupling.band")
        band, k = settings.band, settings.k_over_pi_a * np.pi / params.a
    else:
        wavelength = settings.wavelength_nm or context.transitions().line(settings.line).wavelength_nm
        band, k = mode_at_frequency(bands, C_NM_THZ / wavelength, settings.band,
                                    context.settings.solver.edge_fraction_min)
    return solver.field(k, bands.sorted_index(band, k)), band, k


class PurcellCommand(Command):
    """Gamma_1D, beta and polarization at the atom position, along the band and on a map."""

    name = "purcell"

    def run(self, context: RunContext, **kwargs: Any) -> Optional[CommandResult]:
        if kwargs.get("name") != self.name:
            return None

        settings = context.settings.coupling
        table = context.transitions()
        channel = Channel(F=settings.F, mF=settings.mF, q=settings.q, Fp=settings.Fp, line=settings.line)
        field, band, k = coupling_field(context)
        pos = settings.position_nm

        rate = gamma1d(field, channel, pos, table, settings.both_directions)
        polarization = ellipticity(field, [pos[0]], [pos[1]], [pos[2]])
        rates = channel_rates(field, settings.F, settings.mF, pos, table, settings.line, settings.both_directions)
        summary = {
            "band": band,
            "k_over_pi_a": k * field.a / np.pi,
            "freq_THz": field.freq,
            "ng": 1.0 / abs(field.vg),
            "position_nm": list(pos),
            "channel": {"F": channel.F, "mF": channel.mF, "q": channel.q, "Fp": channel.Fp, "line": channel.line},
            "gamma0_rad_s": free_space_rate(table.line(settings.line)),
            "gamma1d_over_gamma0": rate,
            "beta": beta_factor(rate, settings.gamma_prime),
            "Cz": float(polarization.Cz.ravel()[0]),
            "f_sigma_plus": float(polarization.f_sigma_plus.ravel()[0]),
            "channel_rates": [{"q": q, "Fp": Fp, "gamma1d_over_gamma0": value}
                              for (q, Fp), value in sorted(rates.items())],
            "sigma_plus_over_minus": sigma_ratio(field, pos, table, settings.F, settings.mF),
        }

        along = purcell_along_band(context.solver(), context.bands(), band, pos, channel, table,
                                   context.settings.optimization.k_window)
        xs = np.arange(settings.map_x_points) * field.a / settings.map_x_points
        cmap = coupling_map(field, channel, xs, span(*settings.map_d_nm), span(*settings.map_z_nm), table,
                            settings.gamma_prime, settings.both_directions, context.threads)
        outputs = [
            write_json(summary, context.output("purcell.json")),
            write_csv(along, context.output("purcell_band.csv")),
            write_csv(cmap.to_frame(), context.output("coupling_map.csv")),
        ]
        return CommandResult(self.name, outputs, summary)
