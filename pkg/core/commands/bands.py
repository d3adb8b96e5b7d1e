from typing import Any, Optional

import numpy as np
import pandas as pd

from core.base import Command, CommandResult, NoGuidedBandError
from core.commands.artifacts import write_csv, write_json
from core.physics.dispersion import select_slow_band
from core.physics.pwe import classify_guided_bands, slab_effective_index
from core.toolkit import RunContext


class SlabNeffCommand(Command):
    """Effective index of the unpatterned slab at the reference wavelength."""

    name = "slab-neff"

    def run(self, context: RunContext, **kwargs: Any) -> Optional[CommandResult]:
        if kwargs.get("name") != self.name:
            return None

        params = context.require_structure()
        slab = slab_effective_index(params.n_slab, params.t, params.lambda_ref)
        summary = {
            "n_slab": params.n_slab,
            "t_nm": params.t,
            "lambda_nm": params.lambda_ref,
            "n_eff": slab.n_eff,
            "k_in_per_nm": slab.k_in,
            "kappa_per_nm": slab.kappa,
            "confinement": slab.inside_weight / slab.z_weight,
        }
        outputs = [
            write_json(summary, context.output("slab_neff.json")),
            write_csv(pd.DataFrame({"z_nm": slab.z, "f_z": slab.f_z}), context.output("slab_profile.csv")),
        ]
        return CommandResult(self.name, outputs, summary)


class BandsCommand(Command):
    """Tracked bands over [0, pi/a] plus the bulk gap and the edge-guided bands."""

    name = "bands"

    def run(self, context: RunContext, **kwargs: Any) -> Optional[CommandResult]:
        if kwargs.get("name") != self.name:
            return None

        context.require_structure()
        solver = context.solver()
        bands = context.bands()
        gap = solver.gap(context.settings.solver.bulk_n_bands)
        guided = classify_guided_bands(bands, gap, context.settings.solver.edge_fraction_min)
        summary = {
            "n_eff": solver.slab.n_eff,
            "plane_waves": solver.basis.size,
            "n_k": len(bands.k),
            "n_bands": bands.n_bands,
            "bulk_gap_THz": list(gap) if gap is not None else None,
            "guided_bands": [
                {"band": g.band, "k_min_over_pi_a": g.k_min, "k_max_over_pi_a": g.k_max,
                 "nu_min_THz": g.nu_min, "nu_max_THz": g.nu_max}
                for g in guided
            ],
        }
        outputs = [
            write_csv(bands.to_frame(), context.output("bands.csv")),
            write_json(summary, context.output("gap.json")),
        ]
        return CommandResult(self.name, outputs, summary)


class ModeFieldCommand(Command):
    """In-plane E of one guided mode on the dielectric grid."""

    name = "mode-field"

    def run(self, context: RunContext, **kwargs: Any) -> Optional[CommandResult]:
        if kwargs.get("name") != self.name:
            return None

        params = context.require_structure()
        solver = context.solver()
        spec = context.settings.optimization
        k_over_pi_a = context.options.get("k")
        if k_over_pi_a is None:
            k_over_pi_a = 0.5 * sum(spec.k_window)
        band = context.options.get("band")
        bands = context.bands()
        if band is None:
            band = select_slow_band(bands, spec, context.settings.solver.edge_fraction_min)
            if band is None:
                raise NoGuidedBandError("no edge-guided band at the window centre")
        k = float(k_over_pi_a) * np.pi / params.a
        mode = solver.mode(k, bands.sorted_index(band, k))

        nx, ny = mode.eps_map.grid_shape
        ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        E = mode.E_inplane
        frame = pd.DataFrame({
            "ix": ix.ravel(),
            "iy": iy.ravel(),
            "x_nm": mode.eps_map.x_coords()[ix].ravel(),
            "y_nm": mode.eps_map.y_coords()[iy].ravel(),
            "re_Ex": E[..., 0].real.ravel(),
            "im_Ex": E[..., 0].imag.ravel(),
            "re_Ey": E[..., 1].real.ravel(),
            "im_Ey": E[..., 1].imag.ravel(),
        })
        summary = {
            "band": int(band),
            "k_over_pi_a": float(k_over_pi_a),
            "freq_THz": mode.freq,
            "vg_over_c": mode.vg,
            "vg_hf_over_c": mode.vg_hf,
            "grid": [nx, ny],
        }
        outputs = [
            write_csv(frame, context.output("mode_field.csv")),
            write_json(summary, context.output("mode_field.json")),
        ]
        return CommandResult(self.name, outputs, summary)
