"""Parametric metabolite basis sets and per-metabolite spectral rendering."""

from dataclasses import dataclass

import numpy as np

from .errors import UnknownMetaboliteError, ValidationError
from .signal import (
    DEFAULT_REFERENCE_PPM,
    AcquisitionParams,
    ComplexSpectrum,
    LorentzianComponent,
    fid_to_spectrum,
    ppm_axis,
    synthesize_fid,
)

# Baseline T2* for the built-in basis; 0.1 s gives a ~3.2 Hz Lorentzian width.
DEFAULT_COMPONENT_T2 = 0.1

# Chemical shifts (ppm) and relative amplitudes for the built-in brain basis.
# Amplitudes within each metabolite sum to 1 so unit concentration carries
# the same integrated area for every metabolite.  These are configuration
# constants, replaceable by any user-supplied basis file.
_BRAIN_BASIS_LINES = {
    "NAA": [(2.01, 1.0)],
    "Cr": [(3.03, 0.6), (3.91, 0.4)],
    "Cho": [(3.19, 1.0)],
    "mI": [(3.52, 0.22), (3.54, 0.28), (3.56, 0.28), (3.61, 0.22)],
    "Glx": [(2.05, 0.18), (2.12, 0.16), (2.35, 0.18), (2.45, 0.13), (3.75, 0.35)],
}


@dataclass(frozen=True)
class MetaboliteBasis:
    """A named metabolite: its resonance lines at unit concentration."""

    name: str
    components: tuple

    def __post_init__(self):
        if not self.name:
            raise ValidationError("metabolite name must be nonempty")
        comps = tuple(self.components)
        if len(comps) == 0:
            raise ValidationError(f"metabolite {self.name!r} must have at least one component")
        for c in comps:
            if not isinstance(c, LorentzianComponent):
                raise ValidationError("components must be LorentzianComponent instances")
        object.__setattr__(self, "components", comps)


@dataclass(frozen=True)
class BasisSet:
    """Ordered collection of metabolite bases sharing one acquisition and reference."""

    metabolites: tuple
    params: AcquisitionParams
    reference_ppm: float = DEFAULT_REFERENCE_PPM

    def __post_init__(self):
        mets = tuple(self.metabolites)
        names = [m.name for m in mets]
        if len(set(names)) != len(names):
            raise ValidationError(f"metabolite names must be unique, got {names}")
        object.__setattr__(self, "metabolites", mets)

    @property
    def names(self):
        return [m.name for m in self.metabolites]

    def get(self, name):
        for m in self.metabolites:
            if m.name == name:
                return m
        raise UnknownMetaboliteError(f"unknown metabolite {name!r}; basis has {self.names}")


def render_metabolite(basis, name, concentration, t2_scale=1.0):
    """Spectrum of one metabolite with amplitudes scaled by concentration and T2 by t2_scale."""
    if concentration < 0:
        raise ValidationError(f"concentration must be >= 0, got {concentration}")
    if not t2_scale > 0:
        raise ValidationError(f"t2_scale must be > 0, got {t2_scale}")
    met = basis.get(name)
    scaled = [
        LorentzianComponent(c.chemical_shift, c.amplitude * concentration, c.t2 * t2_scale, c.phase0)
        for c in met.components
    ]
    fid = synthesize_fid(scaled, basis.params, basis.reference_ppm)
    return fid_to_spectrum(fid, basis.reference_ppm)


def linear_combination(basis, concentrations, t2_scale=1.0):
    """Elementwise sum of render_metabolite over every (name, concentration) entry."""
    total = np.zeros(basis.params.n_points, dtype=np.complex128)
    axis = None
    for name, conc in concentrations.items():
        spec = render_metabolite(basis, name, conc, t2_scale)
        total = total + spec.values
        axis = spec.ppm_axis
    if axis is None:
        axis = ppm_axis(basis.params, basis.reference_ppm)
    return ComplexSpectrum(total, axis, basis.params)


def default_brain_basis(params, reference_ppm=DEFAULT_REFERENCE_PPM, t2=DEFAULT_COMPONENT_T2):
    """Built-in five-metabolite basis (NAA, Cr, Cho, mI, Glx) at the given acquisition."""
    metabolites = tuple(
        MetaboliteBasis(
            name,
            tuple(LorentzianComponent(shift, amp, t2, 0.0) for shift, amp in lines),
        )
        for name, lines in _BRAIN_BASIS_LINES.items()
    )
    return BasisSet(metabolites, params, reference_ppm)
