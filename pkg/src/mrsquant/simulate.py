"""Labeled synthetic spectrum generation.

Each spectrum is a randomized linear combination of the basis metabolites
with a broad Gaussian-bump baseline, lipid resonances, linewidth (T2)
scaling, and complex Gaussian noise at a sampled SNR.  Labels are the
concentration ratios against Cr.

Every spectrum derives its own random streams from (rng_seed, index), so
a dataset is a pure function of its configuration no matter how indices
are partitioned across workers.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .basis import linear_combination
from .errors import ValidationError
from .signal import (
    DEFAULT_REFERENCE_PPM,
    ComplexSpectrum,
    LorentzianComponent,
    fid_to_spectrum,
    ppm_axis,
    synthesize_fid,
)

DEFAULT_CONCENTRATION_RANGES = {
    # Cr is absolute; every other metabolite's range is its ratio to Cr,
    # so the ratio labels are uniform over the configured interval.
    "NAA": (0.5, 2.0),
    "Cho": (0.1, 0.6),
    "Cr": (0.5, 1.5),
}
DEFAULT_T2_SCALE_RANGE = (0.6, 1.4)
DEFAULT_SNR_RANGE = (5.0, 50.0)
# Baseline and lipid amplitudes are relative to the tallest metabolite peak.
DEFAULT_BASELINE_RANGE = (0.0, 0.5)
DEFAULT_LIPID_RANGE = (0.0, 1.0)

SNR_DEFINITION = "tallest spectral magnitude divided by per-bin complex noise sigma"

_BASELINE_BUMPS = (4, 8)          # bump count drawn inclusive of both ends
_BASELINE_FWHM_PPM = (0.3, 1.0)
_BASELINE_CENTER_PPM = (0.5, 4.3)
_BASELINE_SMOOTHNESS_FACTOR = 10.0
_LIPID_SHIFTS_PPM = (1.3, 0.9)
_LIPID_T2_RANGE = (0.02, 0.05)


def _check_range(name, rng_pair, low_exclusive=False):
    lo, hi = rng_pair
    if not (lo <= hi):
        raise ValidationError(f"{name}: min {lo} must be <= max {hi}")
    if low_exclusive and not lo > 0:
        raise ValidationError(f"{name}: min must be > 0, got {lo}")
    if not low_exclusive and lo < 0:
        raise ValidationError(f"{name}: min must be >= 0, got {lo}")
    return (float(lo), float(hi))


@dataclass(frozen=True)
class SimulationConfig:
    """Ranges and seed describing one reproducible dataset."""

    basis: object
    n_spectra: int
    rng_seed: int
    concentration_ranges: dict = field(default_factory=lambda: dict(DEFAULT_CONCENTRATION_RANGES))
    t2_scale_range: tuple = DEFAULT_T2_SCALE_RANGE
    snr_range: tuple = DEFAULT_SNR_RANGE
    baseline_amplitude_range: tuple = DEFAULT_BASELINE_RANGE
    lipid_amplitude_range: tuple = DEFAULT_LIPID_RANGE

    def __post_init__(self):
        if int(self.n_spectra) != self.n_spectra or self.n_spectra < 1:
            raise ValidationError(f"n_spectra must be a positive integer, got {self.n_spectra}")
        object.__setattr__(self, "n_spectra", int(self.n_spectra))
        if int(self.rng_seed) != self.rng_seed or self.rng_seed < 0:
            raise ValidationError(f"rng_seed must be a non-negative integer, got {self.rng_seed}")
        ranges = {}
        for name, pair in self.concentration_ranges.items():
            self.basis.get(name)
            ranges[name] = _check_range(f"concentration_ranges[{name}]", pair, low_exclusive=True)
        if "Cr" not in ranges:
            raise ValidationError("concentration_ranges must include Cr (labels are ratios to Cr)")
        object.__setattr__(self, "concentration_ranges", ranges)
        object.__setattr__(self, "t2_scale_range", _check_range("t2_scale_range", self.t2_scale_range, True))
        object.__setattr__(self, "snr_range", _check_range("snr_range", self.snr_range, True))
        object.__setattr__(
            self, "baseline_amplitude_range", _check_range("baseline_amplitude_range", self.baseline_amplitude_range)
        )
        object.__setattr__(
            self, "lipid_amplitude_range", _check_range("lipid_amplitude_range", self.lipid_amplitude_range)
        )

    @property
    def target_names(self):
        """Ratio label names, in sorted metabolite order."""
        return [f"{n}/Cr" for n in sorted(self.concentration_ranges) if n != "Cr"]


@dataclass(frozen=True)
class ParameterRecord:
    """Raw uniform draws for one spectrum; ratios are relative to the Cr draw."""

    index: int
    concentration_draws: dict
    concentrations: dict
    t2_scale: float
    snr: float
    baseline_amplitude: float
    lipid_amplitude: float

    def labels(self):
        cr = self.concentrations["Cr"]
        return {
            f"{name}/Cr": self.concentrations[name] / cr
            for name in sorted(self.concentrations)
            if name != "Cr"
        }


@dataclass(frozen=True)
class LabeledSpectrum:
    spectrum: ComplexSpectrum
    labels: dict
    truth_params: dict


def _stream(seed, index, purpose):
    # purpose 0: parameter draws, 1: baseline, 2: lipids, 3: noise
    return np.random.default_rng([seed, index, purpose])


def _draw_uniform(rng, lo, hi):
    if lo == hi:
        return lo
    return rng.uniform(lo, hi)


def sample_parameters(config, index):
    """Deterministic per-index parameter draws; same (seed, index) gives the same record."""
    if not 0 <= index < config.n_spectra:
        raise ValidationError(f"index {index} out of range [0, {config.n_spectra})")
    rng = _stream(config.rng_seed, index, 0)
    draws = {name: _draw_uniform(rng, *config.concentration_ranges[name]) for name in sorted(config.concentration_ranges)}
    t2_scale = _draw_uniform(rng, *config.t2_scale_range)
    snr = _draw_uniform(rng, *config.snr_range)
    baseline_amp = _draw_uniform(rng, *config.baseline_amplitude_range)
    lipid_amp = _draw_uniform(rng, *config.lipid_amplitude_range)
    cr = draws["Cr"]
    concentrations = {name: (d if name == "Cr" else d * cr) for name, d in draws.items()}
    return ParameterRecord(index, draws, concentrations, t2_scale, snr, baseline_amp, lipid_amp)


def _gaussian_bumps(axis, centers, fwhms, heights):
    widths = np.asarray(fwhms) / (2.0 * math.sqrt(math.log(2.0)))
    dist = (axis[None, :] - np.asarray(centers)[:, None]) / widths[:, None]
    return np.asarray(heights) @ np.exp(-dist * dist)


def _max_abs_second_difference(values):
    if values.size < 3:
        return 0.0
    return float(np.max(np.abs(np.diff(values, n=2))))


def generate_baseline(amplitude, params, rng, reference_ppm=None):
    """Broad smooth macromolecular baseline: 4-8 wide Gaussian bumps, peak scaled to amplitude.

    The curvature of the result is kept below 10x that of a single
    widest-allowed bump at the same amplitude; bump draws that exceed the
    bound are redrawn from the same stream.
    """
    if amplitude < 0:
        raise ValidationError(f"baseline amplitude must be >= 0, got {amplitude}")
    ref = DEFAULT_REFERENCE_PPM if reference_ppm is None else reference_ppm
    axis = ppm_axis(params, ref)
    if amplitude == 0:
        return ComplexSpectrum(np.zeros(params.n_points, dtype=np.complex128), axis, params)

    widest = _gaussian_bumps(axis, [axis.mean()], [_BASELINE_FWHM_PPM[1]], [1.0])
    curvature_bound = _BASELINE_SMOOTHNESS_FACTOR * _max_abs_second_difference(widest)
    for _ in range(100):
        n_bumps = int(rng.integers(_BASELINE_BUMPS[0], _BASELINE_BUMPS[1] + 1))
        centers = rng.uniform(*_BASELINE_CENTER_PPM, size=n_bumps)
        fwhms = rng.uniform(*_BASELINE_FWHM_PPM, size=n_bumps)
        heights = rng.uniform(0.2, 1.0, size=n_bumps)
        shape = _gaussian_bumps(axis, centers, fwhms, heights)
        peak = np.max(np.abs(shape))
        if peak == 0:
            continue
        shape = shape / peak
        if _max_abs_second_difference(shape) <= curvature_bound:
            values = (amplitude * shape).astype(np.complex128)
            return ComplexSpectrum(values, axis, params)
    raise ValidationError("could not draw a baseline satisfying the smoothness bound")


def generate_lipids(amplitude, params, rng, reference_ppm=None):
    """Lipid resonances at 1.3 and 0.9 ppm, short T2, peak magnitude scaled to amplitude."""
    if amplitude < 0:
        raise ValidationError(f"lipid amplitude must be >= 0, got {amplitude}")
    ref = DEFAULT_REFERENCE_PPM if reference_ppm is None else reference_ppm
    axis = ppm_axis(params, ref)
    if amplitude == 0:
        return ComplexSpectrum(np.zeros(params.n_points, dtype=np.complex128), axis, params)
    t2s = rng.uniform(*_LIPID_T2_RANGE, size=len(_LIPID_SHIFTS_PPM))
    # CH2 at 1.3 ppm dominates; the 0.9 ppm CH3 line gets a drawn fraction.
    rel = np.array([1.0, rng.uniform(0.3, 0.8)])
    comps = [
        LorentzianComponent(shift, a, t2, 0.0)
        for shift, a, t2 in zip(_LIPID_SHIFTS_PPM, rel, t2s)
    ]
    spec = fid_to_spectrum(synthesize_fid(comps, params, ref), ref)
    peak = np.max(np.abs(spec.values))
    return ComplexSpectrum(spec.values * (amplitude / peak), axis, params)


def add_noise(spec, snr, rng):
    """Add i.i.d. circular complex Gaussian noise with sigma = max|values| / snr per bin.

    sigma is the complex standard deviation (sqrt of E|z|^2); snr = inf
    returns the spectrum unchanged.
    """
    if not snr > 0:
        raise ValidationError(f"snr must be > 0, got {snr}")
    peak = np.max(np.abs(spec.values))
    if peak == 0:
        raise ValidationError("cannot add noise to an all-zero spectrum: SNR is undefined")
    if math.isinf(snr):
        return spec
    sigma = peak / snr
    component_sigma = sigma / math.sqrt(2.0)
    noise = rng.normal(0.0, component_sigma, spec.values.size) + 1j * rng.normal(
        0.0, component_sigma, spec.values.size
    )
    return ComplexSpectrum(spec.values + noise, spec.ppm_axis, spec.params)


def simulate_spectrum(config, index):
    """One labeled spectrum: metabolites + baseline + lipids, then noise."""
    record = sample_parameters(config, index)
    basis = config.basis
    clean = linear_combination(basis, record.concentrations, t2_scale=record.t2_scale)
    tallest = np.max(np.abs(clean.values))
    baseline_abs = record.baseline_amplitude * tallest
    lipid_abs = record.lipid_amplitude * tallest
    baseline = generate_baseline(baseline_abs, basis.params, _stream(config.rng_seed, index, 1), basis.reference_ppm)
    lipids = generate_lipids(lipid_abs, basis.params, _stream(config.rng_seed, index, 2), basis.reference_ppm)
    composite = ComplexSpectrum(
        clean.values + baseline.values + lipids.values, clean.ppm_axis, basis.params
    )
    noisy = add_noise(composite, record.snr, _stream(config.rng_seed, index, 3))
    truth = {
        "concentration_draws": record.concentration_draws,
        "concentrations": record.concentrations,
        "t2_scale": record.t2_scale,
        "snr": record.snr,
        "baseline_amplitude": record.baseline_amplitude,
        "lipid_amplitude": record.lipid_amplitude,
        "baseline_amplitude_abs": baseline_abs,
        "lipid_amplitude_abs": lipid_abs,
    }
    return LabeledSpectrum(noisy, record.labels(), truth)


def simulate_dataset(config, indices=None, threads=1):
    """Generate the configured spectra; a pure function of (config, indices)."""
    if indices is None:
        indices = range(config.n_spectra)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda i: simulate_spectrum(config, i), indices))
    return [simulate_spectrum(config, i) for i in indices]
