"""Discrete signal model: damped complex exponentials and their spectra.

A free induction decay is synthesized as a finite sum of Lorentzian
components, each a complex exponential at a chemical-shift offset with an
exponential T2* envelope.  Frequency-domain spectra are obtained through
the discrete Fourier transform with bins mapped onto a descending ppm
axis (downfield first, reference at the center).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

# Water resonance, the conventional axis reference.
DEFAULT_REFERENCE_PPM = 4.7
# Proton frequency at 3 T, in MHz.
DEFAULT_TRANSMITTER_MHZ = 127.7


@dataclass(frozen=True)
class AcquisitionParams:
    """Spectrometer acquisition settings.

    spectral_width is in Hz, transmitter_freq in MHz; echo_time and
    repetition_time (ms) are carried as metadata only.
    """

    spectral_width: float
    n_points: int
    transmitter_freq: float = DEFAULT_TRANSMITTER_MHZ
    echo_time: float | None = None
    repetition_time: float | None = None

    def __post_init__(self):
        if not self.spectral_width > 0:
            raise ValidationError(f"spectral_width must be > 0, got {self.spectral_width}")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValidationError(f"n_points must be an integer >= 2, got {self.n_points}")
        if not self.transmitter_freq > 0:
            raise ValidationError(f"transmitter_freq must be > 0, got {self.transmitter_freq}")
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def dwell_time(self):
        """Sampling interval in seconds."""
        return 1.0 / self.spectral_width

    @property
    def duration(self):
        """Total acquisition time in seconds."""
        return self.n_points / self.spectral_width

    @property
    def hz_per_bin(self):
        return self.spectral_width / self.n_points

    @property
    def ppm_per_bin(self):
        return self.hz_per_bin / self.transmitter_freq


@dataclass(frozen=True)
class LorentzianComponent:
    """One resonance line: position (ppm), amplitude, T2* decay (s), initial phase (rad)."""

    chemical_shift: float
    amplitude: float
    t2: float
    phase0: float = 0.0

    def __post_init__(self):
        if not self.t2 > 0:
            raise ValidationError(f"t2 must be > 0, got {self.t2}")
        if self.amplitude < 0:
            raise ValidationError(f"amplitude must be >= 0, got {self.amplitude}")

    def hz_offset(self, reference_ppm, transmitter_freq):
        """Frequency offset in Hz relative to the axis reference."""
        return (self.chemical_shift - reference_ppm) * transmitter_freq


def _readonly(arr):
    arr = np.asarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TimeSignal:
    """Complex time-domain samples plus the acquisition that produced them."""

    samples: np.ndarray
    params: AcquisitionParams

    def __post_init__(self):
        samples = _readonly(np.asarray(self.samples, dtype=np.complex128))
        if samples.ndim != 1 or samples.size != self.params.n_points:
            raise ValidationError(
                f"samples must be a 1-D array of length {self.params.n_points}, got shape {samples.shape}"
            )
        object.__setattr__(self, "samples", samples)

    @property
    def times(self):
        """Sample times in seconds."""
        return np.arange(self.params.n_points) / self.params.spectral_width


@dataclass(frozen=True)
class ComplexSpectrum:
    """Complex frequency-domain values on a strictly decreasing ppm axis."""

    values: np.ndarray
    ppm_axis: np.ndarray
    params: AcquisitionParams

    def __post_init__(self):
        values = _readonly(np.asarray(self.values, dtype=np.complex128))
        axis = _readonly(np.asarray(self.ppm_axis, dtype=np.float64))
        if values.ndim != 1 or axis.ndim != 1 or values.size != axis.size:
            raise ValidationError("values and ppm_axis must be 1-D arrays of equal length")
        if values.size != self.params.n_points:
            raise ValidationError(
                f"spectrum length {values.size} does not match params.n_points {self.params.n_points}"
            )
        if axis.size >= 2 and not np.all(np.diff(axis) < 0):
            raise ValidationError("ppm_axis must be strictly decreasing")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "ppm_axis", axis)

    def nearest_bin(self, ppm):
        """Index of the axis bin closest to the given ppm value."""
        return int(np.argmin(np.abs(self.ppm_axis - ppm)))


def ppm_axis(params, reference_ppm=DEFAULT_REFERENCE_PPM):
    """Descending ppm axis covering the full spectral width, centered on the reference.

    Bin j sits at reference_ppm + (sw/2 - j*sw/n) / transmitter_freq, so the
    axis spans spectral_width/transmitter_freq ppm (one bandwidth) with the
    reference half a bin above the midpoint of the first and last entries.
    """
    sw = params.spectral_width
    n = params.n_points
    j = np.arange(n)
    return reference_ppm + (sw / 2.0 - j * (sw / n)) / params.transmitter_freq


def synthesize_fid(components, params, reference_ppm=DEFAULT_REFERENCE_PPM):
    """Sum of damped complex exponentials sampled at the acquisition dwell time.

    Each component contributes
    ``amplitude * exp(i*(2*pi*f*t + phase0)) * exp(-t/t2)`` where f is its
    Hz offset from the reference.  An empty component list yields the zero
    signal.
    """
    if not isinstance(params, AcquisitionParams):
        raise ValidationError("params must be an AcquisitionParams instance")
    t = np.arange(params.n_points) / params.spectral_width
    if len(components) == 0:
        return TimeSignal(np.zeros(params.n_points, dtype=np.complex128), params)
    freqs = np.array([c.hz_offset(reference_ppm, params.transmitter_freq) for c in components])
    amps = np.array([c.amplitude for c in components])
    t2s = np.array([c.t2 for c in components])
    phases = np.array([c.phase0 for c in components])
    # rate has the oscillation and the decay folded into one complex exponent
    rate = 2j * np.pi * freqs - 1.0 / t2s
    coeff = amps * np.exp(1j * phases)
    samples = coeff @ np.exp(rate[:, None] * t[None, :])
    return TimeSignal(samples, params)


def _bin_order(n):
    # Axis position j holds DFT bin (n//2 - j) mod n: descending frequency,
    # Nyquist first, DC at the center.
    return (n // 2 - np.arange(n)) % n


def fid_to_spectrum(fid, reference_ppm=DEFAULT_REFERENCE_PPM):
    """DFT of the FID, reordered so index 0 is the most-downfield (highest ppm) bin."""
    n = fid.params.n_points
    transformed = np.fft.fft(fid.samples)
    values = transformed[_bin_order(n)]
    axis = ppm_axis(fid.params, reference_ppm)
    return ComplexSpectrum(values, axis, fid.params)


def spectrum_to_fid(spec):
    """Inverse of fid_to_spectrum; the round trip is the identity to float precision."""
    n = spec.params.n_points
    transformed = np.empty(n, dtype=np.complex128)
    transformed[_bin_order(n)] = spec.values
    samples = np.fft.ifft(transformed)
    return TimeSignal(samples, spec.params)
