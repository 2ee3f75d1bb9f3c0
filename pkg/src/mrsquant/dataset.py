"""In-memory dataset: stacked labeled spectra sharing one acquisition grid."""

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .signal import AcquisitionParams, ComplexSpectrum


def config_fingerprint(config_dict):
    """Stable hash of a configuration mapping (seed and parameters included)."""
    canonical = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class Dataset:
    params: AcquisitionParams
    reference_ppm: float
    ppm_axis: np.ndarray
    values: np.ndarray  # (n_spectra, n_points) complex
    target_names: list
    labels: np.ndarray | None = None  # (n_spectra, n_targets)
    truth_params: list | None = None
    config: dict | None = None
    fingerprint: str | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        self.ppm_axis = np.asarray(self.ppm_axis, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != self.params.n_points:
            raise ValidationError("values must be (n_spectra, n_points)")
        if self.ppm_axis.size != self.params.n_points:
            raise ValidationError("ppm_axis length must equal n_points")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.float64)
            if self.labels.shape != (self.values.shape[0], len(self.target_names)):
                raise ValidationError(
                    f"labels shape {self.labels.shape} must be (n_spectra, n_targets)="
                    f"({self.values.shape[0]}, {len(self.target_names)})"
                )

    @property
    def n_spectra(self):
        return self.values.shape[0]

    def spectrum(self, i):
        return ComplexSpectrum(self.values[i], self.ppm_axis, self.params)

    def label_map(self, i):
        if self.labels is None:
            return None
        return {name: float(v) for name, v in zip(self.target_names, self.labels[i])}


def dataset_from_labeled(labeled, config_dict=None, target_names=None):
    """Stack simulator output into a Dataset; label order follows target_names."""
    if len(labeled) == 0:
        raise ValidationError("cannot build a dataset from zero spectra")
    first = labeled[0].spectrum
    if target_names is None:
        target_names = sorted(labeled[0].labels)
    values = np.stack([ls.spectrum.values for ls in labeled])
    labels = np.array([[ls.labels[t] for t in target_names] for ls in labeled])
    return Dataset(
        params=first.params,
        reference_ppm=_reference_from_axis(first),
        ppm_axis=first.ppm_axis,
        values=values,
        target_names=list(target_names),
        labels=labels,
        truth_params=[ls.truth_params for ls in labeled],
        config=config_dict,
        fingerprint=config_fingerprint(config_dict) if config_dict is not None else None,
    )


def _reference_from_axis(spec):
    # The axis builder places the reference at bin n//2 exactly.
    return float(spec.ppm_axis[spec.params.n_points // 2])
