"""Feature extraction and model training/prediction over datasets.

The feature representation shared by the forest and the least-squares
oracle: real part of the spectrum cropped to the quantification window,
amplitude-normalized against one fixed training spectrum.
"""

from dataclasses import dataclass

import numpy as np

from .basis import default_brain_basis
from .errors import GridCompatibilityError, UndefinedResultError, ValidationError
from .forest import fit_forest
from .lsqfit import fit_ratios, lsq_fit_batch
from .preprocess import (
    CROP_HI_PPM,
    CROP_LO_PPM,
    FeatureVector,
    choose_reference,
    grids_match,
    spectrum_to_features,
)


@dataclass(frozen=True)
class FeatureMeta:
    """Everything needed to map any spectrum onto a trained model's input space."""

    grid: np.ndarray
    reference: FeatureVector
    crop_hi: float
    crop_lo: float
    acquisition: object
    reference_ppm: float
    kind: str = "real_normalized"


def _window_mask(axis, hi, lo):
    mask = (axis >= lo) & (axis <= hi)
    if not mask.any():
        raise GridCompatibilityError(f"window [{lo}, {hi}] ppm does not overlap the dataset axis")
    return mask


def build_feature_space(dataset, hi=CROP_HI_PPM, lo=CROP_LO_PPM):
    """Feature matrix for a training dataset plus the metadata to reuse it."""
    mask = _window_mask(dataset.ppm_axis, hi, lo)
    grid = dataset.ppm_axis[mask]
    raw = dataset.values[:, mask].real
    reference, _ = choose_reference(raw, grid)
    peaks = np.max(np.abs(raw), axis=1)
    X = raw * (reference.max_magnitude / peaks)[:, None]
    meta = FeatureMeta(grid, reference, hi, lo, dataset.params, dataset.reference_ppm)
    return meta, X


def features_for_dataset(meta, dataset, allow_resample=False):
    """Feature matrix for any dataset, resampling cross-protocol spectra if allowed."""
    mask = (dataset.ppm_axis >= meta.crop_lo) & (dataset.ppm_axis <= meta.crop_hi)
    if grids_match(dataset.ppm_axis[mask], meta.grid):
        raw = dataset.values[:, mask].real
        peaks = np.max(np.abs(raw), axis=1)
        if np.any(peaks == 0):
            raise ValidationError("dataset contains an all-zero spectrum in the feature window")
        return raw * (meta.reference.max_magnitude / peaks)[:, None]
    rows = [
        spectrum_to_features(
            dataset.spectrum(i), meta.grid, meta.reference, meta.crop_hi, meta.crop_lo, allow_resample
        ).values
        for i in range(dataset.n_spectra)
    ]
    return np.asarray(rows)


def train_model(dataset, forest_config, labels=None, target_names=None, threads=1,
                hi=CROP_HI_PPM, lo=CROP_LO_PPM):
    """Fit per-target forests on a dataset's feature representation."""
    if labels is None:
        labels = dataset.labels
        target_names = dataset.target_names
    if labels is None:
        raise ValidationError("dataset has no labels; supply labels= explicitly")
    labels = np.asarray(labels, dtype=np.float64)
    if labels.ndim == 1:
        labels = labels[:, None]
    if labels.shape[0] != dataset.n_spectra:
        raise ValidationError("label rows must match the number of spectra")
    meta, X = build_feature_space(dataset, hi, lo)
    model = fit_forest(X, labels, forest_config, target_names=target_names, threads=threads)
    model.feature_meta = meta
    model.dataset_fingerprint = dataset.fingerprint
    return model


def predict_dataset(model, dataset, allow_resample=False):
    """(n_spectra, n_targets) forest estimates for every spectrum in the dataset."""
    if model.feature_meta is None:
        raise ValidationError("model carries no feature metadata; train it through train_model")
    X = features_for_dataset(model.feature_meta, dataset, allow_resample)
    return model.predict_matrix(X)


def basis_for_dataset(dataset, basis=None):
    """Basis rendered at the dataset's own acquisition, for oracle fitting."""
    if basis is not None:
        return basis
    from .fileio import basis_from_dict

    if dataset.config and "basis" in dataset.config:
        return basis_from_dict(dataset.config["basis"], dataset.params, dataset.reference_ppm)
    return default_brain_basis(dataset.params, dataset.reference_ppm)


def oracle_ratios(dataset, target_names, baseline_degree=4, basis=None,
                  hi=CROP_HI_PPM, lo=CROP_LO_PPM):
    """Least-squares ratio estimates for every spectrum, on its native grid.

    Returns (estimates, ok) where estimates is (n_spectra, n_targets) with
    NaN rows for unusable fits (non-positive Cr) and ok flags the rest.
    """
    basis = basis_for_dataset(dataset, basis)
    mask = _window_mask(dataset.ppm_axis, hi, lo)
    axis = dataset.ppm_axis[mask]
    rows = dataset.values[:, mask].real
    fits = lsq_fit_batch(rows, basis, axis, baseline_degree)
    n = dataset.n_spectra
    est = np.full((n, len(target_names)), np.nan)
    ok = np.zeros(n, dtype=bool)
    for i, fit in enumerate(fits):
        try:
            ratios = fit_ratios(fit)
        except UndefinedResultError:
            continue
        try:
            est[i] = [ratios[t] for t in target_names]
        except KeyError as e:
            raise ValidationError(f"oracle basis does not produce target {e}") from e
        ok[i] = True
    return est, ok
