"""Linear least-squares basis fitting with a polynomial baseline.

The quantifier solves ``min || Re(spec) - [basis columns | poly terms] @ theta ||``
in closed form and reports basis coefficients as concentrations.  It is the
in-repo comparison baseline for the forest and the stand-in ground truth
for datasets playing the role of fitted in-vivo data.
"""

from dataclasses import dataclass

import numpy as np

from .basis import render_metabolite
from .errors import GridCompatibilityError, UndefinedResultError, ValidationError


@dataclass(frozen=True)
class FitResult:
    concentrations: dict
    baseline_coeffs: np.ndarray
    residual_norm: float
    rank_deficient: bool = False

    def __post_init__(self):
        if self.residual_norm < 0:
            raise ValidationError("residual_norm must be >= 0")
        for name, v in self.concentrations.items():
            if not np.isfinite(v):
                raise ValidationError(f"non-finite concentration for {name}")


def _match_bins(spec_axis, basis_axis):
    """Indices of basis-grid bins matching each spectrum bin, or an error."""
    pos = np.searchsorted(-basis_axis, -spec_axis)
    pos = np.clip(pos, 0, basis_axis.size - 1)
    prev = np.clip(pos - 1, 0, basis_axis.size - 1)
    pick = np.where(
        np.abs(basis_axis[prev] - spec_axis) <= np.abs(basis_axis[pos] - spec_axis), prev, pos
    )
    tol = 1e-6 * (basis_axis[0] - basis_axis[-1])
    if np.any(np.abs(basis_axis[pick] - spec_axis) > tol):
        raise GridCompatibilityError(
            "spectrum bins do not lie on the basis grid; resample the spectrum first"
        )
    return pick


def basis_design_matrix(basis, spec_axis=None):
    """Columns of unit-concentration real-part metabolite spectra on the given bins."""
    rendered = [render_metabolite(basis, name, 1.0, 1.0) for name in basis.names]
    full_axis = rendered[0].ppm_axis
    if spec_axis is None:
        rows = slice(None)
    else:
        rows = _match_bins(np.asarray(spec_axis, dtype=np.float64), full_axis)
    return np.column_stack([r.values.real[rows] for r in rendered])


def polynomial_columns(n, degree):
    x = np.linspace(-1.0, 1.0, n)
    return np.column_stack([x**k for k in range(degree + 1)])


def lsq_fit(spec, basis, baseline_degree=4):
    """Least-squares concentrations of every basis metabolite plus a polynomial baseline.

    Negative coefficients are reported as-is; a rank-deficient design is
    flagged and the minimum-norm solution returned.
    """
    if baseline_degree < 0 or int(baseline_degree) != baseline_degree:
        raise ValidationError(f"baseline_degree must be an integer >= 0, got {baseline_degree}")
    target = spec.values.real
    B = basis_design_matrix(basis, spec.ppm_axis)
    P = polynomial_columns(target.size, baseline_degree)
    A = np.hstack([B, P])
    theta, _, rank, _ = np.linalg.lstsq(A, target, rcond=None)
    residual = target - A @ theta
    k = len(basis.names)
    return FitResult(
        concentrations={name: float(c) for name, c in zip(basis.names, theta[:k])},
        baseline_coeffs=theta[k:],
        residual_norm=float(np.linalg.norm(residual)),
        rank_deficient=rank < A.shape[1],
    )


def fit_ratios(result):
    """Each metabolite coefficient divided by the Cr coefficient."""
    if "Cr" not in result.concentrations:
        raise UndefinedResultError("fit has no Cr coefficient; ratios are undefined")
    cr = result.concentrations["Cr"]
    if cr <= 0:
        raise UndefinedResultError(f"Cr coefficient is {cr}; ratios over a non-positive Cr are undefined")
    return {
        f"{name}/Cr": v / cr for name, v in result.concentrations.items() if name != "Cr"
    }


def lsq_fit_batch(real_rows, basis, spec_axis, baseline_degree=4):
    """Fit many spectra sharing one grid in a single least-squares solve.

    real_rows is (n_spectra, n_bins) of real parts.  Returns one FitResult
    per row, matching lsq_fit on the corresponding single spectrum.
    """
    rows = np.asarray(real_rows, dtype=np.float64)
    B = basis_design_matrix(basis, spec_axis)
    P = polynomial_columns(rows.shape[1], baseline_degree)
    A = np.hstack([B, P])
    theta, _, rank, _ = np.linalg.lstsq(A, rows.T, rcond=None)
    residual_norms = np.linalg.norm(rows.T - A @ theta, axis=0)
    k = len(basis.names)
    deficient = rank < A.shape[1]
    return [
        FitResult(
            concentrations={name: float(c) for name, c in zip(basis.names, theta[:k, i])},
            baseline_coeffs=theta[k:, i],
            residual_norm=float(residual_norms[i]),
            rank_deficient=deficient,
        )
        for i in range(rows.shape[0])
    ]
