"""
Linear encoding model fit and its inversion.

The encoding model maps GLM regressors X (latent codes plus a face-vs-fixation
bias) to voxel responses Y through a weight matrix W:

    Y = X W,    W = (X^T X + ridge I)^-1 X^T Y

Decoding inverts the map for new activity patterns:

    X_hat = Y W^T (W W^T)^-1

Both systems are solved through an SVD of the relevant matrix rather than
explicit inverses.
"""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.linalg
from loguru import logger

from latent_brain_decoding import io_utils
from latent_brain_decoding.config import (
    BIAS_REGRESSOR,
    CONSTANT_REGRESSOR,
    DEFAULT_RIDGE,
    LATENT_REGRESSOR_PREFIX,
    MIN_RECIPROCAL_CONDITION,
)
from latent_brain_decoding.design_matrix import DesignMatrix
from latent_brain_decoding.enums import Condition
from latent_brain_decoding.errors import (
    DecodingError,
    DegenerateDataError,
    ShapeMismatchError,
    SingularSystemError,
)
from latent_brain_decoding.latent_codec import LatentTable


def _unique_ids(ids: Sequence[str], what: str) -> tuple[str, ...]:
    ids = tuple(str(i) for i in ids)
    if len(set(ids)) != len(ids):
        raise DecodingError(f"{what} must be unique")
    return ids


def _subset_index(ids: tuple[str, ...], wanted: Sequence[str]) -> list[int]:
    lookup = {v: j for j, v in enumerate(ids)}
    missing = [v for v in wanted if v not in lookup]
    if missing:
        raise DecodingError(
            f"{len(missing)} unknown voxel ids, e.g. '{missing[0]}'"
        )
    return [lookup[v] for v in wanted]


@dataclass(frozen=True)
class BoldPatterns:
    """
    Voxel activity patterns, one row per observation (scan, trial average
    or GLM beta).

    Attributes
    ----------
    values : np.ndarray
        Matrix of shape (n_observations, n_voxels).
    voxel_ids : tuple[str, ...]
        Unique voxel identifiers (columns).
    observation_ids : tuple[str, ...]
        Unique observation identifiers (rows).
    """

    values: np.ndarray
    voxel_ids: tuple[str, ...]
    observation_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2:
            raise ShapeMismatchError(f"patterns must be 2-D: {values.shape}")
        voxel_ids = _unique_ids(self.voxel_ids, "voxel ids")
        observation_ids = _unique_ids(self.observation_ids, "observation ids")
        if values.shape != (len(observation_ids), len(voxel_ids)):
            raise ShapeMismatchError(
                f"patterns {values.shape} do not match "
                f"{len(observation_ids)} observations x "
                f"{len(voxel_ids)} voxels"
            )
        if not np.all(np.isfinite(values)):
            raise DecodingError("patterns contain non-finite values")

        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "voxel_ids", voxel_ids)
        object.__setattr__(self, "observation_ids", observation_ids)

    @property
    def n_observations(self) -> int:
        return self.values.shape[0]

    @property
    def n_voxels(self) -> int:
        return self.values.shape[1]

    def restrict(self, voxel_ids: Sequence[str]) -> "BoldPatterns":
        """Columns for `voxel_ids`, in that order."""
        idx = _subset_index(self.voxel_ids, voxel_ids)
        return BoldPatterns(
            self.values[:, idx], tuple(voxel_ids), self.observation_ids
        )

    def head(self, n_observations: int) -> "BoldPatterns":
        return BoldPatterns(
            self.values[:n_observations],
            self.voxel_ids,
            self.observation_ids[:n_observations],
        )


@dataclass(frozen=True)
class EncodingModel:
    """
    Fitted weights from regressors to voxels.

    Attributes
    ----------
    weights : np.ndarray
        W, shape (n_regressors, n_voxels).
    regressor_names : tuple[str, ...]
        Row names; must contain the "bias" regressor.
    voxel_ids : tuple[str, ...]
        Column names, unique.
    """

    weights: np.ndarray
    regressor_names: tuple[str, ...]
    voxel_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        weights = np.array(self.weights, dtype=np.float64, copy=True)
        names = _unique_ids(self.regressor_names, "regressor names")
        voxel_ids = _unique_ids(self.voxel_ids, "voxel ids")
        if weights.shape != (len(names), len(voxel_ids)):
            raise ShapeMismatchError(
                f"weights {weights.shape} do not match {len(names)} "
                f"regressors x {len(voxel_ids)} voxels"
            )
        if not np.all(np.isfinite(weights)):
            raise DecodingError("weights contain non-finite values")
        if BIAS_REGRESSOR not in names:
            raise DecodingError(f"model has no '{BIAS_REGRESSOR}' regressor")

        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "regressor_names", names)
        object.__setattr__(self, "voxel_ids", voxel_ids)

    @property
    def n_voxels(self) -> int:
        return self.weights.shape[1]

    @property
    def bias_index(self) -> int:
        return self.regressor_names.index(BIAS_REGRESSOR)

    @property
    def latent_indices(self) -> list[int]:
        return [
            i
            for i, name in enumerate(self.regressor_names)
            if name.startswith(LATENT_REGRESSOR_PREFIX)
        ]

    @property
    def latent_weights(self) -> np.ndarray:
        """Rows of W belonging to latent regressors (bias row dropped)."""
        return self.weights[self.latent_indices]

    @cached_property
    def decoder_svd(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """SVD of the latent + bias rows of W, reused by every decode."""

        rows = [*self.latent_indices, self.bias_index]
        if self.n_voxels < len(rows):
            raise SingularSystemError(
                f"W W^T is singular: {self.n_voxels} voxels for "
                f"{len(rows)} decoded regressors"
            )

        u, s, vt = scipy.linalg.svd(self.weights[rows], full_matrices=False)
        rcond = (s[-1] / s[0]) ** 2 if s[0] > 0 else 0.0
        if rcond < MIN_RECIPROCAL_CONDITION:
            condition = 1.0 / rcond if rcond > 0 else float("inf")
            raise SingularSystemError(
                "W W^T is singular beyond tolerance",
                singular_values=[
                    float(v)
                    for v in s[s**2 <= MIN_RECIPROCAL_CONDITION * s[0] ** 2]
                ],
                condition_number=condition,
            )

        logger.debug(
            f"Decoder SVD: {len(rows)} regressors x {self.n_voxels} voxels, "
            f"cond(W W^T)={(s[0] / s[-1]) ** 2:.3e}"
        )
        return u, s, vt

    def restrict(self, voxel_ids: Sequence[str]) -> "EncodingModel":
        idx = _subset_index(self.voxel_ids, voxel_ids)
        return EncodingModel(
            self.weights[:, idx], self.regressor_names, tuple(voxel_ids)
        )


class DecodedLatents(NamedTuple):
    latents: LatentTable
    bias: np.ndarray


class ResidualStats(NamedTuple):
    """Per-voxel goodness of fit of an OLS GLM."""

    r_squared: np.ndarray
    rss: np.ndarray
    n_obs: int
    n_predictors: int


# ------------------------------------ Fit -------------------------------------


def fit_weights(
    design: DesignMatrix,
    bold: BoldPatterns,
    ridge: float = DEFAULT_RIDGE,
) -> EncodingModel:
    """
    Estimate W = (X^T X + ridge I)^-1 X^T Y.

    Parameters
    ----------
    design : DesignMatrix
        GLM design X, one row per scan.
    bold : BoldPatterns
        Voxel time courses Y, one row per scan.
    ridge : float, optional
        Nonnegative Tikhonov penalty. Default is 0 (ordinary least squares).

    Returns
    -------
    EncodingModel
        Weights for every design column, named as in the design.

    Raises
    ------
    ShapeMismatchError
        If design and BOLD differ in row count.
    SingularSystemError
        If ridge is 0 and X^T X has reciprocal condition number below 1e-12
        ("singular normal equations", with the offending singular values).
    """

    if ridge < 0:
        raise DecodingError(f"ridge must be >= 0, got {ridge}")

    x = design.values
    y = bold.values
    if x.shape[0] != y.shape[0]:
        raise ShapeMismatchError(
            f"design has {x.shape[0]} rows, BOLD has {y.shape[0]}"
        )

    n_obs, n_reg = x.shape
    if ridge == 0 and n_obs < n_reg:
        raise SingularSystemError(
            f"singular normal equations: {n_obs} observations for "
            f"{n_reg} regressors"
        )

    u, s, vt = scipy.linalg.svd(x, full_matrices=False)

    if ridge == 0:
        rcond = (s[-1] / s[0]) ** 2 if s[0] > 0 else 0.0
        if rcond < MIN_RECIPROCAL_CONDITION:
            small = s**2 <= MIN_RECIPROCAL_CONDITION * s[0] ** 2
            raise SingularSystemError(
                "singular normal equations",
                singular_values=[float(v) for v in s[small]],
                condition_number=1.0 / rcond if rcond > 0 else float("inf"),
            )

    gain = s / (s**2 + ridge)
    weights = vt.T @ (gain[:, None] * (u.T @ y))

    logger.debug(
        f"Fitted W {weights.shape} on {n_obs} scans (ridge={ridge:g}, "
        f"cond(X)={s[0] / s[-1]:.3e})"
    )

    return EncodingModel(weights, design.regressor_names, bold.voxel_ids)


def decode_latents(
    model: EncodingModel, patterns: BoldPatterns
) -> DecodedLatents:
    """
    Decode latent codes: X_hat = Y W^T (W W^T)^-1 over the latent and bias
    rows of W.

    The decoded bias is split off and returned separately.

    Parameters
    ----------
    model : EncodingModel
        Fitted (or ground-truth) weights.
    patterns : BoldPatterns
        Activity patterns; columns are reordered to the model's voxels.

    Returns
    -------
    DecodedLatents
        Latent table indexed by observation id, plus the decoded bias values.

    Raises
    ------
    DecodingError
        If the patterns do not cover the model's voxels.
    SingularSystemError
        If W W^T is singular beyond tolerance.
    """

    if patterns.voxel_ids != model.voxel_ids:
        if set(patterns.voxel_ids) != set(model.voxel_ids):
            raise DecodingError(
                "pattern voxels do not match the model voxels "
                f"({patterns.n_voxels} vs {model.n_voxels})"
            )
        patterns = patterns.restrict(model.voxel_ids)

    u, s, vt = model.decoder_svd
    decoded = ((patterns.values @ vt.T) / s) @ u.T

    n_latent = len(model.latent_indices)
    latents = LatentTable(patterns.observation_ids, decoded[:, :n_latent])

    return DecodedLatents(latents=latents, bias=decoded[:, n_latent])


def average_patterns(
    bold: BoldPatterns,
    groups: Mapping[str, str],
    group_order: Sequence[str] | None = None,
) -> BoldPatterns:
    """
    Average observations per group.

    Parameters
    ----------
    bold : BoldPatterns
        Observations to average.
    groups : Mapping[str, str]
        Group id of every observation id.
    group_order : Sequence[str], optional
        Output row order; defaults to first appearance.

    Raises
    ------
    DecodingError
        If an observation is unassigned.
    DegenerateDataError
        If a group in `group_order` has no member.
    """

    unassigned = [o for o in bold.observation_ids if o not in groups]
    if unassigned:
        raise DecodingError(
            f"{len(unassigned)} observations without group, "
            f"e.g. '{unassigned[0]}'"
        )

    labels = [groups[o] for o in bold.observation_ids]
    order = list(group_order or dict.fromkeys(labels))

    rows = []
    for group in order:
        members = [i for i, g in enumerate(labels) if g == group]
        if not members:
            raise DegenerateDataError(f"empty group '{group}'")
        rows.append(bold.values[members].mean(axis=0))

    values = np.vstack(rows) if rows else np.empty((0, bold.n_voxels))
    return BoldPatterns(values, bold.voxel_ids, tuple(order))


# ------------------------------ GLM statistics --------------------------------


def residual_stats(design: DesignMatrix, bold: BoldPatterns) -> ResidualStats:
    """
    OLS goodness of fit per voxel.

    The number of predictors excludes the intercept column, as in the
    adjusted R^2 formula 1 - (1 - R^2)(n - 1) / (n - p - 1).
    """

    x, y = design.values, bold.values
    if x.shape[0] != y.shape[0]:
        raise ShapeMismatchError(
            f"design has {x.shape[0]} rows, BOLD has {y.shape[0]}"
        )

    beta, *_ = scipy.linalg.lstsq(x, y, lapack_driver="gelsd")
    residuals = y - x @ beta
    rss = np.sum(residuals**2, axis=0)
    tss = np.sum((y - y.mean(axis=0)) ** 2, axis=0)

    flat = tss <= 0
    if np.any(flat):
        logger.warning(f"{int(flat.sum())} voxels have constant time courses")
    r_squared = np.where(flat, 0.0, 1.0 - rss / np.where(flat, 1.0, tss))

    n_predictors = design.n_regressors
    if CONSTANT_REGRESSOR in design.regressor_names:
        n_predictors -= 1

    return ResidualStats(r_squared, rss, x.shape[0], n_predictors)


def contrast_vector(
    design: DesignMatrix, weights: Mapping[str, float]
) -> np.ndarray:
    contrast = np.zeros(design.n_regressors)
    for name, value in weights.items():
        contrast[design.index(name)] = value
    return contrast


def contrast_t(
    design: DesignMatrix, bold: BoldPatterns, contrast: np.ndarray
) -> np.ndarray:
    """
    Per-voxel OLS t statistic of a contrast c: c b / sqrt(s^2 c (X^T X)^- c).

    Voxels with zero residual variance get +inf / -inf / 0 according to the
    sign of the effect.

    Raises
    ------
    DecodingError
        If the residual degrees of freedom are not positive.
    """

    x, y = design.values, bold.values
    contrast = np.asarray(contrast, dtype=np.float64).ravel()
    if contrast.size != design.n_regressors:
        raise ShapeMismatchError(
            f"contrast has {contrast.size} entries for "
            f"{design.n_regressors} regressors"
        )
    if x.shape[0] != y.shape[0]:
        raise ShapeMismatchError(
            f"design has {x.shape[0]} rows, BOLD has {y.shape[0]}"
        )

    pinv, rank = scipy.linalg.pinv(x, return_rank=True)
    df = x.shape[0] - rank
    if df <= 0:
        raise DecodingError(f"no residual degrees of freedom (df={df})")

    beta = pinv @ y
    sigma2 = np.sum((y - x @ beta) ** 2, axis=0) / df
    c_pinv = contrast @ pinv
    effect = contrast @ beta
    se = np.sqrt(sigma2 * float(c_pinv @ c_pinv))

    with np.errstate(divide="ignore", invalid="ignore"):
        t = effect / se
    degenerate = ~np.isfinite(t)
    t[degenerate] = np.sign(effect[degenerate]) * np.inf
    t[degenerate & (effect == 0)] = 0.0

    return t


# --------------------------- Pattern and model views --------------------------


def test_patterns_from_betas(
    model: EncodingModel, condition: Condition = Condition.TEST_FACE
) -> BoldPatterns:
    """
    GLM betas of the per-stimulus regressors "<condition>:<stim_id>" as one
    pattern per stimulus, indexed by stim_id.
    """

    prefix = f"{Condition(condition).value}:"
    rows = [
        i
        for i, name in enumerate(model.regressor_names)
        if name.startswith(prefix)
    ]
    if not rows:
        raise DecodingError(f"model has no '{prefix}*' regressors")

    ids = tuple(model.regressor_names[i][len(prefix) :] for i in rows)
    return BoldPatterns(model.weights[rows], model.voxel_ids, ids)


def voxel_selectivity(
    model: EncodingModel, voxel_ids: Sequence[str] | None = None
) -> np.ndarray:
    """
    Latent description of the face selectivity of a voxel or ROI: the
    latent rows of W averaged over `voxel_ids` (all voxels if omitted).
    """

    weights = model.latent_weights
    if voxel_ids is not None:
        if not voxel_ids:
            raise DegenerateDataError("empty voxel selection")
        weights = weights[:, _subset_index(model.voxel_ids, voxel_ids)]

    return weights.mean(axis=1)


def restrict_voxels(
    obj: EncodingModel | BoldPatterns, voxel_ids: Sequence[str]
) -> EncodingModel | BoldPatterns:
    return obj.restrict(voxel_ids)


# -------------------------------- Persistence ---------------------------------


def save_model(matrix_path: Path, model: EncodingModel) -> None:
    """Weights as LDMX, regressor names in `.ids`, voxel ids in `.cols`."""

    io_utils.write_matrix(matrix_path, model.weights)
    io_utils.write_ids(
        io_utils.ids_path_for(matrix_path), model.regressor_names
    )
    io_utils.write_ids(io_utils.cols_path_for(matrix_path), model.voxel_ids)


def load_model(matrix_path: Path) -> EncodingModel:
    weights = io_utils.read_matrix(matrix_path)
    names = io_utils.read_ids(io_utils.ids_path_for(matrix_path))
    voxel_ids = io_utils.read_ids(io_utils.cols_path_for(matrix_path))
    return EncodingModel(weights, tuple(names), tuple(voxel_ids))


def save_patterns(matrix_path: Path, patterns: BoldPatterns) -> None:
    io_utils.write_matrix(matrix_path, patterns.values)
    io_utils.write_ids(
        io_utils.ids_path_for(matrix_path), patterns.observation_ids
    )
    io_utils.write_ids(io_utils.cols_path_for(matrix_path), patterns.voxel_ids)


def load_patterns(matrix_path: Path) -> BoldPatterns:
    values = io_utils.read_matrix(matrix_path)
    observation_ids = io_utils.read_ids(io_utils.ids_path_for(matrix_path))
    voxel_ids = io_utils.read_ids(io_utils.cols_path_for(matrix_path))
    return BoldPatterns(values, tuple(voxel_ids), tuple(observation_ids))
