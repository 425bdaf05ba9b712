"""
Voxel scoring, two-criterion selection and anatomical thirds segmentation.
"""

from collections.abc import Sequence
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from latent_brain_decoding import io_utils
from latent_brain_decoding.config import GAIN_THRESHOLD_PCT, T_THRESHOLD
from latent_brain_decoding.enums import Region, SegmentAxis
from latent_brain_decoding.errors import (
    DecodingError,
    DegenerateDataError,
    ShapeMismatchError,
)
from latent_brain_decoding.linear_decoder import ResidualStats

VOXEL_COLUMNS = ("voxel_id", "x_mm", "y_mm", "z_mm")


def _column(values: np.ndarray | None, n: int, name: str) -> np.ndarray:
    if values is None:
        column = np.full(n, np.nan)
    else:
        column = np.array(values, dtype=np.float64).ravel()
    if column.size != n:
        raise ShapeMismatchError(f"{name} has {column.size} values for {n}")
    column.setflags(write=False)
    return column


@dataclass(frozen=True)
class VoxelSet:
    """
    Voxel metadata and selection scores.

    Attributes
    ----------
    voxel_ids : tuple[str, ...]
        Unique identifiers.
    coords_mm : np.ndarray
        (n, 3) coordinates: x left-right, y posterior-anterior,
        z inferior-superior. NaN when unknown.
    t_face : np.ndarray
        Face-vs-fixation t statistic, NaN until scored.
    var_gain_pct : np.ndarray
        Adjusted R^2 improvement of the latent GLM over the baseline GLM, in
        percentage points; NaN until scored.
    regions : tuple[Region, ...]
        Anatomical label, UNASSIGNED until segmented.
    """

    voxel_ids: tuple[str, ...]
    coords_mm: np.ndarray
    t_face: np.ndarray | None = None
    var_gain_pct: np.ndarray | None = None
    regions: tuple[Region, ...] | None = None

    def __post_init__(self) -> None:
        ids = tuple(str(v) for v in self.voxel_ids)
        if len(set(ids)) != len(ids):
            raise DecodingError("voxel ids must be unique")
        n = len(ids)

        coords = np.array(self.coords_mm, dtype=np.float64).reshape(-1, 3)
        if coords.shape[0] != n:
            raise ShapeMismatchError(f"{coords.shape[0]} coordinates for {n}")
        if np.any(np.isinf(coords)):
            raise DecodingError("voxel coordinates must be finite")
        coords.setflags(write=False)

        regions = self.regions or (Region.UNASSIGNED,) * n
        if len(regions) != n:
            raise ShapeMismatchError(f"{len(regions)} regions for {n} voxels")

        object.__setattr__(self, "voxel_ids", ids)
        object.__setattr__(self, "coords_mm", coords)
        object.__setattr__(self, "t_face", _column(self.t_face, n, "t_face"))
        object.__setattr__(
            self,
            "var_gain_pct",
            _column(self.var_gain_pct, n, "var_gain_pct"),
        )
        object.__setattr__(self, "regions", tuple(Region(r) for r in regions))

    def __len__(self) -> int:
        return len(self.voxel_ids)

    @property
    def is_scored(self) -> bool:
        return not (
            np.any(np.isnan(self.t_face)) or np.any(np.isnan(self.var_gain_pct))
        )

    def subset(self, keep: np.ndarray) -> "VoxelSet":
        keep = np.asarray(keep, dtype=bool)
        return VoxelSet(
            tuple(v for v, k in zip(self.voxel_ids, keep, strict=True) if k),
            self.coords_mm[keep],
            self.t_face[keep],
            self.var_gain_pct[keep],
            tuple(r for r, k in zip(self.regions, keep, strict=True) if k),
        )

    def ids_in(self, region: Region) -> list[str]:
        return [
            v
            for v, r in zip(self.voxel_ids, self.regions, strict=True)
            if r is region
        ]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "voxel_id": list(self.voxel_ids),
                "x_mm": self.coords_mm[:, 0],
                "y_mm": self.coords_mm[:, 1],
                "z_mm": self.coords_mm[:, 2],
                "t_face": self.t_face,
                "var_gain_pct": self.var_gain_pct,
                "region": [r.value for r in self.regions],
            }
        )

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "VoxelSet":
        missing = [c for c in VOXEL_COLUMNS if c not in df.columns]
        if missing:
            raise DecodingError(f"voxel table missing columns {missing}")

        regions = None
        if "region" in df.columns:
            try:
                regions = tuple(Region(r) for r in df["region"])
            except ValueError as e:
                raise DecodingError(f"voxel table: {e}") from e

        scores = {
            column: io_utils.float_columns(df, [column], "voxel table")[:, 0]
            for column in ("t_face", "var_gain_pct")
            if column in df.columns
        }
        return cls(
            voxel_ids=tuple(df["voxel_id"].astype(str)),
            coords_mm=io_utils.float_columns(
                df, ["x_mm", "y_mm", "z_mm"], "voxel table"
            ),
            t_face=scores.get("t_face"),
            var_gain_pct=scores.get("var_gain_pct"),
            regions=regions,
        )


def read_voxel_table(path: Path) -> VoxelSet:
    df = io_utils.read_tsv(
        path, required_columns=VOXEL_COLUMNS, dtype={"voxel_id": str}
    )
    return VoxelSet.from_frame(df)


def write_voxel_table(path: Path, voxels: VoxelSet) -> None:
    io_utils.write_tsv(path, voxels.to_frame(), full_precision=True)


# --------------------------------- Scoring ------------------------------------


def adjusted_r_squared(
    r_squared: np.ndarray, n_obs: int, n_predictors: int
) -> np.ndarray:
    """1 - (1 - R^2)(n - 1) / (n - p - 1)."""

    df = n_obs - n_predictors - 1
    if df <= 0:
        raise DecodingError(
            f"adjusted R^2 undefined: n={n_obs}, p={n_predictors} (df={df})"
        )
    return 1.0 - (1.0 - np.asarray(r_squared)) * (n_obs - 1) / df


def score_voxels(
    voxels: VoxelSet,
    baseline_fit: ResidualStats,
    latent_fit: ResidualStats,
    face_contrast: np.ndarray,
) -> VoxelSet:
    """
    Attach selection scores to `voxels`.

    Parameters
    ----------
    voxels : VoxelSet
        Voxels in the column order of both fits.
    baseline_fit : ResidualStats
        Fit of the GLM without latent regressors.
    latent_fit : ResidualStats
        Fit of the GLM with the latent parametric regressors added.
    face_contrast : np.ndarray
        Per-voxel face-vs-fixation t statistic.

    Returns
    -------
    VoxelSet
        Copy with `t_face` and `var_gain_pct` =
        100 * (adjR^2_latent - adjR^2_baseline).
    """

    n = len(voxels)
    for name, size in (
        ("baseline fit", baseline_fit.r_squared.size),
        ("latent fit", latent_fit.r_squared.size),
        ("face contrast", np.size(face_contrast)),
    ):
        if size != n:
            raise ShapeMismatchError(f"{name} covers {size} voxels, not {n}")

    gain = 100.0 * (
        adjusted_r_squared(
            latent_fit.r_squared, latent_fit.n_obs, latent_fit.n_predictors
        )
        - adjusted_r_squared(
            baseline_fit.r_squared,
            baseline_fit.n_obs,
            baseline_fit.n_predictors,
        )
    )

    return replace(
        voxels,
        t_face=np.asarray(face_contrast, dtype=np.float64),
        var_gain_pct=gain,
    )


def selection_mask(
    t_face: np.ndarray,
    var_gain_pct: np.ndarray,
    t_threshold: float = T_THRESHOLD,
    gain_threshold_pct: float = GAIN_THRESHOLD_PCT,
) -> np.ndarray:
    """
    Linear boundary in the positive quadrant: a voxel passes when
    max(t, 0) / t_threshold + max(gain, 0) / gain_threshold_pct >= 1.
    """

    if t_threshold <= 0 or gain_threshold_pct <= 0:
        raise DecodingError("selection thresholds must be positive")

    score = np.maximum(t_face, 0.0) / t_threshold
    score = score + np.maximum(var_gain_pct, 0.0) / gain_threshold_pct
    return score >= 1.0


def select_voxels(
    voxels: VoxelSet,
    t_threshold: float = T_THRESHOLD,
    gain_threshold_pct: float = GAIN_THRESHOLD_PCT,
) -> VoxelSet:
    if not voxels.is_scored:
        raise DecodingError("voxels must be scored before selection")

    keep = selection_mask(
        voxels.t_face, voxels.var_gain_pct, t_threshold, gain_threshold_pct
    )
    logger.info(f"Selected {int(keep.sum())} of {len(voxels)} voxels")

    return voxels.subset(keep)


# ------------------------------- Segmentation ---------------------------------


def _order(primary: np.ndarray, ids: Sequence[str]) -> np.ndarray:
    # stable on the primary key, voxel id breaks ties
    return np.lexsort((np.asarray(ids, dtype=str), primary))


def segment_regions(
    voxels: VoxelSet, axis: SegmentAxis = SegmentAxis.Z
) -> VoxelSet:
    """
    Split voxels into anatomical thirds.

    The floor(n/3) most posterior voxels (smallest y) are occipital. The
    rest are halved along `axis`: with Z the inferior half is temporal,
    with Y the anterior half is temporal; the other half is
    frontoparietal. Ties are broken by voxel id.

    Raises
    ------
    DecodingError
        If fewer than 3 voxels are given or coordinates are missing.
    """

    n = len(voxels)
    if n < 3:
        raise DegenerateDataError(f"segmentation needs >= 3 voxels, got {n}")
    if np.any(np.isnan(voxels.coords_mm)):
        raise DecodingError("segmentation requires coordinates for all voxels")

    ids = np.asarray(voxels.voxel_ids, dtype=str)
    y = voxels.coords_mm[:, 1]

    by_y = _order(y, ids)
    n_occipital = n // 3
    rest = by_y[n_occipital:]

    if SegmentAxis(axis) is SegmentAxis.Z:
        key = voxels.coords_mm[rest, 2]
    else:
        key = -voxels.coords_mm[rest, 1]
    rest = rest[_order(key, ids[rest])]
    n_temporal = rest.size // 2

    regions = np.empty(n, dtype=object)
    regions[by_y[:n_occipital]] = Region.OCCIPITAL
    regions[rest[:n_temporal]] = Region.TEMPORAL
    regions[rest[n_temporal:]] = Region.FRONTOPARIETAL

    logger.debug(
        f"Segmented {n} voxels along {SegmentAxis(axis).value}: "
        f"{n_occipital}/{n_temporal}/{rest.size - n_temporal}"
    )
    return replace(voxels, regions=tuple(regions))
