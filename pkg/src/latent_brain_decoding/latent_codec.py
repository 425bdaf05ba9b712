"""
Latent face code spaces.

Two sources of latent codes are supported: a PCA codec fitted on pixel
vectors (the linear baseline) and externally computed codes (e.g. from a
VAE-GAN encoder) ingested from files. Attribute vectors (mean latent
difference between labelled and unlabelled faces) allow latent arithmetic
such as adding a "smile" or "male" direction.
"""

from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
from loguru import logger

from latent_brain_decoding import io_utils
from latent_brain_decoding.errors import (
    DecodingError,
    DegenerateDataError,
    ShapeMismatchError,
)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class LatentTable:
    """
    Latent code vectors, one row per stimulus.

    Attributes
    ----------
    stim_ids : tuple[str, ...]
        Unique stimulus identifiers, in row order.
    codes : np.ndarray
        Matrix of shape (n_stimuli, n_dims), float64, finite.
    """

    stim_ids: tuple[str, ...]
    codes: np.ndarray

    def __post_init__(self) -> None:
        codes = np.asarray(self.codes, dtype=np.float64)
        if codes.ndim != 2:
            raise ShapeMismatchError(f"codes must be 2-D, got {codes.shape}")
        ids = tuple(str(s) for s in self.stim_ids)
        if len(ids) != codes.shape[0]:
            raise DecodingError(
                f"count mismatch: {len(ids)} ids for {codes.shape[0]} rows"
            )
        if len(set(ids)) != len(ids):
            dupes = sorted({s for s in ids if ids.count(s) > 1})
            raise DecodingError(f"duplicate stimulus ids: {dupes[:5]}")
        if not np.all(np.isfinite(codes)):
            raise DecodingError("latent codes contain non-finite values")

        object.__setattr__(self, "stim_ids", ids)
        object.__setattr__(self, "codes", _frozen(codes))

    @property
    def n_stimuli(self) -> int:
        return self.codes.shape[0]

    @property
    def n_dims(self) -> int:
        return self.codes.shape[1]

    def index_of(self, stim_id: str) -> int:
        try:
            return self.stim_ids.index(stim_id)
        except ValueError:
            raise DecodingError(f"unknown stimulus id '{stim_id}'") from None

    def row(self, stim_id: str) -> np.ndarray:
        return self.codes[self.index_of(stim_id)]

    def subset(self, stim_ids: Sequence[str]) -> "LatentTable":
        """Rows for `stim_ids`, in that order."""
        idx = [self.index_of(s) for s in stim_ids]
        return LatentTable(tuple(stim_ids), self.codes[idx])

    def concat(self, other: "LatentTable") -> "LatentTable":
        if other.n_dims != self.n_dims:
            raise ShapeMismatchError(
                f"cannot concatenate {self.n_dims}-D and {other.n_dims}-D"
            )
        return LatentTable(
            self.stim_ids + other.stim_ids,
            np.vstack([self.codes, other.codes]),
        )


@dataclass(frozen=True)
class PcaCodec:
    """
    Principal component codec over flattened images.

    Attributes
    ----------
    mean_vector : np.ndarray
        Pixel-space mean of the fitting data, shape (n_pixels,).
    components : np.ndarray
        Orthonormal rows, shape (n_components, n_pixels).
    explained_variance : np.ndarray
        Nonincreasing variances of the retained components.
    total_variance : float
        Trace of the sample covariance of the fitting data.
    """

    mean_vector: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    total_variance: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "mean_vector", _frozen(self.mean_vector))
        object.__setattr__(self, "components", _frozen(self.components))
        object.__setattr__(
            self, "explained_variance", _frozen(self.explained_variance)
        )
        if self.components.shape[1] != self.mean_vector.size:
            raise ShapeMismatchError("components and mean differ in width")
        if self.explained_variance.size != self.components.shape[0]:
            raise ShapeMismatchError("one variance per component required")

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.components.shape[1]

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        return self.explained_variance / self.total_variance


@dataclass(frozen=True)
class AttributeVector:
    """
    Latent direction of a binary face attribute.

    Attributes
    ----------
    name : str
        Attribute label, e.g. "male" or "smiling".
    vector : np.ndarray
        Mean code of labelled faces minus mean code of unlabelled faces.
    n_with, n_without : int
        Number of faces on each side of the label.
    """

    name: str
    vector: np.ndarray
    n_with: int
    n_without: int

    def __post_init__(self) -> None:
        vector = np.asarray(self.vector, dtype=np.float64).ravel()
        if not np.all(np.isfinite(vector)):
            raise DecodingError("attribute vector contains non-finite values")
        if self.n_with < 1 or self.n_without < 1:
            raise DecodingError("attribute counts must be positive")
        object.__setattr__(self, "vector", _frozen(vector))

    @property
    def n_dims(self) -> int:
        return self.vector.size


# ------------------------------------ PCA -------------------------------------


def _canonical_signs(components: np.ndarray) -> np.ndarray:
    # largest |value| of each row made positive; argmax keeps the lowest
    # index on ties
    pivots = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(components.shape[0]), pivots])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def pca_fit(data: np.ndarray, n_components: int) -> PcaCodec:
    """
    Fit a PCA codec by SVD of the mean-centered data.

    Parameters
    ----------
    data : np.ndarray
        Matrix of shape (n_samples, n_pixels), one flattened image per row.
    n_components : int
        Number of leading components to keep; at most
        min(n_samples - 1, n_pixels).

    Returns
    -------
    PcaCodec
        Codec whose components follow a deterministic sign convention (the
        largest-magnitude element of each component is positive).

    Raises
    ------
    DecodingError
        If `n_components` is out of range or fewer than 2 samples are given.
    DegenerateDataError
        If all rows are identical ("zero variance").
    """

    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise DecodingError("pca_fit needs a 2-D matrix with >= 2 samples")
    if not np.all(np.isfinite(data)):
        raise DecodingError("pca_fit: data contain non-finite values")

    n_samples, n_pixels = data.shape
    max_components = min(n_samples - 1, n_pixels)
    if not 1 <= n_components <= max_components:
        raise DecodingError(
            f"n_components must be in [1, {max_components}], got "
            f"{n_components}"
        )

    # centering identical rows leaves rounding residue, so test the raw spread
    if not np.ptp(data, axis=0).any():
        raise DegenerateDataError("pca_fit: zero variance (identical rows)")

    mean_vector = data.mean(axis=0)
    centered = data - mean_vector

    _, singular_values, vt = scipy.linalg.svd(
        centered, full_matrices=False, lapack_driver="gesdd"
    )
    components = _canonical_signs(vt[:n_components])
    variances = singular_values**2 / (n_samples - 1)

    logger.debug(
        f"PCA fit on {n_samples}x{n_pixels}: kept {n_components} components,"
        f" {variances[:n_components].sum() / variances.sum():.2%} variance"
    )

    return PcaCodec(
        mean_vector=mean_vector,
        components=components,
        explained_variance=variances[:n_components],
        total_variance=float(variances.sum()),
    )


def pca_encode(
    codec: PcaCodec,
    images: np.ndarray,
    stim_ids: Sequence[str] | None = None,
) -> LatentTable:
    """
    Project images onto the codec: codes = (images - mean) @ components.T.

    Parameters
    ----------
    codec : PcaCodec
        Fitted codec.
    images : np.ndarray
        One flattened image per row (a single 1-D image is accepted).
    stim_ids : Sequence[str], optional
        Row identifiers; defaults to "img_0000", "img_0001", ...
    """

    images = np.atleast_2d(np.asarray(images, dtype=np.float64))
    if images.shape[1] != codec.n_pixels:
        raise ShapeMismatchError(
            f"image width {images.shape[1]} != codec width {codec.n_pixels}"
        )

    if stim_ids is None:
        stim_ids = [f"img_{i:04d}" for i in range(images.shape[0])]

    codes = (images - codec.mean_vector) @ codec.components.T
    return LatentTable(tuple(stim_ids), codes)


def pca_decode(codec: PcaCodec, codes: LatentTable | np.ndarray) -> np.ndarray:
    """Reconstruct images: codes @ components + mean."""

    values = codes.codes if isinstance(codes, LatentTable) else codes
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    if values.shape[1] != codec.n_components:
        raise ShapeMismatchError(
            f"code width {values.shape[1]} != n_components "
            f"{codec.n_components}"
        )

    return values @ codec.components + codec.mean_vector


def save_pca_codec(directory: Path, codec: PcaCodec) -> None:
    directory = Path(directory)
    io_utils.write_matrix(directory / "pca_mean.ldmx", codec.mean_vector[None])
    io_utils.write_matrix(directory / "pca_components.ldmx", codec.components)
    io_utils.write_matrix(
        directory / "pca_variance.ldmx",
        np.append(codec.explained_variance, codec.total_variance)[None],
    )


def load_pca_codec(directory: Path) -> PcaCodec:
    directory = Path(directory)
    mean = io_utils.read_matrix(directory / "pca_mean.ldmx").ravel()
    components = io_utils.read_matrix(directory / "pca_components.ldmx")
    variance = io_utils.read_matrix(directory / "pca_variance.ldmx").ravel()

    return PcaCodec(
        mean_vector=mean,
        components=components,
        explained_variance=variance[:-1],
        total_variance=float(variance[-1]),
    )


# ------------------------------- Ingestion ------------------------------------


def load_latent_table(
    matrix_path: Path, ids_path: Path | None = None
) -> LatentTable:
    """
    Load externally computed latent codes.

    Parameters
    ----------
    matrix_path : Path
        LDMX matrix with one code per row.
    ids_path : Path, optional
        Id sidecar; defaults to the matrix path with an `.ids` suffix.

    Raises
    ------
    DecodingError
        On "count mismatch" between rows and ids, duplicate ids or
        non-finite codes.
    """

    ids_path = ids_path or io_utils.ids_path_for(matrix_path)
    codes = io_utils.read_matrix(matrix_path)
    ids = io_utils.read_ids(ids_path)
    if len(ids) != codes.shape[0]:
        raise DecodingError(
            f"count mismatch: {codes.shape[0]} rows in {Path(matrix_path).name}"
            f" but {len(ids)} ids in {Path(ids_path).name}"
        )

    return LatentTable(tuple(ids), codes)


def save_latent_table(
    matrix_path: Path, table: LatentTable, ids_path: Path | None = None
) -> None:
    io_utils.write_matrix(matrix_path, table.codes)
    io_utils.write_ids(
        ids_path or io_utils.ids_path_for(matrix_path), table.stim_ids
    )


# ------------------------------ Attributes ------------------------------------


def attribute_vector(
    with_label: LatentTable, without_label: LatentTable, name: str
) -> AttributeVector:
    """
    Mean code of `with_label` minus mean code of `without_label`.

    Raises
    ------
    DecodingError
        If a table is empty or the tables differ in dimensionality.
    """

    if with_label.n_stimuli == 0 or without_label.n_stimuli == 0:
        raise DecodingError(f"attribute '{name}': empty latent table")
    if with_label.n_dims != without_label.n_dims:
        raise ShapeMismatchError(
            f"attribute '{name}': {with_label.n_dims}-D vs "
            f"{without_label.n_dims}-D tables"
        )

    vector = with_label.codes.mean(axis=0) - without_label.codes.mean(axis=0)
    return AttributeVector(
        name=name,
        vector=vector,
        n_with=with_label.n_stimuli,
        n_without=without_label.n_stimuli,
    )


def apply_attribute(
    code: np.ndarray, attr: AttributeVector, scale: float
) -> np.ndarray:
    """Move a code along an attribute direction: code + scale * vector."""

    code = np.asarray(code, dtype=np.float64)
    if code.shape[-1] != attr.n_dims:
        raise ShapeMismatchError(
            f"code has {code.shape[-1]} dims, attribute '{attr.name}' has "
            f"{attr.n_dims}"
        )

    return code + scale * attr.vector
