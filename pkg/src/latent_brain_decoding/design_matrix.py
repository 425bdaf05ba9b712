"""
GLM design construction.

Trial timing is turned into boxcars on a microtime grid (MICROTIME_BINS per
TR), convolved with the canonical two-gamma HRF, and sampled at the start
of each scan. Training faces contribute one parametric regressor per latent
dimension (boxcar scaled by the face's code) plus a unit "bias" boxcar
(face vs fixation).
"""

from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger
from scipy import signal
from scipy import stats as sp_stats

from latent_brain_decoding import io_utils
from latent_brain_decoding.config import (
    BIAS_REGRESSOR,
    CONSTANT_REGRESSOR,
    FFT_ROUNDOFF,
    LATENT_REGRESSOR_PREFIX,
    MICROTIME_BINS,
    MOTION_REGRESSOR_PREFIX,
    RANK_TOLERANCE,
)
from latent_brain_decoding.enums import Condition
from latent_brain_decoding.errors import DecodingError, ShapeMismatchError
from latent_brain_decoding.latent_codec import LatentTable
from latent_brain_decoding.schemas import HrfParameters, RankReport

TRIAL_COLUMNS = ("onset_s", "duration_s", "condition", "stim_id")


@dataclass(frozen=True)
class TrialTable:
    """
    Event timing of one run.

    Attributes
    ----------
    onsets_s, durations_s : np.ndarray
        Trial onsets (nondecreasing, >= 0) and durations (> 0) in seconds.
    conditions : tuple[Condition, ...]
        Condition of each trial.
    stim_ids : tuple[str, ...]
        Stimulus of each trial; empty string for fixation trials.
    """

    onsets_s: np.ndarray
    durations_s: np.ndarray
    conditions: tuple[Condition, ...]
    stim_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        onsets = np.asarray(self.onsets_s, dtype=np.float64).ravel()
        durations = np.asarray(self.durations_s, dtype=np.float64).ravel()
        conditions = tuple(Condition(c) for c in self.conditions)
        stim_ids = tuple("" if s is None else str(s) for s in self.stim_ids)

        n = onsets.size
        if not durations.size == len(conditions) == len(stim_ids) == n:
            raise ShapeMismatchError("trial table columns differ in length")
        if np.any(~np.isfinite(onsets)) or np.any(onsets < 0):
            raise DecodingError("trial onsets must be finite and >= 0")
        if np.any(np.diff(onsets) < 0):
            raise DecodingError("trial onsets must be nondecreasing")
        if np.any(~np.isfinite(durations)) or np.any(durations <= 0):
            raise DecodingError("trial durations must be > 0")

        pairs = zip(conditions, stim_ids, strict=True)
        for i, (cond, stim) in enumerate(pairs):
            if cond.has_stimulus != bool(stim):
                raise DecodingError(
                    f"trial {i}: stim_id must be given iff the condition "
                    f"'{cond.value}' involves a stimulus"
                )

        onsets.setflags(write=False)
        durations.setflags(write=False)
        object.__setattr__(self, "onsets_s", onsets)
        object.__setattr__(self, "durations_s", durations)
        object.__setattr__(self, "conditions", conditions)
        object.__setattr__(self, "stim_ids", stim_ids)

    def __len__(self) -> int:
        return self.onsets_s.size

    @property
    def end_s(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(np.max(self.onsets_s + self.durations_s))

    def mask(self, condition: Condition) -> np.ndarray:
        return np.array([c is condition for c in self.conditions], dtype=bool)

    def select(self, keep: np.ndarray) -> "TrialTable":
        keep = np.asarray(keep, dtype=bool)
        return TrialTable(
            self.onsets_s[keep],
            self.durations_s[keep],
            tuple(c for c, k in zip(self.conditions, keep, strict=True) if k),
            tuple(s for s, k in zip(self.stim_ids, keep, strict=True) if k),
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "onset_s": self.onsets_s,
                "duration_s": self.durations_s,
                "condition": [c.value for c in self.conditions],
                "stim_id": list(self.stim_ids),
            }
        )

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "TrialTable":
        missing = [c for c in TRIAL_COLUMNS if c not in df.columns]
        if missing:
            raise DecodingError(f"trial table missing columns {missing}")

        try:
            conditions = tuple(Condition(c) for c in df["condition"])
        except ValueError as e:
            raise DecodingError(f"trial table: {e}") from e

        stim_ids = tuple(
            "" if pd.isna(s) else str(s) for s in df["stim_id"].tolist()
        )
        timing = io_utils.float_columns(
            df, ["onset_s", "duration_s"], "trial table"
        )
        return cls(
            timing[:, 0],
            timing[:, 1],
            conditions,
            stim_ids,
        )


def read_trial_table(path: Path) -> TrialTable:
    df = io_utils.read_tsv(
        path, required_columns=TRIAL_COLUMNS, dtype={"stim_id": str}
    )
    return TrialTable.from_frame(df)


def write_trial_table(path: Path, trials: TrialTable) -> None:
    io_utils.write_tsv(path, trials.to_frame(), full_precision=True)


@dataclass(frozen=True)
class DesignMatrix:
    """
    GLM design sampled on the scan grid.

    Attributes
    ----------
    values : np.ndarray
        Matrix of shape (n_scans, n_regressors).
    regressor_names : tuple[str, ...]
        Unique column names. Latent columns are named "latent_0000", ...,
        the face-vs-fixation column "bias", per-stimulus columns
        "<condition>:<stim_id>".
    tr_s : float
        Repetition time in seconds.
    """

    values: np.ndarray
    regressor_names: tuple[str, ...]
    tr_s: float

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True)
        names = tuple(self.regressor_names)
        if values.ndim != 2 or values.shape[1] != len(names):
            raise ShapeMismatchError(
                f"design {values.shape} does not match {len(names)} names"
            )
        if len(set(names)) != len(names):
            raise DecodingError("regressor names must be unique")
        if not np.all(np.isfinite(values)):
            raise DecodingError("design contains non-finite values")

        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "regressor_names", names)

    @property
    def n_scans(self) -> int:
        return self.values.shape[0]

    @property
    def n_regressors(self) -> int:
        return self.values.shape[1]

    def index(self, name: str) -> int:
        try:
            return self.regressor_names.index(name)
        except ValueError:
            raise DecodingError(f"no regressor named '{name}'") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    @property
    def latent_indices(self) -> list[int]:
        return [
            i
            for i, name in enumerate(self.regressor_names)
            if name.startswith(LATENT_REGRESSOR_PREFIX)
        ]

    def head(self, n_scans: int, drop_empty: bool = True) -> "DesignMatrix":
        """
        First `n_scans` rows; columns that are all zero in the kept rows
        (e.g. stimuli first shown later) are dropped when `drop_empty`.
        """
        values = self.values[:n_scans]
        keep = np.ones(self.n_regressors, dtype=bool)
        if drop_empty:
            keep = np.any(values != 0.0, axis=0)
        names = tuple(
            n for n, k in zip(self.regressor_names, keep, strict=True) if k
        )
        return DesignMatrix(values[:, keep], names, self.tr_s)


def latent_regressor_name(dim: int) -> str:
    return f"{LATENT_REGRESSOR_PREFIX}{dim:04d}"


def stimulus_regressor_name(condition: Condition, stim_id: str) -> str:
    return f"{condition.value}:{stim_id}"


# ------------------------------------ HRF -------------------------------------


def canonical_hrf(
    dt_s: float, params: HrfParameters | None = None
) -> np.ndarray:
    """
    Canonical two-gamma hemodynamic response sampled every `dt_s` seconds.

    The kernel is the peak gamma density minus the undershoot density
    divided by the peak:undershoot ratio, sampled on [0, kernel_length_s]
    and scaled so that its maximum is 1.

    Parameters
    ----------
    dt_s : float
        Sampling step in seconds, 0 < dt_s <= 1.
    params : HrfParameters, optional
        Shape parameters; SPM defaults (6, 16, 1, 1, 6, 32 s) if omitted.

    Returns
    -------
    np.ndarray
        Kernel samples starting at t = 0 (where the value is 0).

    Raises
    ------
    DecodingError
        If `dt_s` is outside (0, 1].
    """

    if not 0.0 < dt_s <= 1.0:
        raise DecodingError(f"HRF sampling step must be in (0, 1], got {dt_s}")

    p = params or HrfParameters()
    n_samples = int(np.floor(p.kernel_length_s / dt_s + 1e-9)) + 1
    t = np.arange(n_samples) * dt_s

    peak = sp_stats.gamma.pdf(
        t, p.peak_delay_s / p.peak_dispersion, scale=p.peak_dispersion
    )
    undershoot = sp_stats.gamma.pdf(
        t,
        p.undershoot_delay_s / p.undershoot_dispersion,
        scale=p.undershoot_dispersion,
    )
    kernel = peak - undershoot / p.peak_undershoot_ratio

    return kernel / kernel.max()


# ---------------------------------- Design ------------------------------------


def _boxcar_bins(
    onset_s: float, duration_s: float, dt: float
) -> tuple[int, int]:
    start = int(round(onset_s / dt))
    stop = max(start + 1, int(round((onset_s + duration_s) / dt)))
    return start, stop


def build_design(
    trials: TrialTable,
    latents: LatentTable | None,
    n_scans: int,
    tr_s: float,
    include_parametric: bool = True,
    *,
    microtime_bins: int = MICROTIME_BINS,
    stimulus_conditions: Sequence[Condition] = (),
    motion: np.ndarray | None = None,
    include_constant: bool = True,
    hrf_params: HrfParameters | None = None,
) -> DesignMatrix:
    """
    Build the HRF-convolved GLM design of one run.

    Columns, in order:

    - "latent_0000" ... : one parametric regressor per latent dimension
      (training-face boxcars scaled by the face's code), if
      `include_parametric`;
    - "bias" : unit boxcar over training faces (face vs fixation);
    - "<condition>:<stim_id>" : one boxcar per stimulus of each condition in
      `stimulus_conditions` (GLM betas of test faces or imagery);
    - one nuisance boxcar per remaining condition present (fixation,
      one-back repeats, ...);
    - "motion_00" ... : pre-supplied motion regressors, not convolved;
    - "constant" : intercept, if `include_constant`.

    Parameters
    ----------
    trials : TrialTable
        Event timing of the run.
    latents : LatentTable or None
        Latent code of every training stimulus (required when
        `include_parametric`).
    n_scans : int
        Number of scans in the run.
    tr_s : float
        Repetition time in seconds.
    include_parametric : bool, optional
        Whether latent parametric regressors are included. Default is True.
    microtime_bins : int, optional
        Microtime bins per TR. Default is 16.
    stimulus_conditions : Sequence[Condition], optional
        Conditions modelled with one column per stimulus.
    motion : np.ndarray, optional
        Matrix (n_scans, n_motion) appended as nuisance columns.
    include_constant : bool, optional
        Whether an intercept column is appended. Default is True.
    hrf_params : HrfParameters, optional
        HRF shape; SPM canonical by default.

    Returns
    -------
    DesignMatrix
        Design sampled at the first microtime bin of each scan.

    Raises
    ------
    DecodingError
        If a training stimulus has no latent code (the message names it),
        or a trial ends after the last scan.
    """

    if n_scans < 1 or tr_s <= 0 or microtime_bins < 1:
        raise DecodingError("n_scans, tr_s and microtime_bins must be > 0")

    run_length = n_scans * tr_s
    if trials.end_s > run_length + 1e-9:
        raise DecodingError(
            f"trial ends at {trials.end_s:.3f} s, beyond the scan window of "
            f"{run_length:.3f} s ({n_scans} scans x {tr_s} s)"
        )

    dt = tr_s / microtime_bins
    n_micro = n_scans * microtime_bins
    stimulus_conditions = tuple(Condition(c) for c in stimulus_conditions)
    train_idx = np.flatnonzero(trials.mask(Condition.TRAIN_FACE))

    names: list[str] = []
    neural: list[np.ndarray] = []

    if include_parametric:
        if latents is None:
            raise DecodingError("parametric design requires a latent table")
        known = set(latents.stim_ids)
        for i in train_idx:
            if trials.stim_ids[i] not in known:
                raise DecodingError(
                    f"missing latent code for stimulus '{trials.stim_ids[i]}'"
                )

        parametric = np.zeros((n_micro, latents.n_dims))
        for i in train_idx:
            start, stop = _boxcar_bins(
                trials.onsets_s[i], trials.durations_s[i], dt
            )
            parametric[start:stop] += latents.row(trials.stim_ids[i])
        names.extend(latent_regressor_name(d) for d in range(latents.n_dims))
        neural.append(parametric)

    def boxcar(indices: Sequence[int]) -> np.ndarray:
        column = np.zeros((n_micro, 1))
        for i in indices:
            start, stop = _boxcar_bins(
                trials.onsets_s[i], trials.durations_s[i], dt
            )
            column[start:stop] += 1.0
        return column

    names.append(BIAS_REGRESSOR)
    neural.append(boxcar(train_idx))

    for condition in stimulus_conditions:
        idx = np.flatnonzero(trials.mask(condition))
        for stim_id in dict.fromkeys(trials.stim_ids[i] for i in idx):
            members = [i for i in idx if trials.stim_ids[i] == stim_id]
            names.append(stimulus_regressor_name(condition, stim_id))
            neural.append(boxcar(members))

    for condition in Condition:
        if condition is Condition.TRAIN_FACE:
            continue
        if condition in stimulus_conditions:
            continue
        idx = np.flatnonzero(trials.mask(condition))
        if idx.size:
            names.append(condition.value)
            neural.append(boxcar(idx))

    kernel = canonical_hrf(dt, hrf_params)
    stacked = np.hstack(neural)
    convolved = signal.fftconvolve(stacked, kernel[:, None], axes=0)[:n_micro]
    # FFT roundoff where the exact convolution is zero
    scale = np.abs(convolved).max(axis=0, keepdims=True)
    convolved[np.abs(convolved) <= FFT_ROUNDOFF * scale] = 0.0
    values = convolved[::microtime_bins]

    extra: list[np.ndarray] = []
    if motion is not None:
        motion = np.atleast_2d(np.asarray(motion, dtype=np.float64))
        if motion.shape[0] != n_scans:
            raise ShapeMismatchError(
                f"motion has {motion.shape[0]} rows for {n_scans} scans"
            )
        names.extend(
            f"{MOTION_REGRESSOR_PREFIX}{j:02d}" for j in range(motion.shape[1])
        )
        extra.append(motion)

    if include_constant:
        names.append(CONSTANT_REGRESSOR)
        extra.append(np.ones((n_scans, 1)))

    if extra:
        values = np.hstack([values, *extra])

    logger.debug(
        f"Built design {values.shape} from {len(trials)} trials "
        f"({train_idx.size} parametric)"
    )
    return DesignMatrix(values, tuple(names), tr_s)


def check_full_rank(
    design: DesignMatrix, tolerance: float = RANK_TOLERANCE
) -> RankReport:
    """
    Numerical rank of a design: singular values above `tolerance` times the
    largest one.
    """

    if design.n_scans == 0 or design.n_regressors == 0:
        raise DecodingError("design is empty")

    s = np.linalg.svd(design.values, compute_uv=False)
    rank = int(np.count_nonzero(s > tolerance * s[0])) if s[0] > 0 else 0
    condition = float(s[0] / s[-1]) if s[-1] > 0 else float("inf")

    return RankReport(
        rank=rank,
        n_regressors=design.n_regressors,
        full_rank=rank == design.n_regressors,
        singular_values=[float(v) for v in s],
        condition_number=condition,
    )
