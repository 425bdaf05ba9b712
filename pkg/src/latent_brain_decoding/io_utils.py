import os
import struct
import tempfile
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from collections.abc import Callable, Iterable, Sequence
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import ValidationError

from latent_brain_decoding.config import (
    COLS_SUFFIX,
    IDS_SUFFIX,
    MATRIX_HEADER_FORMAT,
    MATRIX_MAGIC,
    MATRIX_VERSION,
    REPORT_FLOAT_FORMAT,
)
from latent_brain_decoding.errors import (
    ConfigError,
    DecodingError,
    MatrixFormatError,
)
from latent_brain_decoding.schemas import RunConfig

HEADER_SIZE = struct.calcsize(MATRIX_HEADER_FORMAT)


def atomic_write(path: Path, writer: Callable[[Path], None]) -> None:
    """
    Write a file atomically: `writer` fills a temporary file in the target
    directory, which is then renamed over `path`.
    """

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(
        dir=path.parent, prefix=f".{path.name}.", suffix=".tmp"
    )
    os.close(fd)
    tmp_path = Path(tmp_name)

    try:
        writer(tmp_path)
        os.replace(tmp_path, path)
    except BaseException:
        tmp_path.unlink(missing_ok=True)
        raise


# ----------------------------- Matrix container -------------------------------


def encode_matrix(matrix: np.ndarray) -> bytes:
    """
    Serialize a 2-D matrix into the LDMX container.

    Layout: 4-byte magic "LDMX", uint32 version, uint64 n_rows,
    uint64 n_cols (all little-endian), then row-major float64 LE payload.

    Raises
    ------
    DecodingError
        If the matrix is not 2-D or contains non-finite values.
    """

    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[:, None]
    if matrix.ndim != 2:
        raise DecodingError(f"only 2-D matrices can be stored: {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise DecodingError("refusing to write non-finite values")

    n_rows, n_cols = matrix.shape
    header = struct.pack(
        MATRIX_HEADER_FORMAT, MATRIX_MAGIC, MATRIX_VERSION, n_rows, n_cols
    )
    payload = np.ascontiguousarray(matrix, dtype="<f8").tobytes(order="C")

    return header + payload


def decode_matrix(data: bytes) -> np.ndarray:
    """
    Parse an LDMX container.

    Raises
    ------
    MatrixFormatError
        On bad magic, unsupported version, truncated header or payload, or
        trailing bytes; the error names the offending byte offset.
    """

    if len(data) < HEADER_SIZE:
        raise MatrixFormatError("truncated header", offset=len(data))

    magic, version, n_rows, n_cols = struct.unpack_from(
        MATRIX_HEADER_FORMAT, data, 0
    )
    if magic != MATRIX_MAGIC:
        raise MatrixFormatError(f"bad magic {magic!r}", offset=0)
    if version != MATRIX_VERSION:
        raise MatrixFormatError(f"unsupported version {version}", offset=4)

    expected = HEADER_SIZE + 8 * n_rows * n_cols
    if len(data) < expected:
        # offset of the first missing byte
        raise MatrixFormatError(
            f"truncated payload: expected {expected} bytes, got {len(data)}",
            offset=len(data),
        )
    if len(data) > expected:
        raise MatrixFormatError("unexpected trailing bytes", offset=expected)

    payload = np.frombuffer(data, dtype="<f8", offset=HEADER_SIZE)
    return payload.reshape(n_rows, n_cols).astype(np.float64)


def write_matrix(path: Path, matrix: np.ndarray) -> None:
    blob = encode_matrix(matrix)
    atomic_write(Path(path), lambda tmp: tmp.write_bytes(blob))
    logger.debug(f"Wrote matrix {np.shape(matrix)} to {path}")


def read_matrix(path: Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Matrix file not found: {path}")

    return decode_matrix(path.read_bytes())


def read_matrix_csv(path: Path) -> np.ndarray:
    """Read a header-less comma-separated matrix of decimal floats."""

    df = pd.read_csv(
        path, header=None, dtype=np.float64, float_precision="round_trip"
    )
    return df.to_numpy(dtype=np.float64)


def read_matrix_any(path: Path) -> np.ndarray:
    """LDMX container, or header-less CSV when the suffix is `.csv`."""

    path = Path(path)
    if path.suffix.lower() == ".csv":
        if not path.exists():
            raise FileNotFoundError(f"Matrix file not found: {path}")
        return read_matrix_csv(path)
    return read_matrix(path)


# -------------------------------- Id sidecars ---------------------------------


def ids_path_for(matrix_path: Path) -> Path:
    return Path(matrix_path).with_suffix(IDS_SUFFIX)


def cols_path_for(matrix_path: Path) -> Path:
    return Path(matrix_path).with_suffix(COLS_SUFFIX)


def write_ids(path: Path, ids: Iterable[str]) -> None:
    lines = [str(i) for i in ids]
    for item in lines:
        if not item or "\n" in item or "\t" in item:
            raise DecodingError(f"invalid identifier {item!r}")

    text = "".join(f"{item}\n" for item in lines)
    atomic_write(Path(path), lambda tmp: tmp.write_text(text, "utf-8"))


def read_ids(path: Path) -> list[str]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Id sidecar not found: {path}")

    text = path.read_text(encoding="utf-8")
    return [line for line in text.splitlines() if line.strip()]


# --------------------------------- TSV tables ---------------------------------


def write_tsv(
    path: Path, df: pd.DataFrame, full_precision: bool = False
) -> None:
    """
    Write a TSV table.

    Report tables round floats to 6 significant digits; data tables that
    are read back (`full_precision=True`) keep the shortest repr that
    round-trips exactly.
    """

    text = df.to_csv(
        sep="\t",
        index=False,
        float_format=None if full_precision else REPORT_FLOAT_FORMAT,
        lineterminator="\n",
    )
    atomic_write(Path(path), lambda tmp: tmp.write_text(text, "utf-8"))


def read_tsv(
    path: Path,
    required_columns: Sequence[str] = (),
    dtype: dict[str, type] | None = None,
) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Table not found: {path}")

    try:
        df = pd.read_csv(
            path,
            sep="\t",
            dtype=dtype,
            keep_default_na=False,
            na_values=[""],
            float_precision="round_trip",
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DecodingError(f"{path.name}: unreadable table ({e})") from e

    missing = [c for c in required_columns if c not in df.columns]
    if missing:
        raise DecodingError(f"{path.name}: missing columns {missing}")

    return df


def float_columns(
    df: pd.DataFrame, columns: Sequence[str], source: str
) -> np.ndarray:
    """Columns of `df` as a float64 matrix; non-numeric cells raise."""

    try:
        return df[list(columns)].to_numpy(dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise DecodingError(
            f"{source}: non-numeric values in columns {list(columns)}"
        ) from e


def format_float(value: float) -> str:
    return REPORT_FLOAT_FORMAT % value


# -------------------------------- Run config ----------------------------------


def load_run_config(path: Path | None) -> RunConfig:
    """
    Load a TOML run configuration.

    Every section and key is optional and defaults to the package
    constants; unknown sections or keys are rejected.

    Raises
    ------
    ConfigError
        If the file cannot be parsed or fails validation.
    """

    if path is None:
        return RunConfig()

    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")

    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
        return RunConfig.model_validate(raw)

    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path.name}: invalid TOML ({e})") from e

    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"{path.name}: {where}: {first['msg']}") from e