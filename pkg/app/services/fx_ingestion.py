"""
Exchange-rate ingestion and QQ data for the real-data application.

Input files are CSV with a header row and columns date,value. Missing markers
("ND" and empty cells by default) are removed before the log-difference is
taken, so retained neighbours are differenced across a gap.
"""

import logging
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.config import settings
from app.models.data_models import FxRecord, LMSeries
from app.services.exceptions import DataIngestionError, InsufficientDataError, LengthMismatchError
from app.services.lm_simulation import gen_fgn
from app.services.random_streams import QQ_STREAM

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class FxIngestionService:
    """
    Reads rate files into differenced-log series.

    Rates are kept with their dates so two files can be aligned before
    differencing.
    """

    DATE_COLUMN: str = "date"
    MIN_USABLE_ROWS: int = 3

    def __init__(self, missing_markers: Optional[List[str]] = None):
        self.missing_markers = list(settings.missing_markers if missing_markers is None else missing_markers)

    def read_rates(self, file: PathLike, column: str = "value", monthly: bool = False) -> pd.DataFrame:
        """
        Parse a rate file into a frame indexed by date with one column `rate`.

        Args:
            file: CSV path
            column: Name of the rate column
            monthly: Keep the last observation of each calendar month

        Raises:
            DataIngestionError: If the file cannot be parsed, a rate is not positive
                                or dates are not strictly increasing
            InsufficientDataError: If fewer than three usable rows remain
        """
        path = Path(file)
        try:
            raw = pd.read_csv(path, dtype=str, keep_default_na=False)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise DataIngestionError(f"cannot read {path}: {e}") from e

        for name in (self.DATE_COLUMN, column):
            if name not in raw.columns:
                raise DataIngestionError(f"{path} has no column {name!r} (columns: {list(raw.columns)})")

        cells = raw[column].str.strip()
        usable = raw.loc[~cells.isin(self.missing_markers)]
        dropped = len(raw) - len(usable)
        if dropped:
            logger.info(f"Dropped {dropped} rows with missing markers from {path.name}")

        try:
            dates = pd.to_datetime(usable[self.DATE_COLUMN].str.strip(), format="ISO8601")
            rates = pd.to_numeric(usable[column].str.strip())
        except (ValueError, TypeError) as e:
            raise DataIngestionError(f"unparseable row in {path}: {e}") from e

        try:
            records = [FxRecord(date=d.date(), rate=r) for d, r in zip(dates, rates.to_numpy(dtype=float))]
        except ValidationError as e:
            raise DataIngestionError(f"{path} contains a non-positive rate: {e.errors()[0]['msg']}") from e
        frame = pd.DataFrame(
            {"rate": [r.rate for r in records]},
            index=pd.DatetimeIndex([r.date for r in records], name=self.DATE_COLUMN),
        )
        if not np.all(np.isfinite(frame["rate"])):
            raise DataIngestionError(f"{path} contains non-finite rates")
        if not frame.index.is_monotonic_increasing or frame.index.has_duplicates:
            raise DataIngestionError(f"dates in {path} are not strictly increasing")

        if monthly:
            # Approximation: the observation day within each month is not known
            frame = frame.groupby(frame.index.to_period("M")).tail(1)
            logger.info(f"Aggregated {path.name} to {len(frame)} monthly observations")

        if len(frame) < self.MIN_USABLE_ROWS:
            raise InsufficientDataError(f"{path} has {len(frame)} usable rows, need at least {self.MIN_USABLE_ROWS}")
        return frame

    @staticmethod
    def log_difference(frame: pd.DataFrame) -> pd.Series:
        """Differenced log rates, dated by the later observation."""
        return np.log(frame["rate"]).diff().iloc[1:].rename("value")

    def ingest(self, file: PathLike, column: str = "value", monthly: bool = False) -> LMSeries:
        diffs = self.log_difference(self.read_rates(file, column, monthly))
        logger.info(f"Ingested {diffs.size} differenced log rates from {Path(file).name}")
        return LMSeries(values=diffs.to_numpy(), kind="ingested")

    def ingest_pair(
        self,
        x_file: PathLike,
        y_file: PathLike,
        column: str = "value",
        monthly: bool = False,
    ) -> pd.DataFrame:
        """
        Differenced log rates of two files on their common dates.

        The rate frames are inner-joined on date before differencing.

        Returns:
            DataFrame with columns x and y
        """
        x_rates = self.read_rates(x_file, column, monthly)
        y_rates = self.read_rates(y_file, column, monthly)
        joined = x_rates.join(y_rates, how="inner", lsuffix="_x", rsuffix="_y")
        if len(joined) < self.MIN_USABLE_ROWS:
            raise InsufficientDataError(f"only {len(joined)} common dates between {Path(x_file).name} and {Path(y_file).name}")
        if len(joined) < min(len(x_rates), len(y_rates)):
            logger.info(f"Aligned on {len(joined)} common dates")
        pair = pd.DataFrame({
            "x": np.log(joined["rate_x"]).diff(),
            "y": np.log(joined["rate_y"]).diff(),
        }).iloc[1:]
        return pair


def ingest_fx(file: PathLike, column: str = "value", monthly: bool = False) -> LMSeries:
    """Differenced log rates of one file after removing missing markers."""
    return FxIngestionService().ingest(file, column, monthly)


def qq_data(series, h_hat: float, seed: Optional[int] = None) -> pd.DataFrame:
    """
    Sorted standardized series against sorted simulated fGn of the same length.

    The fGn is drawn with memory parameter h_hat on the QQ stream of seed.

    Returns:
        DataFrame with columns sample and fgn
    """
    values = np.asarray(getattr(series, "values", series), dtype=float)
    sd = float(np.std(values))
    if sd == 0:
        logger.warning("QQ input is constant; sample quantiles are degenerate")
        standardized = np.zeros_like(values)
    else:
        standardized = (values - values.mean()) / sd
    simulated = gen_fgn(values.size, h_hat, seed=seed, stream=QQ_STREAM).values
    if simulated.size != standardized.size:
        raise LengthMismatchError("simulated and sample quantiles differ in length")
    return pd.DataFrame({"sample": np.sort(standardized), "fgn": np.sort(simulated)})
