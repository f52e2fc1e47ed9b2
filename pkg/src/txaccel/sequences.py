"""Convergence sequences, trailing windows, relative errors, and the
success criterion, plus dataset CSV io.

A sequence holds the center scalar fluxes of one slab problem indexed by
increasing quadrature order.  Accelerators consume the four most recent
terms (a Window, newest first).  The relative error between consecutive
values is |curr - prev| / |curr|, with a +inf sentinel when the current
value is too small to divide by; a method succeeds at a position when its
error is strictly smaller than the raw sequence's error there.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import InsufficientHistoryError, InvalidArgumentError

#: Relative errors with |curr| below this are reported as UNDEFINED_ERROR.
TINY_DENOMINATOR = 1e-300

#: Sentinel for an undefined relative error or an invalid accelerator
#: output.  +inf never wins a strict comparison, which is exactly the
#: "count as a loss" behavior the benchmark needs.
UNDEFINED_ERROR = math.inf


class Window(NamedTuple):
    """The four most recent sequence terms, newest first."""

    s_n: float
    s_nm1: float
    s_nm2: float
    s_nm3: float


@dataclass(frozen=True)
class Sequence:
    """A convergence sequence with its physical metadata."""

    id: str
    c: float
    width_mfp: float
    orders: tuple
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "orders", tuple(int(n) for n in self.orders))
        if len(self.orders) != values.shape[0] or len(self.orders) < 1:
            raise InvalidArgumentError(
                f"sequence {self.id!r}: orders and values must have equal "
                f"nonzero length ({len(self.orders)} vs {values.shape[0]})"
            )
        if any(b <= a for a, b in zip(self.orders, self.orders[1:])):
            raise InvalidArgumentError(
                f"sequence {self.id!r}: orders must be strictly increasing"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError(
                f"sequence {self.id!r}: all values must be finite"
            )

    def index_of(self, order: int) -> int:
        try:
            return self.orders.index(order)
        except ValueError:
            raise InsufficientHistoryError(
                f"sequence {self.id!r} has no term at order {order} "
                f"(orders {self.orders[0]}..{self.orders[-1]})"
            ) from None


def relative_error(curr: float, prev: float) -> float:
    """Relative change between consecutive terms, |curr - prev| / |curr|.

    Total: when |curr| < 1e-300 the result is the UNDEFINED_ERROR
    sentinel, which compares as +inf.
    """
    if abs(curr) < TINY_DENOMINATOR:
        return UNDEFINED_ERROR
    return abs(curr - prev) / abs(curr)


def success_at(formula_err: float, raw_err: float) -> bool:
    """Strict success criterion: the method's error beats the raw error.

    Ties fail, and the UNDEFINED_ERROR sentinel never wins.
    """
    return formula_err < raw_err


def window_at(seq: Sequence, position_order: int) -> Window:
    """The four terms ending at ``position_order``, newest first.

    Raises InsufficientHistoryError when the position has fewer than
    three predecessors.
    """
    i = seq.index_of(position_order)
    if i < 3:
        raise InsufficientHistoryError(
            f"order {position_order} has only {i} predecessors in sequence "
            f"{seq.id!r}; a window needs 3"
        )
    v = seq.values
    return Window(v[i], v[i - 1], v[i - 2], v[i - 3])


# ---------------------------------------------------------------------------
# Dataset file io
#
# CSV with header sequence_id,c,width_mfp,order,center_flux, one row per
# (sequence, order), floats at 17 significant digits so values round-trip
# exactly.  A sidecar key=value text file holds the grid definition.
# ---------------------------------------------------------------------------

DATASET_HEADER = ["sequence_id", "c", "width_mfp", "order", "center_flux"]


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def metadata_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".meta")


def write_dataset(csv_path, sequences, metadata=None) -> None:
    """Write sequences to CSV and, when metadata is given, the sidecar file."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DATASET_HEADER)
        for seq in sequences:
            for order, value in zip(seq.orders, seq.values):
                writer.writerow(
                    [seq.id, _fmt(seq.c), _fmt(seq.width_mfp), order, _fmt(value)]
                )
    if metadata is not None:
        write_metadata(metadata_path(csv_path), metadata)


def write_metadata(path, metadata: dict) -> None:
    with open(path, "w") as fh:
        for key, value in metadata.items():
            fh.write(f"{key}={value}\n")


def read_metadata(path) -> dict:
    meta = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and "=" in line:
                key, _, value = line.partition("=")
                meta[key] = value
    return meta


def load_dataset(csv_path) -> list:
    """Read a dataset CSV back into Sequence objects, preserving file order."""
    csv_path = Path(csv_path)
    rows_by_id = {}
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != DATASET_HEADER:
            raise InvalidArgumentError(
                f"{csv_path}: expected header {','.join(DATASET_HEADER)!r}, "
                f"got {header!r}"
            )
        for row in reader:
            if not row:
                continue
            seq_id, c, width, order, value = row
            entry = rows_by_id.setdefault(seq_id, {"c": float(c), "width": float(width),
                                                   "orders": [], "values": []})
            entry["orders"].append(int(order))
            entry["values"].append(float(value))
    return [
        Sequence(id=seq_id, c=e["c"], width_mfp=e["width"],
                 orders=tuple(e["orders"]), values=np.array(e["values"]))
        for seq_id, e in rows_by_id.items()
    ]
