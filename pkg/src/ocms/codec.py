"""
Wire formats of client reports.

OCMS reports travel as CSV (``z,a0,a1``, unsigned decimal) or as packed
little-endian records of 20 bytes (u32 z, u64 a0, u64 a1). Hadamard-based
baseline reports use CSV ``alg,j,z``; CMS+HE rows append the stage-one hash
coefficients as ``a0,a1``.
"""

import csv
import logging
from pathlib import Path

import numpy as np

import ocms._constants as consts
from .baselines import CmsHeReports, HadamardReports
from .cms import ReportBatch
from .exceptions import CodecError

logger = logging.getLogger(__name__)

REPORT_HEADER = ("z", "a0", "a1")
BASELINE_HEADER = ("alg", "j", "z")
CMSHE_HEADER = (*BASELINE_HEADER, "a0", "a1")
BASELINE_LABELS = ("HE", "RHR", "CMSHE")

_RECORD = np.dtype([("z", "<u4"), ("a0", "<u8"), ("a1", "<u8")])
_U64_MAX = 2**64 - 1


def _unsigned(token: str, index: int, limit: int = _U64_MAX) -> int:
    if not token.isdigit() or int(token) > limit:
        logger.error("Record %d holds %r where an unsigned integer was expected", index, token)
        raise CodecError(f"record {index}: {token!r} is not an unsigned integer up to {limit}")
    return int(token)


def _signed(token: str, index: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise CodecError(f"record {index}: {token!r} is not an integer") from None


def write_reports_csv(path: str | Path, reports: ReportBatch) -> None:
    """Write one CSV row per report under the header z,a0,a1."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        writer.writerows(zip(reports.z.tolist(), reports.a0.tolist(), reports.a1.tolist(), strict=True))
    logger.info("Wrote %d reports to %s", len(reports), path)


def read_reports_csv(path: str | Path) -> ReportBatch:
    """
    Read reports written by :func:`write_reports_csv`.

    Raises:
        CodecError: If the header or a record is malformed; records count from 1.
    """
    with open(path, newline="", encoding="utf-8") as handle:
        rows = csv.reader(handle)
        if tuple(next(rows, ())) != REPORT_HEADER:
            raise CodecError(f"{path}: header must read {','.join(REPORT_HEADER)}")
        z, a0, a1 = [], [], []
        for index, row in enumerate(rows, start=1):
            if len(row) != len(REPORT_HEADER):
                raise CodecError(f"record {index}: expected 3 fields, found {len(row)}")
            z.append(_unsigned(row[0], index))
            a0.append(_unsigned(row[1], index))
            a1.append(_unsigned(row[2], index))
    return ReportBatch(z=z, a0=np.array(a0, dtype=np.uint64), a1=np.array(a1, dtype=np.uint64))


def pack_reports(reports: ReportBatch) -> bytes:
    """Serialize reports as consecutive 20-byte little-endian records."""
    if len(reports) and (int(reports.z.min()) < 0 or int(reports.z.max()) > 0xFFFFFFFF):
        raise CodecError("bucket indices must fit in an unsigned 32-bit field")
    records = np.empty(len(reports), dtype=_RECORD)
    records["z"] = reports.z
    records["a0"] = reports.a0
    records["a1"] = reports.a1
    return records.tobytes()


def unpack_reports(data: bytes) -> ReportBatch:
    """
    Inverse of :func:`pack_reports`.

    Raises:
        CodecError: If the buffer is not a whole number of records.
    """
    if len(data) % consts.REPORT_RECORD_BYTES:
        logger.error("Packed buffer of %d bytes is not a multiple of %d", len(data), consts.REPORT_RECORD_BYTES)
        raise CodecError(
            f"record {len(data) // consts.REPORT_RECORD_BYTES + 1}: truncated, "
            f"{len(data) % consts.REPORT_RECORD_BYTES} trailing bytes"
        )
    records = np.frombuffer(data, dtype=_RECORD)
    return ReportBatch(z=records["z"].astype(np.int64), a0=records["a0"].copy(), a1=records["a1"].copy())


def write_baseline_csv(path: str | Path, alg: str, reports: HadamardReports | CmsHeReports) -> None:
    """Write HE or RHR reports as ``alg,j,z`` rows, or CMS+HE reports with trailing ``a0,a1``."""
    if alg not in BASELINE_LABELS:
        raise CodecError(f"baseline label must be one of {BASELINE_LABELS}, got {alg!r}")
    is_cms_he = alg == "CMSHE"
    if is_cms_he != isinstance(reports, CmsHeReports):
        raise TypeError(f"reports of type {type(reports).__name__} do not match label {alg}")
    stage_two = reports.stage_two if is_cms_he else reports
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CMSHE_HEADER if is_cms_he else BASELINE_HEADER)
        columns = [stage_two.j.tolist(), stage_two.z.tolist()]
        if is_cms_he:
            columns += [reports.a0.tolist(), reports.a1.tolist()]
        for values in zip(*columns, strict=True):
            writer.writerow((alg, *values))


def read_baseline_csv(path: str | Path) -> tuple[str, HadamardReports | CmsHeReports]:
    """
    Read reports written by :func:`write_baseline_csv`.

    Returns:
        ``(label, reports)``.

    Raises:
        CodecError: On a bad header, an unknown or mixed label, or a malformed record.
    """
    with open(path, newline="", encoding="utf-8") as handle:
        rows = csv.reader(handle)
        header = tuple(next(rows, ()))
        if header not in (BASELINE_HEADER, CMSHE_HEADER):
            raise CodecError(f"{path}: header must read {','.join(BASELINE_HEADER)}")
        label = None
        j, z, a0, a1 = [], [], [], []
        for index, row in enumerate(rows, start=1):
            if len(row) != len(header):
                raise CodecError(f"record {index}: expected {len(header)} fields, found {len(row)}")
            if row[0] not in BASELINE_LABELS or label not in (None, row[0]):
                raise CodecError(f"record {index}: unexpected label {row[0]!r}")
            label = row[0]
            j.append(_unsigned(row[1], index))
            z.append(_signed(row[2], index))
            if header == CMSHE_HEADER:
                a0.append(_unsigned(row[3], index))
                a1.append(_unsigned(row[4], index))
    if label is None:
        raise CodecError(f"{path}: no records")
    if (label == "CMSHE") != (header == CMSHE_HEADER):
        raise CodecError(f"{path}: label {label} does not match the header")
    stage_two = HadamardReports(j=j, z=z)
    if label != "CMSHE":
        return label, stage_two
    reports = CmsHeReports(a0=np.array(a0, dtype=np.uint64), a1=np.array(a1, dtype=np.uint64), stage_two=stage_two)
    return label, reports
