"""Tab-separated output files with self-describing headers."""

import io
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

FORMAT = "%.12e"


class OutputError(OSError):
    """Writing an output file failed; the message names the path."""


def format_payload(record) -> str:
    """The data section of a record: column line plus rows, no timestamps."""
    buf = io.StringIO()
    buf.write("# " + "\t".join(record.columns) + "\n")
    data = record.data
    if data.size:
        step = record.block or data.shape[0]
        for start in range(0, data.shape[0], step):
            if start:
                buf.write("\n")
            np.savetxt(buf, data[start : start + step], fmt=FORMAT, delimiter="\t")
    return buf.getvalue()


def format_record(record, created=None) -> str:
    created = created or datetime.now(timezone.utc).isoformat(timespec="seconds")
    lines = [f"# kind: {record.kind}", f"# created: {created}"]
    lines += [f"# {k}: {v}" for k, v in record.metadata.items()]
    return "\n".join(lines) + "\n" + format_payload(record)


def write_outputs(records, directory) -> list:
    """Write each record to ``directory/record.name``; returns the paths.

    All files are written from the calling thread, one at a time.
    """
    records = list(records)
    if not records:
        return []
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {directory}: {exc.strerror or exc}") from exc
    paths = []
    for record in records:
        path = directory / record.name
        try:
            path.write_text(format_record(record), encoding="utf-8")
        except OSError as exc:
            raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
        paths.append(path)
    return paths


def read_table(path):
    """Header dict and data array of a file written by :func:`write_outputs`."""
    header = {}
    columns = None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.startswith("#"):
            continue
        body = line[1:].strip()
        if ": " in body and "\t" not in body:
            key, value = body.split(": ", 1)
            header[key] = value
        else:
            columns = body.split("\t")
    data = np.loadtxt(path, comments="#", ndmin=2)
    return header, columns, data
