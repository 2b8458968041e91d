"""
Trace and summary files.

Traces are written one file per (experiment, seed, arm) as CSV with the fixed
column order of `TRACE_COLUMNS` (empty fields for inapplicable columns) or as
line-delimited JSON with the same record schema. Each experiment also writes
one `<experiment>_summary.json` holding the configuration, its fingerprint
and the aggregate report.
"""

from __future__ import annotations
from pathlib import Path
from typing import Any
import json
import logging

import numpy as np
import pyarrow as pa
import pyarrow.csv as pacsv

from kalman_adapt.exceptions import TraceIOError
from kalman_adapt.experiments.trace import RECORD_FIELDS, ExperimentResult, ExperimentTrace, StepRecord
from kalman_adapt.harness.config import OutputFormat, RunConfig

logger = logging.getLogger(__name__)

TRACE_COLUMNS = (*RECORD_FIELDS, 'seed')
TRACE_SCHEMA = pa.schema(
    [pa.field('step', pa.int64(), nullable=False)]
    + [pa.field(name, pa.float64()) for name in RECORD_FIELDS[1:]]
    + [pa.field('seed', pa.int64(), nullable=False)]
)


def trace_filename(experiment: str, trace: ExperimentTrace, output_format: OutputFormat) -> str:
    label = f"_{trace.label}" if trace.label else ''
    return f"{experiment}_seed{trace.seed}{label}.{output_format.extension}"


def summary_filename(experiment: str) -> str:
    return f"{experiment}_summary.json"


def _rows(trace: ExperimentTrace) -> list[dict[str, Any]]:
    return [{**record.as_dict(), 'seed': trace.seed} for record in trace.records]


def trace_table(trace: ExperimentTrace) -> pa.Table:
    rows = _rows(trace)
    return pa.table({name: [row[name] for row in rows] for name in TRACE_COLUMNS}, schema=TRACE_SCHEMA)


def write_trace(trace: ExperimentTrace, path: str | Path, output_format: OutputFormat = OutputFormat.CSV) -> Path:
    """
    Write one trace; an empty trace gives a header-only CSV or an empty JSONL file.

    Raises
    ------
    TraceIOError
        If the file cannot be written.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if output_format == OutputFormat.CSV:
            # pyarrow quotes column names whatever the quoting style
            with open(path, 'wb') as f:
                f.write((','.join(TRACE_COLUMNS) + '\n').encode('utf-8'))
                pacsv.write_csv(trace_table(trace), f, write_options=pacsv.WriteOptions(
                    include_header=False, quoting_style='none',
                ))
        else:
            with open(path, 'w', encoding='utf-8', newline='\n') as f:
                for row in _rows(trace):
                    f.write(json.dumps(row, ensure_ascii=False) + '\n')
    except (OSError, pa.ArrowException) as e:
        raise TraceIOError(f"cannot write trace {path}: {e}") from e
    return path


def _record(row: dict[str, Any]) -> StepRecord:
    values = {name: row.get(name) for name in RECORD_FIELDS}
    for name in RECORD_FIELDS[1:]:
        value = values[name]
        values[name] = None if value is None else float(value)
    values['step'] = int(values['step'])
    return StepRecord(**values)


def read_trace(
    path: str | Path,
    output_format: OutputFormat | None = None,
    config_fingerprint: str = '',
    label: str = '',
) -> ExperimentTrace:
    """
    Read a trace written by `write_trace`; the format follows the file
    extension unless given. Files carry no fingerprint, so it is passed in.

    Raises
    ------
    TraceIOError
        If the file cannot be read or does not have the trace columns.
    """
    path = Path(path)
    if output_format is None:
        output_format = OutputFormat.CSV if path.suffix == '.csv' else OutputFormat.JSON
    try:
        if output_format == OutputFormat.CSV:
            table = pacsv.read_csv(path, convert_options=pacsv.ConvertOptions(
                column_types=TRACE_SCHEMA, strings_can_be_null=True,
            ))
            if tuple(table.column_names) != TRACE_COLUMNS:
                raise TraceIOError(f"{path}: columns {table.column_names} differ from {list(TRACE_COLUMNS)}")
            rows = table.to_pylist()
        else:
            with open(path, encoding='utf-8') as f:
                rows = [json.loads(line) for line in f if line.strip()]
    except (OSError, pa.ArrowException, json.JSONDecodeError) as e:
        raise TraceIOError(f"cannot read trace {path}: {e}") from e

    seeds = {int(row['seed']) for row in rows}
    if len(seeds) > 1:
        raise TraceIOError(f"{path}: records from several seeds {sorted(seeds)}")
    try:
        records = [_record(row) for row in rows]
    except (KeyError, TypeError, ValueError) as e:
        raise TraceIOError(f"{path}: malformed record: {e}") from e
    return ExperimentTrace(records, config_fingerprint, seeds.pop() if seeds else 0, label)


def to_json_value(value: Any) -> Any:
    """Plain JSON data: numpy values unwrapped, non-finite floats as null."""
    if isinstance(value, dict):
        return {str(k): to_json_value(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [to_json_value(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    if isinstance(value, Path):
        return str(value)
    return value


def write_summary(result: ExperimentResult, config: RunConfig, directory: str | Path) -> Path:
    path = Path(directory) / summary_filename(result.name)
    document = {
        'experiment': result.name,
        'config_fingerprint': config.fingerprint,
        'config': config.as_dict(),
        'num_traces': len(result.traces),
        'summary': result.summary,
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            json.dump(to_json_value(document), f, indent=2, ensure_ascii=False, allow_nan=False)
            f.write('\n')
    except (OSError, ValueError) as e:
        raise TraceIOError(f"cannot write summary {path}: {e}") from e
    return path


def write_result(result: ExperimentResult, config: RunConfig) -> list[Path]:
    """Write every trace of `result` and then its summary into the configured directory."""
    directory = config.output_path
    paths = [
        write_trace(trace, directory / trace_filename(result.name, trace, config.output_format), config.output_format)
        for trace in result.traces
    ]
    paths.append(write_summary(result, config, directory))
    logger.info("Wrote %d trace files and %s", len(result.traces), paths[-1].name)
    return paths
