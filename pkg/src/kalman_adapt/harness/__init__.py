from kalman_adapt.harness.config import (
    Experiment,
    OutputFormat,
    Overrides,
    RunConfig,
    VerifyConfig,
    load_config,
    parse_config,
)
from kalman_adapt.harness.io import TRACE_COLUMNS, read_trace, write_result, write_summary, write_trace
from kalman_adapt.harness.verify import CHECK_NAMES, CheckResult, VerifyReport, run_checks
