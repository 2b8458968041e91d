"""
Run configuration.

A run is described by a TOML document with top-level keys `experiment`,
`seeds`, `output_path` and `output_format` and one table per experiment
(`[fewshot]`, `[shift]`, `[toy_llm]`, `[spectral]`, `[verify]`). Keys are
checked strictly against the section dataclasses; omitted keys keep their
defaults. Command-line overrides are applied on top of the file.

# Example

```toml
experiment = "shift"
seeds = 50

[shift]
q_grid = [0.0, 0.01]
shift_norm = 2.0
```
"""

from __future__ import annotations
from dataclasses import asdict, dataclass, field, fields, replace
from enum import StrEnum
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping
import hashlib
import json
import os
import tomllib

from kalman_adapt.exceptions import ConfigInvalid, KalmanAdaptException, require
from kalman_adapt.experiments.fewshot import FewShotConfig
from kalman_adapt.experiments.shift import ShiftConfig
from kalman_adapt.experiments.spectral_run import SpectralConfig
from kalman_adapt.experiments.toy_llm import ToyLLMConfig

CONFIGS_PATH = Path(__file__).parent.resolve() / 'configs'
MAX_WORKERS_ENV = 'KALMAN_ADAPT_MAX_WORKERS'


class Experiment(StrEnum):
    FEWSHOT = 'fewshot'
    SHIFT = 'shift'
    TOY_LLM = 'toy_llm'
    SPECTRAL = 'spectral'
    VERIFY = 'verify'


class OutputFormat(StrEnum):
    CSV = 'csv'
    JSON = 'json'

    @property
    def extension(self) -> str:
        return 'csv' if self == OutputFormat.CSV else 'jsonl'


@dataclass(frozen=True)
class VerifyConfig:
    """`checks` names the checks to run; empty runs all of them."""

    checks: tuple[str, ...] = ()


SECTIONS: dict[str, type] = {
    Experiment.FEWSHOT: FewShotConfig,
    Experiment.SHIFT: ShiftConfig,
    Experiment.TOY_LLM: ToyLLMConfig,
    Experiment.SPECTRAL: SpectralConfig,
    Experiment.VERIFY: VerifyConfig,
}
TOP_LEVEL_KEYS = ('experiment', 'seeds', 'output_path', 'output_format')


@dataclass(frozen=True)
class RunConfig:
    """
    Validated configuration of one run.

    Attributes & Properties
    -----------------------
    experiment : Experiment
        The experiment to run.
    seeds : tuple[int, ...]
        Root seeds, one run per seed; nonempty, nonnegative.
    output_path : Path
        Directory that receives trace and summary files.
    output_format : OutputFormat
        Trace file format.
    fewshot, shift, toy_llm, spectral, verify
        Section settings; only the one for `experiment` is used by a run.
    settings : object
        The section of the selected experiment.
    fingerprint : str
        SHA-256 of the canonical JSON of the scientific configuration
        (experiment, seeds and the selected section). Cached property.
    """

    experiment: Experiment
    seeds: tuple[int, ...]
    output_path: Path = Path('results')
    output_format: OutputFormat = OutputFormat.CSV
    fewshot: FewShotConfig = field(default_factory=FewShotConfig)
    shift: ShiftConfig = field(default_factory=ShiftConfig)
    toy_llm: ToyLLMConfig = field(default_factory=ToyLLMConfig)
    spectral: SpectralConfig = field(default_factory=SpectralConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)

    def __post_init__(self) -> None:
        require(len(self.seeds) > 0, 'seeds', "must not be empty")
        require(all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in self.seeds),
                'seeds', "must be nonnegative integers")

    @property
    def settings(self) -> Any:
        return getattr(self, self.experiment.value)

    def scientific_dict(self) -> dict[str, Any]:
        return {
            'experiment': str(self.experiment),
            'seeds': list(self.seeds),
            self.experiment.value: _plain(asdict(self.settings)),
        }

    def as_dict(self) -> dict[str, Any]:
        return {
            **self.scientific_dict(),
            'output_path': str(self.output_path),
            'output_format': str(self.output_format),
        }

    @cached_property
    def fingerprint(self) -> str:
        canonical = json.dumps(self.scientific_dict(), sort_keys=True, separators=(',', ':'), ensure_ascii=False)
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


@dataclass(frozen=True)
class Overrides:
    """Command-line values that replace file values; `settings` holds `section.key=value` strings."""

    experiment: str | None = None
    seeds: tuple[int, ...] | None = None
    output_path: str | None = None
    output_format: str | None = None
    settings: tuple[str, ...] = ()


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, StrEnum):
        return str(value)
    return value


# ── parsing ────────────────────────────────────────────────────────────────────

def parse_literal(text: str) -> Any:
    """A TOML literal (`3`, `0.1`, `[1, 2]`, `true`, `"x"`), or the bare string if it is not one."""
    try:
        return tomllib.loads(f"value = {text}")['value']
    except tomllib.TOMLDecodeError:
        return text


def _apply_setting(document: dict[str, Any], setting: str) -> None:
    key, sep, raw = setting.partition('=')
    key = key.strip()
    if not sep or not key:
        raise ConfigInvalid(f"expected key=value, got {setting!r}", field='--set')
    value = parse_literal(raw.strip())
    section, dot, name = key.partition('.')
    if not dot:
        document[key] = value
        return
    table = document.setdefault(section, {})
    if not isinstance(table, dict):
        raise ConfigInvalid("is not a table", field=section)
    table[name] = value


def _coerce(path: str, default: Any, value: Any) -> Any:
    """Check a file value against the type of the field's default."""
    if isinstance(default, StrEnum):
        try:
            return type(default)(value)
        except ValueError:
            raise ConfigInvalid(f"must be one of {', '.join(type(default))}, got {value!r}", field=path) from None
    if isinstance(default, bool):
        require(isinstance(value, bool), path, f"must be a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        require(isinstance(value, int) and not isinstance(value, bool), path, f"must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        require(isinstance(value, (int, float)) and not isinstance(value, bool), path,
                f"must be a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple):
        require(isinstance(value, (list, tuple)), path, f"must be a list, got {value!r}")
        return tuple(value)
    if isinstance(value, list):
        return tuple(value)
    return value


def build_section(name: str, table: Any) -> Any:
    cls = SECTIONS[name]
    if not isinstance(table, Mapping):
        raise ConfigInvalid("must be a table", field=name)
    defaults = cls()
    known = {f.name for f in fields(cls)}
    values = {}
    for key, value in table.items():
        path = f"{name}.{key}"
        if key not in known:
            raise ConfigInvalid("unknown key", field=path)
        values[key] = _coerce(path, getattr(defaults, key), value)
    try:
        return replace(defaults, **values)
    except KalmanAdaptException:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigInvalid(str(e), field=name) from e


def _parse_seeds(value: Any) -> tuple[int, ...]:
    """A list of seeds, or an integer N meaning seeds 0..N−1."""
    if isinstance(value, int) and not isinstance(value, bool):
        require(value >= 1, 'seeds', f"a seed count must be positive, got {value}")
        return tuple(range(value))
    require(isinstance(value, (list, tuple)), 'seeds', f"must be a list of integers or a count, got {value!r}")
    return tuple(value)


def parse_config(data: bytes | str, overrides: Overrides | None = None) -> RunConfig:
    """
    Parse a TOML document and apply command-line overrides (which win).

    Raises
    ------
    ConfigInvalid
        For malformed TOML, unknown keys or sections, ill-typed values and
        values that violate a section's constraints; the message names the field.
    """
    overrides = overrides or Overrides()
    text = data.decode('utf-8') if isinstance(data, bytes) else data
    try:
        document = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigInvalid(f"malformed TOML: {e}") from e

    for setting in overrides.settings:
        _apply_setting(document, setting)
    if overrides.experiment is not None:
        document['experiment'] = overrides.experiment
    if overrides.seeds is not None:
        document['seeds'] = list(overrides.seeds)
    if overrides.output_path is not None:
        document['output_path'] = overrides.output_path
    if overrides.output_format is not None:
        document['output_format'] = overrides.output_format

    for key in document:
        if key not in TOP_LEVEL_KEYS and key not in SECTIONS:
            raise ConfigInvalid("unknown key", field=key)
    require('experiment' in document, 'experiment', "is required")
    experiment = _coerce('experiment', Experiment.VERIFY, document['experiment'])
    output_format = _coerce('output_format', OutputFormat.CSV, document.get('output_format', 'csv'))
    output_path = document.get('output_path', 'results')
    require(isinstance(output_path, str) and output_path != '', 'output_path', "must be a nonempty string")

    sections = {name: build_section(name, document[name]) for name in SECTIONS if name in document}
    return RunConfig(
        experiment=experiment,
        seeds=_parse_seeds(document.get('seeds', [0])),
        output_path=Path(output_path),
        output_format=output_format,
        **sections,
    )


def default_config_path(experiment: str) -> Path:
    return CONFIGS_PATH / f'{experiment}.toml'


def load_config(path: str | Path | None, overrides: Overrides | None = None) -> RunConfig:
    """
    Read a configuration file; without a path, the shipped default for the
    override's experiment is used.
    """
    overrides = overrides or Overrides()
    if path is None:
        if overrides.experiment is None:
            raise ConfigInvalid("no configuration file and no experiment given", field='experiment')
        path = default_config_path(overrides.experiment)
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise ConfigInvalid(f"cannot read {path}: {e.strerror}", field='--config') from e
    return parse_config(data, overrides)


def max_workers(environ: Mapping[str, str] = os.environ) -> int:
    """Worker cap from the environment; 1 (sequential) when unset."""
    raw = environ.get(MAX_WORKERS_ENV, '').strip()
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigInvalid(f"must be an integer, got {raw!r}", field=MAX_WORKERS_ENV) from None
    require(value >= 1, MAX_WORKERS_ENV, "must be at least 1")
    return value
