from pathlib import Path

import pytest

from kalman_adapt.exceptions import ConfigInvalid
from kalman_adapt.experiments.fewshot import FeatureKind
from kalman_adapt.harness.config import (
    MAX_WORKERS_ENV,
    Experiment,
    OutputFormat,
    Overrides,
    load_config,
    max_workers,
    parse_config,
    parse_literal,
)


def test_minimal_document_uses_defaults():
    config = parse_config('experiment = "fewshot"')
    assert config.experiment == Experiment.FEWSHOT
    assert config.seeds == (0,)
    assert config.output_path == Path('results')
    assert config.output_format == OutputFormat.CSV
    assert config.settings.dim == 8
    assert config.settings.num_samples == 50


def test_seed_count_expands_to_range():
    assert parse_config('experiment = "shift"\nseeds = 3').seeds == (0, 1, 2)
    assert parse_config('experiment = "shift"\nseeds = [4, 9]').seeds == (4, 9)


def test_section_values_are_typed():
    config = parse_config(
        'experiment = "fewshot"\n'
        '[fewshot]\n'
        'dim = 4\n'
        'prior_scale = 3\n'
        'features = "encoder"\n'
        'sgd_step_sizes = [0.1]\n'
    )
    assert config.fewshot.dim == 4
    assert config.fewshot.prior_scale == 3.0 and isinstance(config.fewshot.prior_scale, float)
    assert config.fewshot.features == FeatureKind.ENCODER
    assert config.fewshot.sgd_step_sizes == (0.1,)


@pytest.mark.parametrize('document, field', [
    ('experiment = "fewshot"\nbogus = 1', 'bogus'),
    ('experiment = "fewshot"\n[fewshot]\nbogus = 1', 'fewshot.bogus'),
    ('experiment = "fewshot"\n[fewshot]\nnoise_var = -0.5', 'fewshot.noise_var'),
    ('experiment = "fewshot"\n[fewshot]\ndim = "eight"', 'fewshot.dim'),
    ('experiment = "fewshot"\n[fewshot]\nfeatures = "fourier"', 'fewshot.features'),
    ('experiment = "spectral"\n[spectral]\nbasis = "wavelet"', 'spectral.basis'),
    ('experiment = "toy_llm"\n[toy_llm]\nrelinearize = 1', 'toy_llm.relinearize'),
    ('experiment = "fewshot"\nseeds = [-1]', 'seeds'),
    ('experiment = "fewshot"\nseeds = 0', 'seeds'),
    ('experiment = "fewshot"\noutput_format = "xml"', 'output_format'),
    ('experiment = "nothing"', 'experiment'),
    ('seeds = [1]', 'experiment'),
])
def test_invalid_documents_name_the_field(document, field):
    with pytest.raises(ConfigInvalid) as info:
        parse_config(document)
    assert info.value.field == field
    assert field in str(info.value)


def test_malformed_toml():
    with pytest.raises(ConfigInvalid):
        parse_config('experiment = ')


def test_overrides_win():
    overrides = Overrides(
        experiment='fewshot', seeds=(5, 6), output_path='elsewhere', output_format='json',
        settings=('fewshot.dim=3', 'fewshot.sgd_step_sizes=[0.2, 0.4]'),
    )
    config = parse_config('experiment = "shift"\nseeds = [1]\n[fewshot]\ndim = 10', overrides)
    assert config.experiment == Experiment.FEWSHOT
    assert config.seeds == (5, 6)
    assert config.output_path == Path('elsewhere')
    assert config.output_format == OutputFormat.JSON
    assert config.fewshot.dim == 3
    assert config.fewshot.sgd_step_sizes == (0.2, 0.4)


def test_malformed_setting():
    with pytest.raises(ConfigInvalid) as info:
        parse_config('experiment = "fewshot"', Overrides(settings=('fewshot.dim',)))
    assert info.value.field == '--set'


def test_fingerprint_tracks_scientific_settings_only():
    base = parse_config('experiment = "fewshot"\nseeds = [1, 2]')
    same = parse_config('experiment = "fewshot"\nseeds = [1, 2]\noutput_path = "x"\noutput_format = "json"')
    other_section = parse_config('experiment = "fewshot"\nseeds = [1, 2]\n[shift]\ndim = 7')
    reseeded = parse_config('experiment = "fewshot"\nseeds = [1, 2]', Overrides(seeds=(3,)))
    changed = parse_config('experiment = "fewshot"\nseeds = [1, 2]\n[fewshot]\ndim = 4')

    assert len(base.fingerprint) == 64
    assert base.fingerprint == same.fingerprint == other_section.fingerprint
    assert reseeded.fingerprint != base.fingerprint
    assert changed.fingerprint != base.fingerprint


def test_as_dict_holds_the_active_section():
    document = parse_config('experiment = "spectral"').as_dict()
    assert document['experiment'] == 'spectral'
    assert document['spectral']['basis'] == 'cosine'
    assert 'fewshot' not in document
    assert document['output_format'] == 'csv'


@pytest.mark.parametrize('experiment', list(Experiment))
def test_shipped_configs_load(experiment):
    config = load_config(None, Overrides(experiment=str(experiment)))
    assert config.experiment == experiment
    assert len(config.seeds) >= 1


def test_shipped_defaults():
    assert load_config(None, Overrides(experiment='fewshot')).seeds == tuple(range(200))
    assert load_config(None, Overrides(experiment='shift')).settings.horizon == 1000


def test_config_file(tmp_path):
    path = tmp_path / 'run.toml'
    path.write_text('experiment = "spectral"\nseeds = [3]\n[spectral]\nnum_obs = 10\n', encoding='utf-8')
    config = load_config(path)
    assert config.spectral.num_obs == 10
    assert config.seeds == (3,)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigInvalid) as info:
        load_config(tmp_path / 'absent.toml')
    assert info.value.field == '--config'
    with pytest.raises(ConfigInvalid):
        load_config(None)


def test_max_workers():
    assert max_workers({}) == 1
    assert max_workers({MAX_WORKERS_ENV: '3'}) == 3
    for raw in ('zero', '0'):
        with pytest.raises(ConfigInvalid):
            max_workers({MAX_WORKERS_ENV: raw})


@pytest.mark.parametrize('text, value', [
    ('3', 3),
    ('0.25', 0.25),
    ('[1, 2]', [1, 2]),
    ('true', True),
    ('"cosine"', 'cosine'),
    ('cosine', 'cosine'),
])
def test_parse_literal(text, value):
    assert parse_literal(text) == value
