import re

import pytest

from src.config import Config, config, config_hash, load_experiment_config, load_experiment_data, parse_pairs
from src.errors import ConfigError
from src.models import SleepParams, Strategy
from src.reporter import write_sleep_config


def _edit(path, old, new):
    path.write_text(path.read_text().replace(old, new))
    return path


def test_loads_a_complete_config(tiny_config, tmp_path):
    cfg = load_experiment_config(tiny_config('src'))
    assert cfg.dataset == 'mnist'
    assert cfg.strategy is Strategy.SRC
    assert cfg.hidden_size == 16
    assert cfg.ep.free_steps == 10 and cfg.ep.clamped_steps == 4
    assert cfg.ep.alpha1 == 0.03  # from the mnist defaults
    assert cfg.sleep == SleepParams(1.0, 1.0, 0.5, 0.5, 0.001, 0.0005, 10)
    assert cfg.num_orders == 2
    assert cfg.output_dir == tmp_path / 'runs' / 'src'
    assert cfg.ga.population == 4 and cfg.ga.max_generations == 1
    assert re.fullmatch(r'[0-9a-f]{12}', cfg.config_hash)


def test_build_plan_and_data(tiny_config):
    cfg = load_experiment_config(tiny_config('sequential'))
    data = load_experiment_data(cfg)
    assert len(data) == 100 and data.num_classes == 10
    plan = cfg.build_plan(data)
    assert plan.task_orders[0] == (0, 1, 2, 3, 4)
    assert len(plan.task_orders) == 2
    assert plan.hidden_size == 16


def test_fraction_subsamples_every_class(tiny_config):
    path = _edit(tiny_config('sequential'), '[data]\n', '[data]\nfraction = 0.5\n')
    data = load_experiment_data(load_experiment_config(path))
    assert len(data) == 50


def test_fast_tier(tiny_config):
    cfg = load_experiment_config(_edit(tiny_config('sequential'), 'hidden_size = 16', 'hidden_size = 1024'))
    fast = cfg.fast()
    assert fast.hidden_size == 256
    assert fast.data_fraction == 0.2
    assert cfg.hidden_size == 1024


def test_preset_hidden_size(tiny_config):
    cfg = load_experiment_config(_edit(tiny_config('sequential'), 'hidden_size = 16\n', ''))
    assert cfg.hidden_size == 1024


def test_explicit_orders(tiny_config):
    path = _edit(tiny_config('sequential'), 'num_orders = 2', 'orders = 0,1,2,3,4; 4,3,2,1,0')
    cfg = load_experiment_config(path)
    assert cfg.orders == [(0, 1, 2, 3, 4), (4, 3, 2, 1, 0)]

    bad = load_experiment_config(_edit(path, '4,3,2,1,0', '0,1'))
    with pytest.raises(ConfigError):
        bad.build_plan(load_experiment_data(bad))


@pytest.mark.parametrize('old, new', [
    ('hidden_size = 16', 'hidden_size = 16\nwidth = 3'),
    ('[ga]', '[gpu]\ncount = 1\n\n[ga]'),
    ('free_steps = 10', 'free_steps = many'),
    ('strategy = sequential', 'strategy = dream'),
    ('dataset = mnist', 'dataset = svhn'),
    ('[data]\n', '[data]\nfraction = 1.5\n'),
    ('batch_size = 16', 'batch_size = 0'),
    ('[ep]\n', '[ep]\nbeta = 0\n'),
])
def test_invalid_configs_are_rejected(tiny_config, old, new):
    path = _edit(tiny_config('sequential'), old, new)
    with pytest.raises(ConfigError):
        load_experiment_config(path)


def test_missing_files(tiny_config, tmp_path):
    with pytest.raises(ConfigError):
        load_experiment_config(tmp_path / 'nope.cfg')
    path = tiny_config('sequential')
    (tmp_path / 'train-images-idx3-ubyte').unlink()
    with pytest.raises(ConfigError, match='not found'):
        load_experiment_config(path)


def test_sleeping_strategy_needs_sleep_section(tiny_config):
    text = tiny_config('src').read_text()
    start, end = text.index('[sleep]'), text.index('[experiment]')
    path = tiny_config('src')
    path.write_text(text[:start] + text[end:])
    with pytest.raises(ConfigError, match='sleep'):
        load_experiment_config(path)


def test_incomplete_sleep_section(tiny_config):
    path = _edit(tiny_config('src'), 'duration_T = 10\n', '')
    with pytest.raises(ConfigError, match='duration_T'):
        load_experiment_config(path)


def test_tuned_sleep_file_can_be_included(tiny_config, tmp_path):
    tuned = SleepParams(2.0, 3.0, 4.0, 5.0, 0.002, 0.001, 77, feedback_on=False)
    write_sleep_config(tmp_path / 'tuned' / 'mnist_sleep.cfg', tuned, {'config_hash': 'abc'})

    path = tiny_config('src')
    text = path.read_text()
    start, end = text.index('[sleep]'), text.index('[experiment]')
    path.write_text(text[:start] + '[sleep]\ninclude = tuned/mnist_sleep.cfg\n\n' + text[end:])
    cfg = load_experiment_config(path)
    assert cfg.sleep == tuned

    first_hash = cfg.config_hash
    write_sleep_config(tmp_path / 'tuned' / 'mnist_sleep.cfg', SleepParams(1, 1, 1, 1, 0, 0, 5))
    assert load_experiment_config(path).config_hash != first_hash

    _edit(path, 'include = tuned/mnist_sleep.cfg', 'include = tuned/mnist_sleep.cfg\nduration_T = 9')
    assert load_experiment_config(path).sleep.duration_T == 9


def test_data_root_resolves_relative_dataset_paths(tiny_config, tmp_path, monkeypatch):
    elsewhere = tmp_path / 'configs'
    elsewhere.mkdir()
    path = elsewhere / 'moved.cfg'
    path.write_text(tiny_config('sequential').read_text())
    with pytest.raises(ConfigError):
        load_experiment_config(path)

    monkeypatch.setattr(config, 'data_root', tmp_path)
    assert load_experiment_config(path).images == tmp_path / 'train-images-idx3-ubyte'


def test_output_root_prefixes_relative_output_dirs(tiny_config, tmp_path, monkeypatch):
    monkeypatch.setattr(config, 'output_root', tmp_path / 'out')
    path = _edit(tiny_config('sequential'), f"output_dir = {tmp_path / 'runs' / 'sequential'}\n", '')
    assert load_experiment_config(path).output_dir == tmp_path / 'out' / 'runs' / 'sequential'


def test_config_hash():
    assert config_hash(b'abc') == config_hash(b'a', b'bc')
    assert config_hash(b'abc') != config_hash(b'abd')
    assert len(config_hash(b'')) == 12


def test_parse_pairs():
    assert parse_pairs('T1:T2, T1:S2') == [('T1', 'T2'), ('T1', 'S2')]
    with pytest.raises(ValueError):
        parse_pairs('T1-T2')


def test_environment_settings(monkeypatch):
    monkeypatch.setenv('SOMNUS_WORKERS', '3')
    monkeypatch.setenv('SOMNUS_LOG_LEVEL', 'debug')
    settings = Config()
    assert settings.workers == 3
    assert settings.log_level == 'DEBUG'

    monkeypatch.setenv('SOMNUS_WORKERS', 'lots')
    with pytest.raises(ValueError):
        Config()
