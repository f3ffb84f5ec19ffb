import json

import pytest

from modules.config import config_hash, load_config, parse_config
from modules.errors import ConfigError


def rates_document(**overrides):
    document = {
        'command': 'rates',
        'problem': {'name': 'diagonal', 'params': {'n': 16, 'decay_rate': 0.7}},
        'seed': 3,
        'rates': {
            'source': {'type': 'TypeI', 'omega': 'ones'},
            'rule': {'name': 'LinearRule'},
            'delta_grid': {'start': 0.1, 'stop': 0.001, 'num': 3},
        },
    }
    document['rates'].update(overrides)
    return document


def test_parse_rates_config():
    config = parse_config(rates_document(), 'rates')
    assert config.seed == 3
    assert config.rates.delta_grid == pytest.approx([0.1, 0.01, 0.001])
    assert config.rates.rule.constant == 1.0
    assert config.rates.nonlinearity.samples == 200
    assert config.rates.exact_alphas is None


def test_explicit_delta_grid():
    config = parse_config(rates_document(delta_grid=[0.1, 0.05]), 'rates')
    assert config.rates.delta_grid == [0.1, 0.05]


@pytest.mark.parametrize('document, path', [
    (dict(rates_document(), extra=1), "'extra'"),
    (rates_document(rule={'name': 'LinearRule', 'c': 2}), "'rates.rule.c'"),
    (rates_document(source={'type': 'TypeI', 'omega': 'ones', 'sign': 1}), "'rates.source.sign'"),
    (rates_document(nonlinearity={'radius': 0.1, 'seed': 1}), "'rates.nonlinearity.seed'"),
])
def test_unknown_key_names_its_path(document, path):
    with pytest.raises(ConfigError, match=path):
        parse_config(document, 'rates')


def test_slope_band_key():
    assert parse_config(rates_document(), 'rates').rates.slope_band is None
    assert parse_config(rates_document(slope_band='at_least'), 'rates').rates.slope_band == 'at_least'
    with pytest.raises(ConfigError, match='slope_band'):
        parse_config(rates_document(slope_band='upper'), 'rates')


@pytest.mark.parametrize('section, message', [
    ({}, 'solve.alpha'),
    ({'alpha': -1.0}, 'positive'),
    ({'alpha': 'big'}, 'finite number'),
    ({'alpha': 1.0, 'delta': -0.5}, 'nonnegative'),
])
def test_solve_section_validation(section, message):
    document = {'problem': {'name': 'identity', 'params': {'signal': [1.0]}}, 'solve': section}
    with pytest.raises(ConfigError, match=message):
        parse_config(document, 'solve')


def test_iterate_section():
    document = {
        'problem': {'name': 'identity', 'params': {'signal': [1.0]}},
        'iterate': {'alpha': {'alpha0': 1.0, 'q': 0.5}, 'tau': 3.0, 'init': [0.5]},
    }
    config = parse_config(document, 'iterate')
    assert config.iterate.alpha.q == 0.5
    assert config.iterate.init == [0.5]
    with pytest.raises(ConfigError, match='tau'):
        parse_config({**document, 'iterate': {'alpha': {'alpha0': 1.0}, 'tau': 1.0}}, 'iterate')


def test_command_mismatch():
    document = {'command': 'rates', 'problem': {'name': 'identity', 'params': {'signal': [1.0]}}}
    with pytest.raises(ConfigError, match="not 'verify'"):
        parse_config(document, 'verify')


def test_rates_needs_known_rule_and_source():
    with pytest.raises(ConfigError):
        parse_config(rates_document(rule={'name': 'SquareRootRule'}), 'rates')
    with pytest.raises(ConfigError):
        parse_config(rates_document(source={'type': 'TypeIII', 'omega': 'ones'}), 'rates')
    with pytest.raises(ConfigError):
        parse_config(rates_document(source={'type': 'TypeI'}), 'rates')


def test_hash_is_canonical():
    a = {'b': 1, 'a': [1.0, 2.0]}
    b = {'a': [1.0, 2.0], 'b': 1}
    assert config_hash(a) == config_hash(b)
    assert len(config_hash(a)) == 64
    assert config_hash(a) != config_hash({'a': [1.0, 2.0], 'b': 2})


def test_seed_override_changes_hash(tmp_path):
    path = tmp_path / 'rates.json'
    path.write_text(json.dumps(rates_document()))
    base = load_config(path, 'rates')
    overridden = load_config(path, 'rates', seed_override=11)
    assert overridden.seed == 11
    assert overridden.config_hash() != base.config_hash()
    assert load_config(path, 'rates').config_hash() == base.config_hash()


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match='not found'):
        load_config(tmp_path / 'missing.json', 'rates')
    broken = tmp_path / 'broken.json'
    broken.write_text('{"command": ')
    with pytest.raises(ConfigError, match='not valid JSON'):
        load_config(broken, 'rates')
