#!/usr/bin/env python3
"""
Tests for the experiment config parser and the batch runner
"""

import json
import sys
from pathlib import Path

import pytest
from botocore.exceptions import ClientError

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from pdmp_lab import cli, s3_uploader
from pdmp_lab.cli import ConfigError, RunFlags, parse_config, render_config, run
from pdmp_lab.config import DEFAULT_C, EXIT_OK, EXIT_USAGE, MANIFEST_NAME

DIRAC_CONFIG = """
# point-mass invariant law
model = "dirac-trap"
seed = 7

[simulation]
init_y = [1.0]
n_traj = 20
n_steps = 15
burn_in = 200
n_keep = 10

[rate]
n_max = 8
n_rep = 4000
"""

LINES_CONFIG = """
model = "contracting-lines"
seed = 11
workers = 2

[params]
kappa = 0.0

[simulation]
n_traj = 6
n_steps = 30

[diagnostics]
y_hat = [1.5]
mode = 1
modes = [1]
times = [0.1]
thetas = [1.0]
"""


def write_config(tmp_path: Path, text: str, name: str = 'experiment.toml') -> Path:
    path = tmp_path / name
    path.write_text(text, encoding='utf-8')
    return path


def test_parse_config_defaults():
    config = parse_config('model = "dirac-trap"\nseed = 3\n')
    assert config.model == 'dirac-trap' and config.seed == 3
    assert config.workers == 1 and config.format == 'csv'
    assert config.section('metric')['c'] == DEFAULT_C
    assert config.section('diagnostics')['checks'] == []


def test_parse_config_reports_bad_lambda_with_line():
    text = 'model = "dirac-trap"\nseed = 1\n[params]\nlambda = -1\n'
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.errors == [(4, 'lambda must be > 0')]
    assert 'line 4' in str(info.value)


def test_parse_config_greek_alias():
    config = parse_config('model = "contracting-lines"\nseed = 1\n[params]\nλ = 2.5\n')
    assert config.params == {'lambda': 2.5}


def test_parse_config_duplicate_key_names_both_lines():
    with pytest.raises(ConfigError) as info:
        parse_config('model = "dirac-trap"\nseed = 1\nseed = 2\n')
    assert 'lines 2 and 3' in str(info.value)


def test_parse_config_collects_every_error():
    text = '\n'.join([
        'model = "dirac-trap"',
        'colour = "red"',
        '[simulation]',
        'n_traj = 1.5',
        '[nowhere]',
        'x = 1',
    ])
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    lines = [line for line, _ in info.value.errors]
    messages = ' | '.join(msg for _, msg in info.value.errors)
    assert lines == sorted(lines)
    assert "missing required key 'seed'" in messages
    assert "unknown key 'colour'" in messages
    assert "expected int" in messages
    assert "unknown section" in messages


def test_parse_config_rejects_unknown_model_and_parameter():
    with pytest.raises(ConfigError, match='unknown model'):
        parse_config('model = "lorenz"\nseed = 1\n')
    with pytest.raises(ConfigError, match="unknown parameter 'beta'"):
        parse_config('model = "dirac-trap"\nseed = 1\n[params]\nbeta = 0.5\n')
    with pytest.raises(ConfigError, match='must be > 0'):
        parse_config('model = "dirac-trap"\nseed = 1\n[metric]\nc = 0\n')


def test_parse_config_rejects_thinning_that_keeps_nothing():
    text = 'model = "dirac-trap"\nseed = 1\n[simulation]\nn_keep = 2\nthin = 5\n'
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.errors == [(4, 'n_keep (2) must be >= thin (5)')]


def test_render_config_round_trips():
    config = parse_config(LINES_CONFIG)
    config.section('metric')['c'] = 0.1 + 0.2
    config.section('hypotheses')['radius'] = float('inf')
    again = parse_config(render_config(config))
    assert again.to_dict() == config.to_dict()


def test_run_invariant_dirac_trap(tmp_path):
    config = parse_config(DIRAC_CONFIG)
    code = run('invariant', config, RunFlags(out=str(tmp_path)))
    assert code == EXIT_OK
    continuity = json.loads((tmp_path / 'invariant' / 'continuity.json').read_text())
    assert continuity['evidence']['classification'] == 'atomic-singular'
    manifest = json.loads((tmp_path / 'invariant' / MANIFEST_NAME).read_text())
    assert manifest['exit_code'] == 0 and manifest['seed'] == 7
    assert 'measure.csv' in manifest['files']


def test_run_rate_dirac_trap(tmp_path):
    config = parse_config(DIRAC_CONFIG)
    assert run('rate', config, RunFlags(out=str(tmp_path))) == EXIT_OK
    fit = json.loads((tmp_path / 'rate' / 'rate_fit.json').read_text())
    assert 0.45 <= fit['beta'] <= 0.55


def test_run_correspond_dirac_trap(tmp_path):
    config = parse_config(DIRAC_CONFIG)
    assert run('correspond', config, RunFlags(out=str(tmp_path))) == EXIT_OK
    result = json.loads((tmp_path / 'correspond' / 'correspondence.json').read_text())
    assert result['verdict'] == 'pass'


def test_main_diagnose_rank(tmp_path):
    path = write_config(tmp_path, LINES_CONFIG)
    code = cli.main(['diagnose', '--config', str(path), '--check', 'rank', '--out', str(tmp_path / 'out')])
    assert code == EXIT_OK
    report = json.loads((tmp_path / 'out' / 'diagnose' / 'diagnostics.json').read_text())
    assert [c['name'] for c in report['checks']] == ['rank']
    assert report['checks'][0]['evidence']['rank'] == 1


def test_simulate_output_ignores_worker_count(tmp_path):
    path = write_config(tmp_path, LINES_CONFIG)
    for workers in ('1', '4'):
        code = cli.main(['simulate', '--config', str(path), '--workers', workers,
                         '--out', str(tmp_path / f"w{workers}")])
        assert code == EXIT_OK
    first = (tmp_path / 'w1' / 'simulate' / 'trajectories.csv').read_bytes()
    second = (tmp_path / 'w4' / 'simulate' / 'trajectories.csv').read_bytes()
    assert first == second


def test_seed_flag_overrides_config(tmp_path):
    path = write_config(tmp_path, LINES_CONFIG)
    cli.main(['simulate', '--config', str(path), '--seed', '99', '--out', str(tmp_path / 'out')])
    manifest = json.loads((tmp_path / 'out' / 'simulate' / MANIFEST_NAME).read_text())
    assert manifest['seed'] == 99


def test_fm_distance_without_measures_still_writes_manifest(tmp_path):
    config = parse_config(DIRAC_CONFIG)
    code = run('fm-distance', config, RunFlags(out=str(tmp_path)))
    assert code == EXIT_USAGE
    manifest = json.loads((tmp_path / 'fm-distance' / MANIFEST_NAME).read_text())
    assert manifest['exit_code'] == EXIT_USAGE
    assert 'two measure files' in manifest['error']


def test_fm_distance_between_saved_measures(tmp_path, capsys):
    config = parse_config(DIRAC_CONFIG)
    run('invariant', config, RunFlags(out=str(tmp_path)))
    measure = tmp_path / 'invariant' / 'measure.csv'
    code = run('fm-distance', config, RunFlags(out=str(tmp_path), measures=[str(measure), str(measure)]))
    assert code == EXIT_OK
    distance = json.loads((tmp_path / 'fm-distance' / 'distance.json').read_text())
    assert distance['d_FM'] == pytest.approx(0.0, abs=1e-12)


def test_main_rejects_invalid_config(tmp_path):
    path = write_config(tmp_path, 'model = "dirac-trap"\n[params]\nlambda = -1\n')
    code = cli.main(['invariant', '--config', str(path), '--out', str(tmp_path / 'out')])
    assert code == EXIT_USAGE
    manifest = json.loads((tmp_path / 'out' / 'invariant' / MANIFEST_NAME).read_text())
    assert 'lambda must be > 0' in manifest['error']


def test_main_models_and_usage(capsys):
    assert cli.main(['models']) == EXIT_OK
    assert 'contracting-lines' in capsys.readouterr().out
    assert cli.main(['no-such-subcommand']) == EXIT_USAGE


def test_upload_uses_env_credentials_and_logs_client_errors(tmp_path, monkeypatch, caplog):
    calls = {}

    class RefusingClient:
        def head_bucket(self, Bucket):
            raise ClientError({'Error': {'Code': '403', 'Message': 'Forbidden'}}, 'HeadBucket')

    def fake_client(service, **kwargs):
        calls.update(kwargs, service=service)
        return RefusingClient()

    monkeypatch.setattr(cli, 'S3_BUCKET_NAME', 'bucket')
    monkeypatch.setattr(cli, 'AWS_ACCESS_KEY_ID', 'key-id')
    monkeypatch.setattr(cli, 'AWS_SECRET_ACCESS_KEY', 'secret')
    monkeypatch.setattr(s3_uploader.boto3, 'client', fake_client)
    cli._upload(tmp_path, 'dirac-trap', 1, 'invariant')
    assert calls['service'] == 's3'
    assert calls['aws_access_key_id'] == 'key-id' and calls['aws_secret_access_key'] == 'secret'
    assert 'Upload failed' in caplog.text


def main():
    """Run the test module with pytest"""
    return pytest.main([__file__, '-q'])


if __name__ == '__main__':
    sys.exit(main())
