import json

import pytest
from mdl.cli import build_parser, main
from mdl.controller import overrides_from_args
from mdl.errors import ResourceLimitError

INSTANCE = ['--set', 'family=random-agnostic', '--set', 'class_size=4', '--set', 'n=3', '--set', 'support_size=3']


def test_solve_writes_one_record_per_seed(capsys):
    assert main(['solve', *INSTANCE, '--rounds', '50', '--seeds', '0,1']) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith('run_id,algorithm,n,size')
    assert len(lines) == 3, 'There should be a header and one line per seed'
    assert lines[1].startswith('random-agnostic-mdl-s0,mdl,3,4,0.1,100,')


def test_solve_json_output(capsys):
    assert main(['solve', *INSTANCE, '--rounds', '20', '--seed', '7', '--format', 'json']) == 0
    rows = json.loads(capsys.readouterr().out)
    assert [row['seed'] for row in rows] == [7]


def test_unknown_key_exits_with_usage_error(capsys):
    assert main(['solve', *INSTANCE, '--set', 'colour=red']) == 2
    assert capsys.readouterr().out == '', 'Nothing should be written on failure'


def test_flags_override_set():
    args = build_parser().parse_args(['solve', '--set', 'eps=0.3', '--eps', '0.2', '--seed', '4', '--timing'])
    entries = overrides_from_args(args)
    assert entries['eps'] == '0.2', 'Explicit flags should win over --set'
    assert entries['seeds'] == '4'
    assert entries['timing'] == 'true'


def test_generate_then_solve(tmp_path, capsys):
    path = tmp_path / 'instance.json'
    assert main(['generate', '--set', 'family=lower-bound', '--set', 'width=2', '--set', 'copies=2',
                 '--out', str(path)]) == 0
    assert path.exists()
    assert main(['solve', '--set', f'instance={path}', '--rounds', '30']) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[1].startswith('instance-mdl-s0,mdl,4,4,')


def test_solve_with_transcript(tmp_path, capsys):
    transcript = tmp_path / 'rounds.csv'
    assert main(['solve', *INSTANCE, '--rounds', '25', '--set', f'transcript={transcript}']) == 0
    assert len(transcript.read_text().splitlines()) == 26
    auditor = (tmp_path / 'rounds.auditor.csv').read_text().splitlines()
    assert auditor[0] == 'round,observed,weights,estimated_costs'
    assert len(auditor) == 26, 'The auditor transcript should have one row per round'
    summary = json.loads((tmp_path / 'rounds.json').read_text())
    assert summary['rounds'] == 25
    assert summary['total_samples'] == 50


def test_config_file(tmp_path, capsys):
    path = tmp_path / 'experiment.env'
    path.write_text('family=coin\ncopies=2\ngap=0.1\nalgorithm=batch-erm\nbudget=3\n')
    assert main(['solve', '--config', str(path), '--seeds', '1']) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[1].startswith('coin-batch-erm-s1,batch-erm,2,2,0.1,6,')


def test_missing_config_file(tmp_path):
    assert main(['solve', '--config', str(tmp_path / 'missing.env')]) == 2


def test_resource_limit_exit_code(mocker):
    mocker.patch('mdl.controller.run_experiment', side_effect=ResourceLimitError('too many entries'))
    assert main(['solve', *INSTANCE]) == 4


def test_unknown_command():
    with pytest.raises(SystemExit) as error:
        main(['train'])
    assert error.value.code == 2


def test_rmdl_reports_all_three_methods(capsys):
    assert main(['rmdl', '--rounds', '10', '--seeds', '0']) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].endswith(',avg_risk,avg_worst_gap')
    assert [line.split(',')[1] for line in lines[1:]] == ['rmdl', 'group-dro', 'pooled-erm']
