import numpy as np
import pytest

from src.ep_model import init_params
from src.errors import SnapshotError
from src.numerics import make_rng
from src.snapshot import (
    decode_params, encode_params, list_snapshots, load_params, missing_phases, phase_sort_key, save_params, snapshot_name,
)


@pytest.fixture
def params():
    p = init_params(5, 4, 3, make_rng(0))
    p.b_h[:] = 0.25
    return p


def test_snapshot_is_exact(tmp_path, params):
    path = save_params(params, tmp_path / 'nested' / 'net.net')
    loaded = load_params(path)
    for name in ('w_ih', 'w_ho', 'b_h', 'b_o'):
        assert np.array_equal(getattr(loaded, name), getattr(params, name))
    assert path.read_bytes().startswith(b'SOMNUS-NET v1 4 5 3\n')


def test_snapshot_errors(tmp_path, params):
    with pytest.raises(SnapshotError):
        load_params(tmp_path / 'missing.net')

    bad = tmp_path / 'bad.net'
    bad.write_bytes(b'OTHER v1 4 5 3\n')
    with pytest.raises(SnapshotError):
        load_params(bad)

    path = save_params(params, tmp_path / 'short.net')
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(SnapshotError):
        load_params(path)


@pytest.mark.parametrize('header', [b'SOMNUS-NET v1 four 5 3\n', b'SOMNUS-NET v1 0 5 3\n'])
def test_malformed_header_sizes(header):
    with pytest.raises(SnapshotError):
        decode_params(header + bytes(8))


def test_ragged_body(params):
    with pytest.raises(SnapshotError, match='float64'):
        decode_params(encode_params(params)[:-3])


def test_list_snapshots_groups_by_order(tmp_path, params):
    for order, phase in ((0, 'T1'), (0, 'S1'), (1, 'T1'), (0, 'P')):
        save_params(params, tmp_path / snapshot_name(order, phase))
    (tmp_path / 'notes.net').write_bytes(b'')

    found = list_snapshots(tmp_path)
    assert sorted(found) == [0, 1]
    assert sorted(found[0]) == ['P', 'S1', 'T1']
    assert missing_phases(found[1], ['T1', 'S1']) == ['S1']


def test_phase_sort_key():
    assert sorted(['S2', 'T1', 'P', 'T2', 'S1'], key=phase_sort_key) == ['T1', 'S1', 'T2', 'S2', 'P']
    assert sorted(['T10', 'T2'], key=phase_sort_key) == ['T2', 'T10']
