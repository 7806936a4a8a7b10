import json
import os

import pandas as pd
import pytest

from models.convex_sets import Halfspace, Problem
from models.dsap import CyclicSingleton, dsap_run
from models.exceptions import ManifestMismatchError
from utils.export_utils import ExportUtils, RunManifest
from utils.problem_file import ProblemFileProcessor


@pytest.fixture
def export_utils(tmp_path):
    """Exporter writing under a temporary directory."""
    return ExportUtils(export_dir=str(tmp_path / 'runs'), sample_dir=str(tmp_path / 'samples'))


@pytest.fixture
def trace():
    """A short cyclic run on two halfspaces."""
    problem = Problem(sets=(Halfspace(a=[1.0, 0.0], b=0.0), Halfspace(a=[1.0, 1.0], b=0.5)))
    return dsap_run(problem, CyclicSingleton(2), [2.0, 2.0], 5, eps=0.0)


def _manifest(config, summary=None):
    return RunManifest(algorithm='dsap', version='1.0.0', seed=0, config=config,
                       started_at='2026-01-01T00:00:00', finished_at='2026-01-01T00:00:01',
                       exit_code=0, stop_reason='converged', summary=summary or {})


def _write_run(tmp_path, name, trace, config, summary):
    exporter = ExportUtils(export_dir=str(tmp_path / name))
    exporter.export_trace(trace)
    return exporter.write_manifest(_manifest(config, summary))


def test_export_trace(export_utils, trace):
    """Test trace CSV columns and rows."""
    path = export_utils.export_trace(trace)
    df = pd.read_csv(path)
    assert list(df.columns[:4]) == ['k', 'proximity', 'd_1', 'd_2']
    assert len(df) == len(trace)
    assert (df['elapsed_ns'] == 0).all()


def test_manifest_round_trip(export_utils):
    """Test writing and reading a manifest."""
    manifest = _manifest({'dimension': 2}, {'iterations': 3})
    path = export_utils.write_manifest(manifest)
    assert os.path.basename(path) == 'manifest.json'
    assert ExportUtils.load_manifest(path) == manifest
    with open(path, encoding='utf-8') as f:
        assert json.load(f)['trace_file'] == 'trace.csv'


def test_compare_with_itself(tmp_path, trace):
    """Test that a run compared with itself has zero deltas."""
    config = {'dimension': 2, 'sets': []}
    summary = {'iterations': 5, 'proximity': 0.1}
    path = _write_run(tmp_path, 'a', trace, config, summary)
    exporter = ExportUtils(export_dir=str(tmp_path / 'cmp'))
    deltas, terminal = exporter.compare_manifests(path, path)
    assert len(deltas) == len(trace)
    assert (deltas['proximity_delta'] == 0.0).all()
    assert 'phi_delta' not in deltas
    assert list(terminal['metric']) == ['iterations', 'proximity', 'phi', 'best_phi']
    assert terminal.loc[terminal['metric'] == 'iterations', 'delta'].item() == 0.0
    assert terminal.loc[terminal['metric'] == 'phi', 'a'].isna().all()

    deltas_path, terminal_path = exporter.export_comparison(deltas, terminal)
    assert pd.read_csv(terminal_path).shape == (4, 4)
    assert os.path.exists(deltas_path)


def test_compare_rejects_other_problems(tmp_path, trace):
    """Test dimension and problem mismatches."""
    path_a = _write_run(tmp_path, 'a', trace, {'dimension': 2, 'sets': []}, {})
    path_b = _write_run(tmp_path, 'b', trace, {'dimension': 3, 'sets': []}, {})
    path_c = _write_run(tmp_path, 'c', trace, {'dimension': 2, 'sets': [{'type': 'ball'}]}, {})
    exporter = ExportUtils(export_dir=str(tmp_path / 'cmp'))
    with pytest.raises(ManifestMismatchError, match=r'different dimensions \(2 vs 3\)'):
        exporter.compare_manifests(path_a, path_b)
    with pytest.raises(ManifestMismatchError, match='different problems'):
        exporter.compare_manifests(path_a, path_c)


def test_generate_sample_problems(export_utils):
    """Test that every sample problem validates."""
    processor = ProblemFileProcessor()
    for kind, algorithm in [('feasibility', 'dsap'), ('minimization', 'sapsm'), ('perturbed', 'dsap')]:
        path = export_utils.generate_sample_problem(kind)
        assert path.endswith(f'{kind}.json')
        assert processor.process_file(path, algorithm)['success']
    with pytest.raises(ValueError, match='Unknown sample problem'):
        export_utils.generate_sample_problem('lasso')
