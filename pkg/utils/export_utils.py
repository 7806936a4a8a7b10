import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from models.exceptions import ManifestMismatchError

logger = logging.getLogger(__name__)

MANIFEST_FILENAME = 'manifest.json'
TRACE_FILENAME = 'trace.csv'
PROBLEM_KEYS = ['dimension', 'sets', 'bounded_index', 'bound', 'objective']
TERMINAL_METRICS = ['iterations', 'proximity', 'phi', 'best_phi']


@dataclass
class RunManifest:
    """Everything needed to reproduce a run and read its trace"""

    algorithm: str
    version: str
    seed: int
    config: dict
    started_at: str
    finished_at: str
    exit_code: int
    stop_reason: str
    summary: dict = field(default_factory=dict)
    trace_file: str = TRACE_FILENAME
    error: Optional[str] = None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


class ExportUtils:
    """Writes traces, manifests, comparison tables and sample problem files"""

    def __init__(self, export_dir='runs', sample_dir='sample_problems'):
        self.export_dir = export_dir
        self.sample_dir = sample_dir

        os.makedirs(self.export_dir, exist_ok=True)

    def export_trace(self, trace, record_timing=False, filename=TRACE_FILENAME):
        """Write a run trace to CSV"""
        try:
            df = trace.to_frame(record_timing=record_timing)
            filepath = os.path.join(self.export_dir, filename)
            df.to_csv(filepath, index=False)

            return filepath

        except Exception as e:
            logger.error(f"Error exporting trace: {e}")
            raise

    def write_manifest(self, manifest, filename=MANIFEST_FILENAME):
        filepath = os.path.join(self.export_dir, filename)
        with open(filepath, 'w', encoding='utf-8') as f:
            json.dump(manifest.to_dict(), f, indent=2, sort_keys=True)
            f.write('\n')
        return filepath

    @staticmethod
    def load_manifest(path):
        with open(path, encoding='utf-8') as f:
            return RunManifest.from_dict(json.load(f))

    @staticmethod
    def load_trace(path):
        return pd.read_csv(path)

    def compare_manifests(self, manifest_path_a, manifest_path_b):
        """
        Per-iteration and terminal comparison of two runs on the same problem.

        Returns (deltas, terminal). ``deltas`` joins the traces on k and holds
        proximity and φ for both runs with their differences a - b;
        ``terminal`` compares the manifests' terminal summaries.
        """
        manifest_a = self.load_manifest(manifest_path_a)
        manifest_b = self.load_manifest(manifest_path_b)
        self._check_same_problem(manifest_a, manifest_b)

        trace_a = self.load_trace(os.path.join(os.path.dirname(manifest_path_a), manifest_a.trace_file))
        trace_b = self.load_trace(os.path.join(os.path.dirname(manifest_path_b), manifest_b.trace_file))
        columns = ['k', 'proximity'] + (['phi'] if 'phi' in trace_a and 'phi' in trace_b else [])
        deltas = pd.merge(trace_a[columns], trace_b[columns], on='k', how='inner', suffixes=('_a', '_b'))
        for name in columns[1:]:
            deltas[f'{name}_delta'] = deltas[f'{name}_a'] - deltas[f'{name}_b']

        rows = []
        for metric in TERMINAL_METRICS:
            a = manifest_a.summary.get(metric)
            b = manifest_b.summary.get(metric)
            a = np.nan if a is None else float(a)
            b = np.nan if b is None else float(b)
            rows.append({'metric': metric, 'a': a, 'b': b, 'delta': a - b})
        terminal = pd.DataFrame(rows, columns=['metric', 'a', 'b', 'delta'])

        logger.info(f"Compared {manifest_a.algorithm} and {manifest_b.algorithm} "
                    f"over {len(deltas)} shared iterations")
        return deltas, terminal

    def export_comparison(self, deltas, terminal):
        """Write the delta and terminal tables to CSV"""
        try:
            deltas_path = os.path.join(self.export_dir, 'comparison_deltas.csv')
            terminal_path = os.path.join(self.export_dir, 'comparison_terminal.csv')
            deltas.to_csv(deltas_path, index=False)
            terminal.to_csv(terminal_path, index=False)

            return deltas_path, terminal_path

        except Exception as e:
            logger.error(f"Error exporting comparison: {e}")
            raise

    @staticmethod
    def _check_same_problem(manifest_a, manifest_b):
        dim_a = manifest_a.config.get('dimension')
        dim_b = manifest_b.config.get('dimension')
        if dim_a != dim_b:
            raise ManifestMismatchError(f"manifests have different dimensions ({dim_a} vs {dim_b})")
        differing = [key for key in PROBLEM_KEYS
                     if manifest_a.config.get(key) != manifest_b.config.get(key)]
        if differing:
            raise ManifestMismatchError(f"manifests reference different problems (fields {differing} differ)")

    def generate_sample_problem(self, kind):
        """Write a ready-to-run sample problem file"""
        try:
            if kind == 'feasibility':
                data = self._sample_feasibility()
            elif kind == 'minimization':
                data = self._sample_minimization()
            elif kind == 'perturbed':
                data = self._sample_perturbed()
            else:
                raise ValueError(f"Unknown sample problem: {kind}")

            os.makedirs(self.sample_dir, exist_ok=True)
            filepath = os.path.join(self.sample_dir, f"{kind}.json")
            with open(filepath, 'w', encoding='utf-8') as f:
                json.dump(data, f, indent=2)
                f.write('\n')

            return filepath

        except Exception as e:
            logger.error(f"Error generating sample problem: {e}")
            raise

    def _sample_feasibility(self):
        """Two halfspaces and the unit ball, cyclic projections"""
        return {
            'dimension': 2,
            'sets': [
                {'type': 'halfspace', 'a': [1.0, 0.0], 'b': 0.5},
                {'type': 'halfspace', 'a': [0.0, 1.0], 'b': 0.5},
                {'type': 'ball', 'center': [0.0, 0.0], 'radius': 1.0},
            ],
            'bounded_index': 3,
            'scheduler': {'type': 'cyclic'},
            'x0': [3.0, 3.0],
            'max_iters': 1000,
            'eps': 1e-6,
            'seed': 0,
        }

    def _sample_minimization(self):
        """Minimize x1 + x2 over the unit ball cut by x1 >= -0.5"""
        return {
            'dimension': 2,
            'sets': [
                {'type': 'ball', 'center': [0.0, 0.0], 'radius': 1.0},
                {'type': 'halfspace', 'a': [-1.0, 0.0], 'b': 0.5},
            ],
            'bounded_index': 1,
            'objective': {'type': 'linear', 'c': [1.0, 1.0]},
            'scheduler': {'type': 'random', 'anchor': 1, 'weights': 'equal'},
            'step_size': {'type': 'harmonic', 'a': 1.0},
            'x0': [1.0, 1.0],
            'max_iters': 20000,
            'eps': 1e-3,
            'seed': 7,
        }

    def _sample_perturbed(self):
        """Box, halfspace and ball in R^3 under perturbations of norm 1/(k+1)"""
        return {
            'dimension': 3,
            'sets': [
                {'type': 'box', 'lo': [-1.0, -1.0, -1.0], 'hi': [1.0, 1.0, 1.0]},
                {'type': 'halfspace', 'a': [1.0, 1.0, 1.0], 'b': 1.0},
                {'type': 'ball', 'center': [0.0, 0.0, 0.0], 'radius': 1.5},
            ],
            'bounded_index': 3,
            'scheduler': {'type': 'simultaneous', 'anchor': 3},
            'perturbation': {'gamma0': 1.0, 'decay': 1.0},
            'x0': [4.0, -3.0, 2.0],
            'max_iters': 20000,
            'eps': 1e-3,
            'seed': 0,
        }
