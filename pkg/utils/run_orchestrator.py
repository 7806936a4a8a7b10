"""
Run lifecycle behind the ``run`` command: validate the problem file, run one
algorithm, write trace and manifest, map the outcome to an exit code.

Exit codes: 0 when the final iterate reaches eps, 2 when the iteration budget
runs out first, 1 on any error.
"""

import logging
from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional

from models import __version__
from models.dsap import dsap_run
from models.exceptions import NonFiniteIterateError, ProjectionToolkitError
from models.oracle_baseline import classical_psm
from models.sa_psm import sapsm_run
from utils.export_utils import ExportUtils, RunManifest
from utils.problem_file import ProblemFileProcessor

logger = logging.getLogger(__name__)

ALGORITHMS = ['dsap', 'sapsm', 'psm-baseline']
EXIT_CONVERGED = 0
EXIT_ERROR = 1
EXIT_BUDGET = 2


@dataclass
class RunOutcome:
    exit_code: int
    message: str
    manifest: Optional[RunManifest] = None
    manifest_path: Optional[str] = None
    trace_path: Optional[str] = None
    errors: list = field(default_factory=list)


def _trace_summary(trace):
    return {
        'iterations': trace.iterations,
        'proximity': trace.final.proximity,
        'first_hit': trace.first_hit,
    }


class RunOrchestrator:
    """Runs one algorithm on one problem file and writes its artifacts"""

    def __init__(self, record_timing=False, log_every=1000):
        self.processor = ProblemFileProcessor()
        self.record_timing = record_timing
        self.log_every = log_every

    def run(self, problem_path, algorithm='dsap', out_dir='runs', overrides=()):
        started_at = datetime.now().isoformat(timespec='seconds')
        if algorithm not in ALGORITHMS:
            message = f"Unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}"
            logger.error(message)
            return RunOutcome(exit_code=EXIT_ERROR, message=message, errors=[message])

        result = self.processor.process_file(problem_path, algorithm, overrides)
        if 'error' in result:
            return RunOutcome(exit_code=EXIT_ERROR, message=f"Invalid problem file: {result['error']}",
                              errors=result['errors'])
        problem_file = result['problem_file']
        export_utils = ExportUtils(export_dir=out_dir)

        trace, error = None, None
        try:
            trace, summary, reached = self._execute(problem_file, algorithm)
            exit_code = EXIT_CONVERGED if reached else EXIT_BUDGET
        except NonFiniteIterateError as e:
            logger.error(f"Error running {algorithm}: {e}")
            trace, error, exit_code = e.trace, str(e), EXIT_ERROR
            summary = _trace_summary(trace)
        except ProjectionToolkitError as e:
            logger.error(f"Error running {algorithm}: {e}")
            error, exit_code, summary = str(e), EXIT_ERROR, {}

        trace_path = None
        if trace is not None and len(trace):
            trace_path = export_utils.export_trace(trace, self.record_timing)
        manifest = RunManifest(
            algorithm=algorithm,
            version=__version__,
            seed=problem_file.seed,
            config=problem_file.config,
            started_at=started_at,
            finished_at=datetime.now().isoformat(timespec='seconds'),
            exit_code=exit_code,
            stop_reason=trace.stop_reason if trace is not None else 'error',
            summary=summary,
            error=error,
        )
        manifest_path = export_utils.write_manifest(manifest)

        if exit_code == EXIT_CONVERGED:
            message = f"{algorithm} reached eps={problem_file.eps} ({summary['iterations']} iterations)"
        elif exit_code == EXIT_BUDGET:
            message = (f"{algorithm} spent its budget of {problem_file.max_iters} iterations "
                       f"(proximity {summary['proximity']:.3e})")
        else:
            message = f"{algorithm} failed: {error}"
        logger.info(message)
        return RunOutcome(exit_code=exit_code, message=message, manifest=manifest,
                          manifest_path=manifest_path, trace_path=trace_path,
                          errors=[error] if error else [])

    def _execute(self, problem_file, algorithm):
        """Run the algorithm; returns (trace, summary, reached_eps)"""
        pf = problem_file
        if algorithm == 'dsap':
            trace = dsap_run(pf.problem, pf.scheduler, pf.x0, pf.max_iters, pf.eps,
                             perturbation=pf.perturbation, log_every=self.log_every)
            return trace, _trace_summary(trace), trace.converged

        if pf.perturbation is not None:
            logger.warning(f"Perturbation settings are ignored by {algorithm}")
        if algorithm == 'sapsm':
            result = sapsm_run(pf.problem, pf.objective, pf.scheduler, pf.step_rule, pf.x0,
                               pf.max_iters, log_every=self.log_every)
        else:
            result = classical_psm(pf.problem, pf.objective, pf.step_rule, pf.x0, pf.max_iters,
                                   log_every=self.log_every)
        summary = result.summary()
        return result.trace, summary, result.trace.final.proximity <= pf.eps
