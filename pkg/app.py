import os
import logging

import click
from dotenv import load_dotenv

from models.exceptions import ProjectionToolkitError
from utils.export_utils import ExportUtils
from utils.problem_file import ProblemFileProcessor
from utils.run_orchestrator import EXIT_ERROR, RunOrchestrator

logger = logging.getLogger(__name__)


def create_cli():
    load_dotenv()

    # Configuration
    config = {
        'OUT_DIR': os.environ.get('DSAP_OUT_DIR', 'runs'),
        'LOG_LEVEL': os.environ.get('DSAP_LOG_LEVEL', 'INFO'),
        'RECORD_TIMING': os.environ.get('DSAP_RECORD_TIMING', '0') == '1',
        'LOG_EVERY': int(os.environ.get('DSAP_LOG_EVERY', '1000')),
    }
    logging.basicConfig(level=config['LOG_LEVEL'])

    @click.group()
    def cli():
        """String-averaging projection methods for convex feasibility and minimization"""

    @cli.command()
    @click.option('--problem', 'problem_path', help='Problem file (JSON).')
    @click.option('--algorithm', default='dsap', show_default=True,
                  help='One of dsap, sapsm, psm-baseline.')
    @click.option('--seed', help='Overrides the seed field.')
    @click.option('--max-iters', help='Overrides the max_iters field.')
    @click.option('--eps', help='Overrides the eps field.')
    @click.option('--out', 'out_dir', help='Output directory for trace.csv and manifest.json.')
    @click.option('--override', 'overrides', multiple=True, metavar='KEY=VALUE',
                  help='Dotted field override, repeatable.')
    @click.pass_context
    def run(ctx, problem_path, algorithm, seed, max_iters, eps, out_dir, overrides):
        """Run one algorithm on a problem file"""
        if not problem_path:
            click.echo("Error: --problem is required", err=True)
            ctx.exit(EXIT_ERROR)
        overrides = list(overrides)
        if seed is not None:
            overrides.append(f"seed={seed}")
        if max_iters is not None:
            overrides.append(f"max_iters={max_iters}")
        if eps is not None:
            overrides.append(f"eps={eps}")

        orchestrator = RunOrchestrator(record_timing=config['RECORD_TIMING'],
                                       log_every=config['LOG_EVERY'])
        outcome = orchestrator.run(problem_path, algorithm, out_dir or config['OUT_DIR'], overrides)
        for message in outcome.errors:
            click.echo(f"  {message}", err=True)
        click.echo(outcome.message)
        if outcome.manifest_path:
            click.echo(f"Manifest: {outcome.manifest_path}")
        ctx.exit(outcome.exit_code)

    @cli.command()
    @click.argument('manifest_a')
    @click.argument('manifest_b')
    @click.option('--out', 'out_dir', help='Directory for the comparison CSV files.')
    @click.pass_context
    def compare(ctx, manifest_a, manifest_b, out_dir):
        """Compare two runs of the same problem"""
        try:
            export_utils = ExportUtils(export_dir=out_dir or config['OUT_DIR'])
            deltas, terminal = export_utils.compare_manifests(manifest_a, manifest_b)
            paths = export_utils.export_comparison(deltas, terminal)
        except (ProjectionToolkitError, OSError, KeyError, TypeError) as e:
            logger.error(f"Error comparing manifests: {e}")
            click.echo(f"Error: {e}", err=True)
            ctx.exit(EXIT_ERROR)

        click.echo(terminal.to_string(index=False))
        if len(deltas):
            worst = deltas.filter(like='_delta').abs().max()
            for name, value in worst.items():
                click.echo(f"max |{name}| = {value:.6g}")
        click.echo(f"Tables: {', '.join(paths)}")

    @cli.command()
    @click.option('--problem', 'problem_path', required=True, help='Problem file (JSON).')
    @click.option('--algorithm', help='Also check the fields this algorithm requires.')
    @click.option('--override', 'overrides', multiple=True, metavar='KEY=VALUE')
    @click.pass_context
    def validate(ctx, problem_path, algorithm, overrides):
        """Validate a problem file and list every error"""
        result = ProblemFileProcessor().process_file(problem_path, algorithm, overrides)
        if 'error' in result:
            click.echo(f"{problem_path}: invalid", err=True)
            for message in result['errors']:
                click.echo(f"  {message}", err=True)
            ctx.exit(EXIT_ERROR)
        click.echo(result['message'])

    @cli.command()
    @click.argument('kind', type=click.Choice(['feasibility', 'minimization', 'perturbed']))
    @click.option('--dir', 'sample_dir', default='sample_problems', show_default=True)
    def sample(kind, sample_dir):
        """Write a sample problem file"""
        export_utils = ExportUtils(export_dir=config['OUT_DIR'], sample_dir=sample_dir)
        click.echo(export_utils.generate_sample_problem(kind))

    return cli


if __name__ == '__main__':
    cli = create_cli()
    cli()
