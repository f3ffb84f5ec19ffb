"""
Bregman-Tikhonov Toolkit - Main Application
Config-driven experiment runner: verify, solve, iterate, rates
"""

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional

from dotenv import load_dotenv

from modules import __version__
from modules.bregman_iteration import (
    AlphaSchedule,
    IterationConfig,
    StopReason,
    check_hypotheses,
    default_start,
    exact_residual_bound_holds,
    monotonicity_violations,
    run,
    stability_constant,
    stop_index_bound,
    summability_bound,
    summability_check,
)
from modules.config import COMMANDS, ExperimentConfig, load_config
from modules.errors import BregmanError, ConfigError
from modules.grid_function import GridFunction
from modules.operators import estimate_nonlinearity
from modules.penalty import make_penalty
from modules.problems import ProblemSpec, add_noise, build_problem, profile_values
from modules.rates import (
    ParameterRule,
    RateReport,
    SlopeBand,
    SourceType,
    construct_source,
    run_exact_data_sweep,
    run_rate_experiment,
)
from modules.reporting import provenance, write_csv, write_json
from modules.variational_solver import TikhonovProblem, solve
from modules.verification import run_verification

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DEFAULT_OUTPUT_DIR = 'results'

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

logger = logging.getLogger(__name__)


class ExperimentRunner:
    """Runs one configured command and writes its reports into out_dir"""

    def __init__(self, config: ExperimentConfig, out_dir: Path, jobs: int = 1, pdf: bool = False):
        self.config = config
        self.out_dir = Path(out_dir)
        self.jobs = max(1, int(jobs))
        self.pdf = pdf

    def run(self) -> int:
        handlers = {
            'verify': self.cmd_verify,
            'solve': self.cmd_solve,
            'iterate': self.cmd_iterate,
            'rates': self.cmd_rates,
        }
        logger.info(f"🔄 Running '{self.config.command}' on problem '{self.config.problem.name}' "
                    f"(seed {self.config.seed})")
        return handlers[self.config.command]()

    def _provenance(self) -> Dict:
        return provenance(self.config.config_hash(), self.config.seed)

    def _problem(self) -> ProblemSpec:
        problem = build_problem(self.config.problem.name, self.config.problem.params)
        if self.config.penalty is not None:
            penalty = make_penalty(self.config.penalty.kind, self.config.penalty.params)
            penalty.check_domain(problem.ubar_true)
            problem = dataclasses.replace(problem, penalty=penalty)
        return problem

    def _profile(self, problem: ProblemSpec, spec) -> Optional[GridFunction]:
        if spec is None:
            return None
        return GridFunction(profile_values(spec, problem.grid_n, problem.spacing), problem.spacing)

    def cmd_verify(self) -> int:
        problem = self._problem()
        settings = self.config.verify
        report = run_verification(problem, seed=self.config.seed, cases=settings.cases, trials=settings.trials)
        report['provenance'] = self._provenance()
        write_json(self.out_dir / 'verify_report.json', report)

        if report['passed']:
            logger.info(f"✅ All {len(report['checks'])} checks passed")
            return EXIT_OK
        failed = [c['name'] for c in report['checks'] if not c['passed']]
        logger.error(f"❌ Failed checks: {', '.join(failed)}")
        return EXIT_FAILURE

    def cmd_solve(self) -> int:
        problem = self._problem()
        settings = self.config.solve
        ydelta = add_noise(problem.y_exact, settings.delta, self.config.seed)
        prob = TikhonovProblem(problem.op, problem.penalty, ydelta, settings.alpha)
        result = solve(prob, init=self._profile(problem, settings.init), tol=settings.tol,
                       max_iter=settings.max_iter)

        u = result.minimizer
        write_csv(self.out_dir / 'solution.csv', ('index', 'x', 'u'),
                  ((i, float(x), float(v)) for i, (x, v) in enumerate(zip(problem.grid(), u.values))))
        write_json(self.out_dir / 'solution.json', {
            **result.to_dict(),
            'alpha': settings.alpha,
            'delta': settings.delta,
            'problem': problem.to_dict(),
            'total_variation_data': ydelta.total_variation(),
            'total_variation_solution': u.total_variation(),
            'provenance': self._provenance(),
        })

        if not result.converged:
            logger.error(f"❌ Solve did not converge (kkt={result.kkt_residual:.3e}); partial solution written")
            return EXIT_FAILURE
        logger.info(f"✅ Solve converged in {result.iterations} iterations, objective {result.objective_value:.6e}")
        return EXIT_OK

    def cmd_iterate(self) -> int:
        problem = self._problem()
        settings = self.config.iterate
        schedule = AlphaSchedule(settings.alpha.alpha0, settings.alpha.q, settings.alpha.lower, settings.alpha.upper)
        config = IterationConfig(
            alpha_schedule=schedule,
            tau=settings.tau,
            delta=settings.delta,
            max_outer=settings.max_outer,
            inner_tol=settings.inner_tol,
            inner_max_iter=settings.inner_max_iter,
            eta=settings.eta,
            gamma=settings.gamma,
            rho=settings.rho,
        )
        ydelta = add_noise(problem.y_exact, settings.delta, self.config.seed)
        u_0 = self._profile(problem, settings.init)
        if u_0 is None:
            u_0 = default_start(problem.op, problem.penalty)
        xi_0 = problem.penalty.subgradient(u_0)
        flags = check_hypotheses(config, problem.penalty, problem.ubar_true, u_0, xi_0)

        trace = run(problem.op, problem.penalty, ydelta, config, u_0=u_0, xi_0=xi_0)
        bregman = trace.bregman_to_truth(problem.penalty, problem.ubar_true)
        write_csv(self.out_dir / 'iterations.csv', ('k', 'alpha_k', 'residual_k', 'bregman_to_truth'),
                  ((k, r.alpha, r.residual, bregman[k]) for k, r in enumerate(trace.iterates)))

        summary = trace.to_dict(bregman=bregman)
        summary.update({
            'config': config.to_dict(),
            'problem': problem.to_dict(),
            'hypothesis_flags': flags,
            'monotonicity_violations': monotonicity_violations(trace),
            'summability_sum': summability_check(trace),
            'provenance': self._provenance(),
        })
        if settings.delta > 0:
            summary['exact_residual_bound_holds'] = exact_residual_bound_holds(trace, problem.op, problem.y_exact)
        if settings.eta is not None and settings.gamma is not None:
            c = stability_constant(settings.tau, settings.eta, settings.gamma)
            summary['stability_constant'] = c
            summary['summability_bound'] = summability_bound(settings.gamma, c)
            summary['stop_index_bound'] = stop_index_bound(settings.gamma, settings.tau, settings.delta,
                                                           schedule.upper, c)
        if not problem.op.is_linear:
            estimate = estimate_nonlinearity(problem.op, problem.penalty, problem.ubar_true,
                                             problem.penalty.subgradient(problem.ubar_true),
                                             settings.nonlinearity.radius, settings.nonlinearity.samples,
                                             seed=self.config.seed)
            summary['nonlinearity_estimate'] = estimate.to_dict()
        write_json(self.out_dir / 'trace.json', summary)

        if trace.stop_reason is StopReason.INNER_FAILURE:
            logger.error(f"❌ Inner solve failed after {len(trace) - 1} outer steps; partial trace written")
            return EXIT_FAILURE
        logger.info(f"✅ Iteration finished: {trace.stop_reason.value} at k={trace.stop_index}")
        return EXIT_OK

    def cmd_rates(self) -> int:
        problem = self._problem()
        settings = self.config.rates
        source = construct_source(
            problem.op,
            problem.penalty,
            SourceType(settings.source.type),
            omega=self._profile(problem, settings.source.omega),
            ubar=self._profile(problem, settings.source.ubar),
        )
        slope_band = SlopeBand(settings.slope_band) if settings.slope_band is not None else None
        nonlinearity = None
        if source.nonlinear:
            nonlinearity = estimate_nonlinearity(problem.op, problem.penalty, source.ubar, source.xi,
                                                 settings.nonlinearity.radius, settings.nonlinearity.samples,
                                                 seed=self.config.seed)

        report = run_rate_experiment(
            problem.op,
            problem.penalty,
            source,
            ParameterRule.parse(settings.rule.name),
            settings.delta_grid,
            noise_seed=self.config.seed,
            constant=settings.rule.constant,
            nonlinearity=nonlinearity,
            tol_factor=settings.tol_factor,
            max_iter=settings.max_iter,
            jobs=self.jobs,
            slope_tolerance=settings.slope_tolerance,
            slope_band=slope_band,
        )
        payload = {'report': report.to_dict(), 'problem': problem.to_dict(), 'provenance': self._provenance()}
        reports = [report]
        if settings.exact_alphas is not None:
            sweep = run_exact_data_sweep(problem.op, problem.penalty, source, settings.exact_alphas,
                                         nonlinearity=nonlinearity, tol_factor=settings.tol_factor,
                                         max_iter=settings.max_iter, jobs=self.jobs,
                                         slope_tolerance=settings.slope_tolerance, slope_band=slope_band)
            payload['exact_data'] = sweep.to_dict()
            reports.append(sweep)

        self._write_rate_rows(report)
        write_json(self.out_dir / 'rates.json', payload)
        if self.pdf:
            from modules.pdf_report import RateReportPDF
            title = f"Rate experiment: {problem.name}, {source.type.value}, {report.rule}"
            RateReportPDF().create_report(report, self.out_dir / 'rates.pdf', title, self._provenance())

        failures = [r for r in reports if not r.passed()]
        if not failures:
            logger.info(f"✅ Rate experiment passed: slope {report.fitted_slope:.4f} "
                        f"(expected {report.expected_slope:.4f}, {report.slope_band.value})")
            return EXIT_OK
        for failed in failures:
            logger.error(f"❌ {failed.rule}: slope {failed.fitted_slope:.4f} (expected {failed.expected_slope:.4f} "
                         f"± {failed.slope_tolerance:g}, {failed.slope_band.value}), "
                         f"violating rows {failed.violations()}")
        return EXIT_FAILURE

    def _write_rate_rows(self, report: RateReport) -> None:
        header = ('delta', 'alpha', 'bregman_error', 'bound', 'residual', 'residual_bound', 's', 's_bound',
                  'converged', 'iterations', 'flag')
        rows = []
        for i, row in enumerate(report.rows()):
            rows.append((row['delta'], row['alpha'], row['bregman_error'], row['bound'], row['residual'],
                         row['residual_bound'], report.s_values[i], report.s_bounds[i], report.converged[i],
                         report.iterations[i], row['flag']))
        write_csv(self.out_dir / 'rates.csv', header, rows)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='bregman', description='Bregman-Tikhonov regularization experiments')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    subparsers = parser.add_subparsers(dest='command', required=True)
    for command in COMMANDS:
        sub = subparsers.add_parser(command)
        sub.add_argument('--config', required=True, help='JSON experiment configuration')
        sub.add_argument('--out', default=None, help='output directory (default: $BREGMAN_OUTPUT_DIR or results)')
        sub.add_argument('--seed', type=int, default=None, help='override the config seed')
        sub.add_argument('--jobs', type=int, default=1, help='parallel solves across the noise grid')
        sub.add_argument('--verbose', action='store_true', help='debug logging')
        if command == 'rates':
            sub.add_argument('--pdf', action='store_true', help='also render rates.pdf')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    out_dir = Path(args.out or os.getenv('BREGMAN_OUTPUT_DIR', DEFAULT_OUTPUT_DIR))

    try:
        config = load_config(args.config, args.command, seed_override=args.seed)
        if args.jobs < 1:
            raise ConfigError(f"--jobs must be >= 1, got {args.jobs}")
        return ExperimentRunner(config, out_dir, jobs=args.jobs, pdf=getattr(args, 'pdf', False)).run()
    except (ConfigError, ValueError) as e:
        logger.error(f"❌ Configuration error: {e}")
        return EXIT_CONFIG
    except BregmanError as e:
        logger.error(f"❌ {args.command} failed: {e}")
        logger.debug("traceback", exc_info=True)
        return EXIT_FAILURE


if __name__ == '__main__':
    sys.exit(main())
