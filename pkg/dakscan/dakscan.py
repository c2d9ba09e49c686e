#!/usr/bin/env python3
"""
DAKScan Main Orchestrator - high-dimensional change-point detection from the command line
Offline scan and calibrated test, reusable calibration, Monte-Carlo quantiles, sequential
monitoring and simulation studies. Status goes to stderr; reports go to stdout or files.
"""

import argparse
import json
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from dakscan import __version__
from dakscan.errors import ConfigurationError, DakScanError, DegenerateCalibrationError
from dakscan.modules.calibration_module.dak_calibration import (
    DEFAULT_ALPHA, DEFAULT_MC_DRAWS, DEFAULT_N_PERM, SIGMA_METHODS, CalibrationModel,
    DakCalibrator, HacConfig, mc_threshold, run_test,
)
from dakscan.modules.io_module.dak_matrix_io import (
    iter_csv_rows, open_stream, read_matrix, write_frame, write_json, write_matrix,
)
from dakscan.modules.online_module.dak_monitor import (
    DEFAULT_HORIZON, DEFAULT_WINDOW, MODES, DakMonitor, calibrate_monitor, config_from_model,
)
from dakscan.modules.scan_module.dak_scan import DakScanner
from dakscan.modules.simulation_module.dak_experiments import (
    DakSimulator, metadata, replication_sample, replication_stream,
)
from dakscan.modules.simulation_module.dak_simgen import SCENARIOS, ScenarioSpec
from dakscan.modules.theory_module.dak_theory import covariance_template
from dakscan.runtime import LOG_FORMAT, calculate_optimal_cpus, resolve_seed, spawn_seeds


class Color:
    """ANSI color codes for colored output"""
    RESET = '\033[0m'
    BOLD = '\033[1m'
    DIM = '\033[2m'

    RED = '\033[31m'
    GREEN = '\033[32m'
    YELLOW = '\033[33m'
    CYAN = '\033[36m'
    WHITE = '\033[37m'

    BRIGHT_RED = '\033[91m'
    BRIGHT_GREEN = '\033[92m'
    BRIGHT_YELLOW = '\033[93m'
    BRIGHT_BLUE = '\033[94m'
    BRIGHT_MAGENTA = '\033[95m'
    BRIGHT_CYAN = '\033[96m'


COMMANDS = ('scan', 'test', 'calibrate', 'quantile', 'monitor', 'simulate')


@dataclass(frozen=True)
class RunConfig:
    """Options shared by every sub-command"""
    command: str
    input_path: Optional[str] = None
    alpha: float = DEFAULT_ALPHA
    seed: Optional[int] = None
    bandwidth: Optional[int] = None
    window: int = DEFAULT_WINDOW
    output_format: str = 'json'
    output: Optional[str] = None
    cpus: Optional[int] = None
    quiet: bool = False

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> 'RunConfig':
        if args.command not in COMMANDS:
            raise ConfigurationError(f"Unknown command {args.command!r}")
        return cls(
            command=args.command,
            input_path=getattr(args, 'input', None),
            alpha=getattr(args, 'alpha', DEFAULT_ALPHA),
            seed=getattr(args, 'seed', None),
            bandwidth=getattr(args, 'bandwidth', None),
            window=getattr(args, 'window', DEFAULT_WINDOW),
            output_format=getattr(args, 'format', 'json'),
            output=getattr(args, 'output', None),
            cpus=args.cpus,
            quiet=args.quiet,
        )

    def with_seed(self) -> 'RunConfig':
        """Fix the seed, drawing one from OS entropy when none was given"""
        return replace(self, seed=resolve_seed(self.seed))

    @property
    def hac_config(self) -> HacConfig:
        return HacConfig(explicit_bandwidth=self.bandwidth)


class DakScanOrchestrator:
    """DAKScan orchestrator: one method per sub-command, colored status on stderr"""

    def __init__(self, quiet: bool = False):
        self.quiet = quiet
        self.setup_colors()

    def setup_colors(self):
        """Setup color aliases for different message types"""
        self.color_info = Color.CYAN
        self.color_success = Color.BRIGHT_GREEN
        self.color_warning = Color.BRIGHT_YELLOW
        self.color_error = Color.BRIGHT_RED

    def _emit(self, text: str, force: bool = False):
        if force or not self.quiet:
            print(text, file=sys.stderr)

    def print_header(self, title: str, subtitle: str = ""):
        """Print command header"""
        self._emit(f"{Color.BOLD}{Color.BRIGHT_BLUE}{'=' * 72}{Color.RESET}")
        self._emit(f"{Color.BOLD}{Color.BRIGHT_CYAN}  {title}{Color.RESET}")
        if subtitle:
            self._emit(f"{Color.DIM}{Color.WHITE}  {subtitle}{Color.RESET}")
        self._emit(f"{Color.BOLD}{Color.BRIGHT_BLUE}{'=' * 72}{Color.RESET}")

    def print_info(self, message: str):
        self._emit(f"{self.color_info}[INFO]{Color.RESET} {message}")

    def print_success(self, message: str):
        self._emit(f"{self.color_success}✓{Color.RESET} {message}")

    def print_warning(self, message: str):
        self._emit(f"{self.color_warning}⚠️{Color.RESET} {message}")

    def print_error(self, message: str):
        self._emit(f"{self.color_error}✗{Color.RESET} {message}", force=True)

    # ---------------------------------------------------------------- commands

    def cmd_scan(self, config: RunConfig, args: argparse.Namespace) -> int:
        self.print_header("DAK SCAN", "offline scan and change-point localization")
        sample = read_matrix(config.input_path)
        self.print_info(f"Loaded N={sample.n_obs}, d={sample.n_dims}")
        report = DakScanner(config.cpus).analyze(sample)
        frame = pd.DataFrame({'t': report['split_set'], 'W': report['w_values']})
        if args.plot_csv:
            write_frame(frame, args.plot_csv)
            self.print_success(f"Scan series saved: {args.plot_csv}")
        if config.output_format == 'csv':
            write_frame(frame, config.output)
        else:
            write_json({'metadata': metadata(), **report}, config.output)
        self.print_success(f"tau_hat = {report['tau_hat']} (max W = {report['max_value']:.6g})")
        return 0

    def _calibrator(self, config: RunConfig, draws: int) -> DakCalibrator:
        return DakCalibrator(alpha=config.alpha, n_draws=draws, hac_config=config.hac_config,
                             seed=config.seed, cpus=config.cpus)

    def cmd_test(self, config: RunConfig, args: argparse.Namespace) -> int:
        self.print_header("DAK TEST", "studentized scan against the Gaussian max quantile")
        config = config.with_seed()
        sample = read_matrix(config.input_path)
        calibrator = self._calibrator(config, args.draws)
        profile = DakScanner(config.cpus).scan(sample)
        model = calibrator.calibrate(profile, sigma_method=args.sigma_method, calib_sample=sample,
                                     n_perm=args.n_perm)
        if model.degenerate:
            raise DegenerateCalibrationError(
                "Long-run variance estimate is 0; the scan cannot be studentized")
        outcome = run_test(profile, model)
        write_json({
            'metadata': metadata(),
            'N': profile.n_obs, 'd': profile.n_dims,
            'S_d': outcome.s_d, 'c_alpha': outcome.threshold, 'alpha': config.alpha,
            'reject': outcome.reject,
            'tau_hat': outcome.tau_hat.tau_hat, 'max_value': outcome.tau_hat.max_value,
            'sigma2_long': model.sigma2_long, 'sigma_long': model.sigma_long,
            'sigma_method': model.sigma_method, 'bandwidth': model.bandwidth,
            'mc_draws': model.mc_draws, 'seed': config.seed,
            'k_min_eigenvalue': model.k_min_eigenvalue,
        }, config.output)
        if outcome.reject:
            self.print_warning(f"Reject H0: S_d={outcome.s_d:.4f} > c_alpha={outcome.threshold:.4f}")
            return 1 if args.exit_on_reject else 0
        self.print_success(f"Retain H0: S_d={outcome.s_d:.4f} <= c_alpha={outcome.threshold:.4f}")
        return 0

    def cmd_calibrate(self, config: RunConfig, args: argparse.Namespace) -> int:
        self.print_header("DAK CALIBRATE", "long-run scale and threshold for reuse")
        config = config.with_seed()
        block = read_matrix(config.input_path)
        profile = DakScanner(config.cpus).scan(block)
        model = self._calibrator(config, args.draws).calibrate(
            profile, sigma_method=args.sigma_method, calib_sample=block, n_perm=args.n_perm)
        if model.degenerate:
            raise DegenerateCalibrationError("Calibration block gives sigma_long = 0")
        write_json(model.to_dict(), config.output)
        self.print_success(f"sigma_long={model.sigma_long:.6g}, c_alpha={model.c_alpha:.6g} "
                           f"(N={model.n_obs}, d={model.n_dims}, seed={model.seed})")
        return 0

    def cmd_quantile(self, config: RunConfig, args: argparse.Namespace) -> int:
        self.print_header("DAK QUANTILE", "Monte-Carlo quantile of max N(0, K)")
        config = config.with_seed()
        template = covariance_template(args.n_obs)
        c_alpha = mc_threshold(template, config.alpha, args.draws, config.seed,
                               calculate_optimal_cpus(config.cpus))
        write_json({'metadata': metadata(), 'N': args.n_obs, 'alpha': config.alpha,
                    'c_alpha': c_alpha, 'mc_draws': args.draws, 'seed': config.seed,
                    'k_min_eigenvalue': template.min_eigenvalue,
                    'factor_method': template.factor_method}, config.output)
        self.print_success(f"c_alpha = {c_alpha:.6g}")
        return 0

    def _monitor_config(self, config: RunConfig, args: argparse.Namespace):
        if args.calibration and args.calib_input:
            raise ConfigurationError("Use either --calibration or --calib-input, not both")
        if args.calibration:
            model = CalibrationModel.load_json(args.calibration)
            self.print_info(f"Loaded calibration {args.calibration} (N0={model.n_obs}, d={model.n_dims})")
            return config_from_model(model, args.mode), config
        if args.calib_input:
            config = config.with_seed()
            block = read_matrix(args.calib_input)
            monitor_config = calibrate_monitor(
                block, config.alpha, config.hac_config, seed=config.seed, n_draws=args.draws,
                sigma_method=args.sigma_method, n_perm=args.n_perm, mode=args.mode,
                cpus=calculate_optimal_cpus(config.cpus))
            return monitor_config, config
        raise ConfigurationError("monitor needs --calibration MODEL.json or --calib-input BLOCK")

    def cmd_monitor(self, config: RunConfig, args: argparse.Namespace) -> int:
        self.print_header("DAK MONITOR", f"sliding window, {args.mode} mode")
        # Missing stream files fail before the Monte-Carlo calibration runs
        handle = open_stream(config.input_path)

        def emit(event):
            sys.stdout.write(json.dumps({'event': 'alarm', **event.as_dict()}) + "\n")
            sys.stdout.flush()

        try:
            monitor_config, config = self._monitor_config(config, args)
            monitor = DakMonitor(monitor_config, keep_history=bool(args.series_csv))
            for row in iter_csv_rows(handle):
                if monitor.state.halted or (args.horizon is not None and monitor.state.time >= args.horizon):
                    break
                event = monitor.step(row)
                if event is not None:
                    emit(event)
        finally:
            if handle is not sys.stdin:
                handle.close()

        report = monitor.report()
        if args.series_csv:
            write_frame(pd.DataFrame([vars(r) for r in monitor.state.series],
                                     columns=['s', 'statistic', 'raw_max', 'argmax']), args.series_csv)
            self.print_success(f"Statistic series saved: {args.series_csv}")
        sys.stdout.write(json.dumps({'event': 'report', 'metadata': metadata(), **report}) + "\n")
        if report['n_alarms']:
            self.print_warning(f"{report['n_alarms']} alarm(s); first at s={report['nu_hat']}, "
                               f"tau_hat={report['tau_hat']}")
        else:
            self.print_success(f"No alarm in {report['observations']} observations")
        return 0

    def cmd_simulate(self, config: RunConfig, args: argparse.Namespace) -> int:
        self.print_header("DAK SIMULATE", f"{args.scenario}, d in {args.dims}")
        config = config.with_seed()
        simulator = DakSimulator(seed=config.seed, cpus=config.cpus,
                                 output_dir=Path(args.output_dir) if args.output_dir else None,
                                 progress=not config.quiet)
        params = _parse_params(args.param)
        grid_seed = spawn_seeds(config.seed, len(args.dims))[0]

        if args.online:
            reports = simulator.online(args.scenario, args.dims, args.reps, window=config.window,
                                       alpha=config.alpha, nu=args.nu, horizon=args.horizon,
                                       n_draws=args.draws, params=params)
            if args.emit_data:
                spec = ScenarioSpec(args.scenario, args.dims[0], config.window, None, params)
                stream = replication_stream(spec, grid_seed, args.reps, args.nu, args.horizon)
                write_matrix(stream, args.emit_data)
        else:
            reports = simulator.localization(args.scenario, args.dims, args.reps, n_obs=args.n_obs,
                                             tau=args.tau, params=params)
            if args.emit_data:
                spec = ScenarioSpec(args.scenario, args.dims[0], args.n_obs, args.tau, params)
                write_matrix(replication_sample(spec, grid_seed, args.reps), args.emit_data)
        if args.emit_data:
            self.print_success(f"First replication data saved: {args.emit_data}")

        write_json({'metadata': metadata(), 'seed': config.seed,
                    'reports': [r.as_dict() for r in reports]}, config.output)
        return 0

    def run(self, config: RunConfig, args: argparse.Namespace) -> int:
        handler = getattr(self, f"cmd_{config.command}")
        return handler(config, args)


def _parse_params(pairs: Optional[List[str]]) -> Dict[str, Any]:
    params: Dict[str, Any] = {}
    for pair in pairs or []:
        key, sep, value = pair.partition('=')
        if not sep:
            raise ConfigurationError(f"Scenario parameter must be KEY=VALUE, got {pair!r}")
        try:
            params[key.strip()] = float(value)
        except ValueError as e:
            raise ConfigurationError(f"Scenario parameter {key} is not numeric: {value!r}") from e
    return params


EPILOG = """
Examples:
  dakscan scan data.csv --plot-csv scan_series.csv
  dakscan test data.bin --alpha 0.05 --seed 7 --exit-on-reject
  dakscan calibrate baseline.csv --alpha 0.002 --seed 3 -o model.json
  dakscan quantile -N 20 --alpha 0.05 --draws 200000 --seed 1
  dakscan monitor stream.csv --calibration model.json --mode continuous --series-csv series.csv
  dakscan simulate --scenario cauchy_location --dims 200 1000 --reps 200 --seed 1 --output-dir results/
  dakscan simulate --scenario dirichlet --online --dims 1000 --reps 200 --seed 1

Exit codes: 0 ok, 1 H0 rejected (test --exit-on-reject), 2 input/configuration error,
3 numeric or degenerate-calibration error, 130 interrupted.
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='dakscan',
        description="DAKScan: dimension-averaged angular-kernel change-point detection",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=EPILOG,
    )
    parser.add_argument('--version', action='version', version=f"dakscan {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('-c', '--cpus', type=int, default=None,
                        help='Worker threads (default: auto-detect from physical cores)')
    common.add_argument('-q', '--quiet', action='store_true',
                        help='Suppress status lines and progress bars')
    common.add_argument('-o', '--output', default=None,
                        help='Report file (default: standard output)')

    seeded = argparse.ArgumentParser(add_help=False)
    seeded.add_argument('--seed', type=int, default=None,
                        help='RNG seed (default: drawn from OS entropy and recorded)')
    seeded.add_argument('--draws', type=int, default=DEFAULT_MC_DRAWS,
                        help=f'Monte-Carlo draws for c_alpha (default: {DEFAULT_MC_DRAWS})')
    seeded.add_argument('--alpha', type=float, default=DEFAULT_ALPHA,
                        help=f'Test level (default: {DEFAULT_ALPHA})')

    scaled = argparse.ArgumentParser(add_help=False)
    scaled.add_argument('--bandwidth', type=int, default=None,
                        help='HAC bandwidth L (default: floor(d^(1/3)))')
    scaled.add_argument('--sigma-method', choices=SIGMA_METHODS, default='hac',
                        help='Long-run scale estimator (default: hac)')
    scaled.add_argument('--n-perm', type=int, default=DEFAULT_N_PERM,
                        help=f'Permutations for --sigma-method permutation (default: {DEFAULT_N_PERM})')

    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True

    p = sub.add_parser('scan', parents=[common], help='Scan an N x d matrix and locate the change-point',
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument('input', nargs='?', default='-', help='CSV or DAK1 (.bin) matrix; "-" for stdin')
    p.add_argument('--format', choices=['json', 'csv'], default='json', help='Report format')
    p.add_argument('--plot-csv', default=None, help='Also write (t, W) rows to this CSV')

    p = sub.add_parser('test', parents=[common, seeded, scaled], help='Calibrated level-alpha test')
    p.add_argument('input', nargs='?', default='-', help='CSV or DAK1 (.bin) matrix; "-" for stdin')
    p.add_argument('--exit-on-reject', action='store_true', help='Exit with status 1 when H0 is rejected')

    p = sub.add_parser('calibrate', parents=[common, seeded, scaled],
                       help='Calibrate on a pre-change block and save the model as JSON')
    p.add_argument('input', nargs='?', default='-', help='Calibration block (N0 x d)')

    p = sub.add_parser('quantile', parents=[common, seeded], help='Monte-Carlo c_alpha for a given N')
    p.add_argument('-N', '--n-obs', type=int, required=True, help='Sample size (window length)')

    p = sub.add_parser('monitor', parents=[common, seeded, scaled], help='Sequential monitoring of a stream')
    p.add_argument('input', nargs='?', default='-', help='Stream of comma-separated rows; "-" for stdin')
    p.add_argument('--calibration', default=None, help='Calibration model JSON from "dakscan calibrate"')
    p.add_argument('--calib-input', default=None, help='Calibration block to calibrate in-process')
    p.add_argument('--mode', choices=MODES, default='first-alarm', help='Stop at first alarm or keep going')
    p.add_argument('--horizon', type=int, default=None, help='Stop after this many observations')
    p.add_argument('--series-csv', default=None, help='Write (s, statistic, raw_max, argmax) rows')

    p = sub.add_parser('simulate', parents=[common, seeded], help='Simulation studies')
    p.add_argument('--scenario', choices=SCENARIOS, required=True)
    p.add_argument('--dims', type=int, nargs='+', default=[200, 1000, 5000])
    p.add_argument('--reps', type=int, default=200)
    p.add_argument('--n-obs', type=int, default=40, help='Offline sample size N (default: 40)')
    p.add_argument('--tau', type=int, default=15, help='Offline change index (default: 15)')
    p.add_argument('--param', action='append', metavar='KEY=VALUE', help='Scenario parameter override')
    p.add_argument('--online', action='store_true', help='Monitoring protocol instead of localization')
    p.add_argument('--window', type=int, default=DEFAULT_WINDOW, help=f'N0 (default: {DEFAULT_WINDOW})')
    p.add_argument('--nu', type=int, default=50, help='Stream change index (default: 50)')
    p.add_argument('--horizon', type=int, default=DEFAULT_HORIZON,
                   help=f'Stream length (default: {DEFAULT_HORIZON})')
    p.add_argument('--output-dir', default=None, help='Directory for CSV/JSON reports')
    p.add_argument('--emit-data', default=None, help='Write the first replication data (.csv or .bin)')
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for DAKScan"""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format=LOG_FORMAT)

    orchestrator = DakScanOrchestrator(quiet=args.quiet)
    try:
        return orchestrator.run(RunConfig.from_args(args), args)
    except DakScanError as e:
        orchestrator.print_error(str(e))
        return e.exit_code
    except KeyboardInterrupt:
        orchestrator.print_error("Interrupted by user")
        return 130
    except OSError as e:
        orchestrator.print_error(f"I/O error: {e}")
        return 2
    except Exception as e:
        orchestrator.print_error(f"Critical error: {e}")
        import traceback
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
