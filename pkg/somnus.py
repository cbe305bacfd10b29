#!/usr/bin/env python3
"""Somnus - Main CLI Entry Point"""

import argparse
import json
import logging
import shutil
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from rich.table import Table
from rich import box

from src import ui
from src.analysis import hidden_correlation, importance_cosines, weight_diff_histogram
from src.config import (
    ExperimentConfig, config, load_experiment_config, load_experiment_data, parse_pairs,
)
from src.continual import rehearsal_sweep, run_sequence, split_for_plan
from src.errors import ConfigError, SnapshotError, SomnusError
from src.hyperopt import ga_optimize, run_tuning, save_tuning, sphere_fitness
from src.models import GenerationStats, NetworkParams
from src.numerics import make_rng
from src.reporter import Reporter
from src.selftest import SPHERE_NORM, run_selftest, sphere_config
from src.snapshot import list_snapshots, load_params, missing_phases, phase_sort_key, save_params, snapshot_name

logger = logging.getLogger('somnus')
console = ui.console

TUNE_KEY = 3


class SomnusCLI:
    """Main CLI application"""

    def run(self, args) -> int:
        """Main entry point"""
        parser = self.create_parser()
        parsed_args = parser.parse_args(args)

        ui.setup_logging('DEBUG' if getattr(parsed_args, 'verbose', False) else config.log_level)

        if not hasattr(parsed_args, 'func'):
            parser.print_help()
            return 1
        return parsed_args.func(parsed_args)

    def create_parser(self):
        """Create argument parser"""
        parser = argparse.ArgumentParser(
            description='Somnus - Equilibrium Propagation with sleep replay consolidation',
            prog='somnus'
        )

        subparsers = parser.add_subparsers(title='commands', dest='command')

        run_parser = subparsers.add_parser('run', help='Run a continual-learning experiment')
        run_parser.add_argument('config', help='Experiment config file')
        run_parser.add_argument('--fast', action='store_true', help='Hidden size 256 and 20%% of the data')
        run_parser.add_argument('--orders', type=int, metavar='N', help='Number of task orders to run')
        run_parser.add_argument('--verbose', action='store_true', help='Debug logging')
        run_parser.set_defaults(func=self.cmd_run)

        tune_parser = subparsers.add_parser('tune', help='Tune sleep parameters with the genetic algorithm')
        tune_parser.add_argument('config', nargs='?', help='Experiment config file')
        tune_parser.add_argument('--fast', action='store_true', help='Hidden size 256 and 20%% of the data')
        tune_parser.add_argument('--selftest-ga', action='store_true', help='Optimize the sphere function instead')
        tune_parser.add_argument('--flat', action='store_true', help='Use a constant fitness (stall check)')
        tune_parser.add_argument('--verbose', action='store_true', help='Debug logging')
        tune_parser.set_defaults(func=self.cmd_tune)

        analyze_parser = subparsers.add_parser('analyze', help='Analyze the snapshots of a finished run')
        analyze_parser.add_argument('run_dir', help='Run directory written by `run`')
        analyze_parser.add_argument('--phases', help='Before,after phases for weight histograms (e.g. T5,S5)')
        analyze_parser.add_argument('--bins', type=int, help='Histogram bin count')
        analyze_parser.add_argument('--pairs', help='Phase pairs for importance cosines (e.g. T1:T2,T1:S2)')
        analyze_parser.add_argument('--order', type=int, default=0, help='Task order to analyze')
        analyze_parser.add_argument('--verbose', action='store_true', help='Debug logging')
        analyze_parser.set_defaults(func=self.cmd_analyze)

        selftest_parser = subparsers.add_parser('selftest', help='Run the fast property checks')
        selftest_parser.add_argument('--seed', type=int, default=0)
        selftest_parser.add_argument('--verbose', action='store_true', help='Debug logging')
        selftest_parser.set_defaults(func=self.cmd_selftest)

        return parser

    # Command implementations

    def _prepare(self, config_path: str, fast: bool, orders: Optional[int] = None) -> Tuple[ExperimentConfig, object]:
        """Load and validate config and data; nothing is written yet"""
        cfg = load_experiment_config(config_path)
        if fast:
            cfg = cfg.fast()
        if orders is not None:
            if orders < 1:
                raise ConfigError("--orders must be at least 1")
            cfg = replace(cfg, num_orders=orders, orders=cfg.orders[:orders] if cfg.orders else None)
        data = load_experiment_data(cfg)
        plan = cfg.build_plan(data)
        return cfg, plan

    def cmd_run(self, args) -> int:
        """Run one strategy over all task orders"""
        cfg, plan = self._prepare(args.config, args.fast, args.orders)

        out = cfg.output_dir
        out.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(cfg.path, out / 'config.cfg')
        reporter = Reporter(out, cfg.config_hash, cfg.seed)
        snapshots = out / 'snapshots'

        def on_phase(order_id: int, label: str, params: NetworkParams):
            save_params(params, snapshots / snapshot_name(order_id, label))

        ui.print_info(f"{cfg.dataset}: {plan.strategy.value}, {len(plan.task_orders)} order(s), "
                      f"hidden {plan.hidden_size}, {len(plan.data)} samples")
        metrics = run_sequence(plan, on_phase)

        sweep = None
        if cfg.sweep_fractions:
            sweep = rehearsal_sweep(plan, cfg.sweep_fractions)
            reporter.write_sweep(sweep)

        reporter.write_metrics(metrics)
        reporter.write_confusions(metrics)
        reporter.write_summary(
            metrics,
            dataset=cfg.dataset,
            fast=bool(args.fast),
            hidden_size=plan.hidden_size,
            data_fraction=cfg.data_fraction,
            config_dir=str(cfg.path.resolve().parent),
            ep=plan.ep.to_dict(),
            sleep=plan.sleep.to_dict() if plan.sleep else None,
        )
        report = reporter.generate_run_report(metrics, cfg.dataset, sweep)
        path = reporter.export_report(report)

        for order in metrics.orders:
            ui.display_phase_grid(order)
        ui.display_summary(metrics, cfg.dataset)
        if sweep:
            ui.display_sweep(sweep)
        ui.print_success(f"Run written to {out} (report: {path.name})")
        return 0

    def cmd_tune(self, args) -> int:
        """Tune sleep parameters, or exercise the GA on a known landscape"""
        if args.selftest_ga or args.flat:
            return self._tune_oracle(args)
        if not args.config:
            raise ConfigError("tune needs a config file (or --selftest-ga / --flat)")

        cfg, plan = self._prepare(args.config, args.fast)
        result = run_tuning(plan, cfg.ga, make_rng(cfg.seed, TUNE_KEY))

        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        cfg_path, log_path = save_tuning(result, cfg.dataset, cfg.output_dir,
                                         {'config_hash': cfg.config_hash, 'seed': cfg.seed})
        ui.display_ga_result(result.params, result.history, result.tuned_fitness, result.default_fitness)
        if result.tuned_fitness < result.default_fitness:
            ui.print_warning("Tuned parameters scored below the untuned defaults at full budget")
        ui.print_success(f"Tuned parameters: {cfg_path}")
        ui.print_info(f"GA log: {log_path}")
        return 0

    def _tune_oracle(self, args) -> int:
        if args.config:
            ga = load_experiment_config(args.config).ga
            ga = replace(ga, bounds=[(-5.0, 5.0)] * len(ga.bounds)) if args.selftest_ga else ga
        else:
            ga = sphere_config()

        history: List[GenerationStats] = []
        if args.flat:
            ga_optimize(lambda candidate: 0.0, ga, make_rng(0, TUNE_KEY), history=history)
            generations = history[-1].generation
            ui.print_success(f"Flat fitness stopped after {generations} generation(s) "
                             f"(stall budget {ga.max_stall_generations})")
            return 0 if generations <= max(ga.max_stall_generations, 0) else 1

        best = ga_optimize(sphere_fitness, ga, make_rng(0, TUNE_KEY), history=history)
        norm = float(np.linalg.norm(best.genome))
        if norm < SPHERE_NORM:
            ui.print_success(f"Sphere optimum reached: best norm {norm:.4f} after {history[-1].generation} generations")
            return 0
        ui.print_error(f"Sphere optimum missed: best norm {norm:.4f}")
        return 1

    def _analysis_phases(self, args, cfg: ExperimentConfig, available: List[str]) -> Tuple[Tuple[str, str], list]:
        if args.phases:
            labels = [p.strip() for p in args.phases.split(',') if p.strip()]
            if len(labels) != 2:
                raise ConfigError("--phases needs exactly two labels, e.g. T5,S5")
            phases = (labels[0], labels[1])
        elif cfg.analysis.phases:
            phases = cfg.analysis.phases
        else:
            ordered = sorted(available, key=phase_sort_key)
            last_t = [p for p in ordered if p.startswith('T')]
            last_s = [p for p in ordered if p.startswith('S')]
            phases = (last_t[-1], last_s[-1]) if last_t and last_s else (ordered[0], ordered[-1])

        if args.pairs:
            try:
                pairs = parse_pairs(args.pairs)
            except ValueError as e:
                raise ConfigError(str(e))
        elif cfg.analysis.pairs:
            pairs = cfg.analysis.pairs
        elif {'T1', 'T2', 'S2'} <= set(available):
            pairs = [('T1', 'T2'), ('T1', 'S2'), ('T2', 'S2')]
        else:
            pairs = []
        return phases, pairs

    def cmd_analyze(self, args) -> int:
        """Correlations, weight-shift histograms and importance cosines from saved snapshots"""
        run_dir = Path(args.run_dir)
        summary_path = run_dir / 'summary.json'
        if not summary_path.exists():
            raise SnapshotError(f"{run_dir} is not a run directory (no summary.json)")
        summary = json.loads(summary_path.read_text(encoding='utf-8'))

        cfg = load_experiment_config(run_dir / 'config.cfg', base=summary.get('config_dir'))
        cfg = replace(cfg, hidden_size=summary.get('hidden_size', cfg.hidden_size),
                      data_fraction=summary.get('data_fraction', cfg.data_fraction))

        found = list_snapshots(run_dir / 'snapshots')
        if args.order not in found:
            raise SnapshotError(f"no snapshots for task order {args.order} in {run_dir / 'snapshots'}")
        available = found[args.order]

        phases, pairs = self._analysis_phases(args, cfg, list(available))
        required = list(phases) + [label for pair in pairs for label in pair]
        missing = missing_phases(available, list(dict.fromkeys(required)))
        if missing:
            raise SnapshotError(f"missing snapshots for order {args.order}: {', '.join(missing)}")

        data = load_experiment_data(cfg)
        plan = cfg.build_plan(data)
        order = tuple(summary['orders'][args.order]) if args.order < len(summary.get('orders', [])) \
            else plan.task_orders[0]
        test = split_for_plan(plan, order).union_test()
        snapshots = {label: load_params(available[label]) for label in dict.fromkeys(required)}

        reporter = Reporter(run_dir / 'analysis', cfg.config_hash, cfg.seed)
        bins = args.bins or cfg.analysis.bins
        histograms = weight_diff_histogram(snapshots[phases[0]], snapshots[phases[1]], bins)
        reporter.write_histograms(histograms, phases, args.order)

        table = Table(title=f"Order {args.order}: {phases[0]} → {phases[1]}", box=box.ROUNDED)
        table.add_column("Measure", style="cyan")
        table.add_column("Value", justify="right")
        for name, hist in histograms.items():
            table.add_row(f"mean Δ{name}", f"{hist.mean:+.3e}")
        for label in phases:
            corr = hidden_correlation(snapshots[label], plan.ep, test)
            reporter.write_correlation(corr, label, args.order)
            table.add_row(f"mean |corr| off-diagonal at {label}", f"{corr.mean_abs_off_diagonal():.4f}")
        console.print(table)

        if pairs:
            classes = cfg.analysis.classes or test.present_classes()
            rows = importance_cosines(snapshots, plan.ep, test, classes, pairs)
            reporter.write_cosines(rows, args.order)
            cosine_table = Table(title="Synaptic importance cosine", box=box.SIMPLE)
            cosine_table.add_column("Class", style="cyan")
            for a, b in pairs:
                cosine_table.add_column(f"{a} vs {b}", justify="right")
            for c in classes:
                values = [f"{cos:.3f}" for cls, _, _, cos in rows if cls == c]
                cosine_table.add_row(str(c), *values)
            console.print(cosine_table)

        ui.print_success(f"Analysis written to {reporter.output_dir}")
        return 0

    def cmd_selftest(self, args) -> int:
        """Run the property checks and report"""
        results = run_selftest(args.seed)
        ui.display_selftest(results)
        failed = [r for r in results if not r.passed]
        if failed:
            ui.print_error(f"{len(failed)} of {len(results)} checks failed")
            return 1
        ui.print_success(f"All {len(results)} checks passed")
        return 0


def main(argv=None) -> int:
    """Main entry point"""
    try:
        cli = SomnusCLI()
        return cli.run(sys.argv[1:] if argv is None else argv)
    except KeyboardInterrupt:
        console.print("\n[dim]Interrupted[/dim]")
        return 130
    except SomnusError as e:
        ui.print_error(str(e))
        return e.exit_code
    except Exception as e:
        logger.debug("Unhandled error", exc_info=True)
        ui.print_error(f"Fatal error: {e}")
        return 1


if __name__ == '__main__':
    sys.exit(main())
