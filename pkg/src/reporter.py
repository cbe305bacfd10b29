"""Reporting: CSV/JSON run outputs and the markdown run report"""

import configparser
import csv
import json
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .models import GenerationStats, PhaseMetrics, SleepParams, Strategy


def _header(meta: Dict[str, object]) -> str:
    """One-line metadata header shared by every CSV output"""
    return '# ' + ' '.join(f"{key}={value}" for key, value in meta.items()) + '\n'


def _write_csv(path: Path, meta: Dict[str, object], columns: Sequence[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(_header(meta))
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(columns)
        writer.writerows(rows)
    return path


def read_csv_meta(path) -> Dict[str, str]:
    """Parse the `# key=value ...` header line of an output CSV"""
    with open(path, encoding='utf-8') as f:
        first = f.readline().strip()
    if not first.startswith('#'):
        return {}
    return dict(item.split('=', 1) for item in first[1:].split() if '=' in item)


def write_sleep_config(path, sp: SleepParams, meta: Optional[Dict[str, object]] = None) -> Path:
    """Write tuned sleep parameters as a [sleep] section other configs can include"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    values = sp.to_dict()
    parser['sleep'] = {key: repr(value) if isinstance(value, float) else str(value).lower()
                       if isinstance(value, bool) else str(value) for key, value in values.items()}
    with open(path, 'w', encoding='utf-8') as f:
        if meta:
            f.write(_header(meta))
        parser.write(f)
    return path


def write_ga_log(path, history: List[GenerationStats], meta: Optional[Dict[str, object]] = None) -> Path:
    rows = [(s.generation, f"{s.best:.6f}", f"{s.mean:.6f}", f"{s.best_ever:.6f}", s.stall) for s in history]
    return _write_csv(Path(path), meta or {}, ('generation', 'best', 'mean', 'best_ever', 'stall'), rows)


class Reporter:
    """Writes the files of one run directory, each stamped with the config hash and seed"""

    def __init__(self, output_dir, config_hash: str, seed: int):
        self.output_dir = Path(output_dir)
        self.config_hash = config_hash
        self.seed = seed

    def meta(self, **extra) -> Dict[str, object]:
        return {'config_hash': self.config_hash, 'seed': self.seed, **extra}

    def write_metrics(self, metrics: PhaseMetrics) -> Path:
        """metrics.csv: one row per (order, phase, task)"""
        rows = []
        for order in metrics.orders:
            for phase in order.phases:
                for position, accuracy in enumerate(phase.accuracies, start=1):
                    rows.append((order.order_id, phase.label, position, f"{accuracy:.6f}"))
        return _write_csv(self.output_dir / 'metrics.csv', self.meta(strategy=metrics.strategy.value),
                          ('order_id', 'phase', 'task_id', 'accuracy'), rows)

    def write_confusions(self, metrics: PhaseMetrics) -> List[Path]:
        """confusion_<phase>.csv with counts summed over task orders"""
        paths = []
        for label in metrics.phase_labels:
            counts = metrics.confusion(label)
            classes = range(counts.shape[0])
            rows = [[t, *counts[t].tolist()] for t in classes]
            paths.append(_write_csv(
                self.output_dir / f"confusion_{label}.csv",
                self.meta(phase=label, orders=len(metrics.orders)),
                ['true'] + [f"pred_{p}" for p in classes], rows,
            ))
        return paths

    def summary(self, metrics: PhaseMetrics, **extra) -> dict:
        last = metrics.phase_labels[-1] if metrics.phase_labels else None
        summary = {
            'config_hash': self.config_hash,
            'seed': self.seed,
            'strategy': metrics.strategy.value,
            'orders': [list(o.order) for o in metrics.orders],
            'phases': metrics.phase_labels,
            'final_phase': last,
            'final_average_mean': metrics.final_mean,
            'final_average_std': metrics.final_std,
            'final_average_per_order': metrics.final_averages,
        }
        if last is not None:
            joint = [float(np.trace(o.phase(last).confusion) / max(1, o.phase(last).confusion.sum()))
                     for o in metrics.orders]
            summary['joint_accuracy_mean'] = float(np.mean(joint))
        summary.update(extra)
        return summary

    def write_summary(self, metrics: PhaseMetrics, **extra) -> Path:
        path = self.output_dir / 'summary.json'
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.summary(metrics, **extra), indent=2) + '\n', encoding='utf-8')
        return path

    def write_sweep(self, points) -> Path:
        rows = [(f"{p.fraction:.4f}", f"{p.without_src:.6f}", f"{p.with_src:.6f}") for p in points]
        return _write_csv(self.output_dir / 'rehearsal_sweep.csv', self.meta(),
                          ('fraction', 'without_src', 'with_src'), rows)

    def write_histograms(self, histograms, phases: Tuple[str, str], order_id: int) -> List[Path]:
        paths = []
        for name, hist in histograms.items():
            lo, hi = hist.range
            meta = self.meta(order=order_id, before=phases[0], after=phases[1],
                             bins=len(hist.counts), range=f"{lo:.6e},{hi:.6e}", mean=f"{hist.mean:.6e}")
            rows = [(f"{hist.edges[i]:.6e}", f"{hist.edges[i + 1]:.6e}", int(c)) for i, c in enumerate(hist.counts)]
            paths.append(_write_csv(
                self.output_dir / f"weight_diff_{name}_{phases[0]}_{phases[1]}_order{order_id}.csv",
                meta, ('bin_lo', 'bin_hi', 'count'), rows,
            ))
        return paths

    def write_correlation(self, corr, phase: str, order_id: int) -> Path:
        rows = [[c, *[f"{v:.6f}" for v in corr.values[i]]] for i, c in enumerate(corr.classes)]
        meta = self.meta(order=order_id, phase=phase, mean_abs_off_diagonal=f"{corr.mean_abs_off_diagonal():.6f}")
        return _write_csv(self.output_dir / f"correlation_{phase}_order{order_id}.csv", meta,
                          ['class'] + [str(c) for c in corr.classes], rows)

    def write_cosines(self, rows, order_id: int) -> Path:
        formatted = [(c, a, b, f"{cos:.6f}") for c, a, b, cos in rows]
        return _write_csv(self.output_dir / f"importance_cosine_order{order_id}.csv", self.meta(order=order_id),
                          ('class', 'phase_a', 'phase_b', 'cosine'), formatted)

    def generate_run_report(self, metrics: PhaseMetrics, dataset: str, sweep=None) -> str:
        """Markdown summary of a finished run"""
        lines = [
            f"# {dataset.upper()} - {metrics.strategy.value}",
            "",
            f"Generated {datetime.now().strftime('%Y-%m-%d %H:%M')} | config `{self.config_hash}` | seed {self.seed}",
            "",
            f"**Final average accuracy:** {100 * metrics.final_mean:.2f}% +- {100 * metrics.final_std:.2f}% "
            f"over {len(metrics.orders)} task order(s)",
            "",
        ]

        if metrics.strategy is Strategy.PARALLEL:
            lines.append("Joint training on all tasks at once (upper bound).")
            lines.append("")

        for order in metrics.orders:
            lines.append(f"## Order {order.order_id}: {' -> '.join(str(t) for t in order.order)}")
            lines.append("")
            tasks = len(order.phases[0].accuracies) if order.phases else 0
            lines.append("| Phase | " + " | ".join(f"Task {i}" for i in range(1, tasks + 1)) + " | Mean |")
            lines.append("|---" * (tasks + 2) + "|")
            for phase in order.phases:
                cells = " | ".join(f"{100 * a:.1f}" for a in phase.accuracies)
                lines.append(f"| {phase.label} | {cells} | {100 * np.mean(phase.accuracies):.1f} |")
            lines.append("")

        if sweep:
            lines.append("## Rehearsal sweep")
            lines.append("")
            lines.append("| Old data | Without sleep | With sleep |")
            lines.append("|---|---|---|")
            for p in sweep:
                lines.append(f"| {100 * p.fraction:.1f}% | {100 * p.without_src:.1f} | {100 * p.with_src:.1f} |")
            lines.append("")

        return "\n".join(lines)

    def export_report(self, content: str, filename: str = 'report.md') -> Path:
        """Export a report to a markdown file in the run directory"""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        file_path = self.output_dir / filename
        with open(file_path, 'w', encoding='utf-8') as f:
            f.write(content)
        return file_path
