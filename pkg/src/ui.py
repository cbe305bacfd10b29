"""Rich UI components for terminal output"""

import logging
from typing import List, Sequence

import numpy as np
from rich import box
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from .models import GenerationStats, OrderResult, PhaseMetrics, SleepParams


console = Console()


def setup_logging(level: str = 'INFO'):
    """Route all library logging through a RichHandler on the shared console"""
    handler = RichHandler(console=console, show_path=False, rich_tracebacks=True, markup=False)
    root = logging.getLogger()
    for existing in list(root.handlers):
        if isinstance(existing, RichHandler):
            root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(getattr(logging, str(level).upper(), logging.INFO))


def print_error(message: str):
    """Print error message"""
    console.print(f"[bold red]Error:[/bold red] {message}")


def print_success(message: str):
    """Print success message"""
    console.print(f"[bold green]✓[/bold green] {message}")


def print_info(message: str):
    """Print info message"""
    console.print(f"[cyan]ℹ[/cyan] {message}")


def print_warning(message: str):
    """Print warning message"""
    console.print(f"[yellow]⚠[/yellow] {message}")


def _pct(value: float) -> str:
    return f"{100 * value:.1f}"


def display_phase_grid(order: OrderResult):
    """Accuracy of every task after every phase for one task order"""
    tasks = len(order.phases[0].accuracies) if order.phases else 0
    table = Table(title=f"Order {order.order_id}: {' → '.join(str(t) for t in order.order)}",
                  show_header=True, box=box.SIMPLE)
    table.add_column("Phase", style="cyan")
    for i in range(1, tasks + 1):
        table.add_column(f"Task {i}", justify="right")
    table.add_column("Mean", justify="right", style="bold")

    for phase in order.phases:
        style = "dim" if phase.label.startswith('T') and any(p.label.startswith('S') for p in order.phases) else None
        table.add_row(phase.label, *[_pct(a) for a in phase.accuracies],
                      _pct(float(np.mean(phase.accuracies))), style=style)
    console.print(table)


def display_summary(metrics: PhaseMetrics, dataset: str):
    table = Table(title=f"{dataset.upper()} - {metrics.strategy.value}", show_header=True, box=box.ROUNDED)
    table.add_column("Order", style="cyan")
    table.add_column("Task order", style="dim")
    table.add_column("Final average", justify="right")

    for order, final in zip(metrics.orders, metrics.final_averages):
        table.add_row(str(order.order_id), ' '.join(str(t) for t in order.order), f"{_pct(final)}%")
    table.add_row("", "[bold]mean ± std[/bold]",
                  f"[bold]{_pct(metrics.final_mean)}% ± {_pct(metrics.final_std)}[/bold]")
    console.print(table)


def display_sweep(points):
    table = Table(title="Rehearsal sweep", show_header=True, box=box.SIMPLE)
    table.add_column("Old data", justify="right", style="cyan")
    table.add_column("Without sleep", justify="right")
    table.add_column("With sleep", justify="right")
    for p in points:
        table.add_row(f"{_pct(p.fraction)}%", _pct(p.without_src), _pct(p.with_src))
    console.print(table)


def display_ga_result(params: SleepParams, history: List[GenerationStats], tuned: float = None, default: float = None):
    table = Table(title="Tuned sleep parameters", show_header=True, box=box.ROUNDED)
    table.add_column("Parameter", style="cyan")
    table.add_column("Value", justify="right")
    for key, value in params.to_dict().items():
        table.add_row(key, f"{value:.6g}" if isinstance(value, float) else str(value))
    console.print(table)

    if history:
        last = history[-1]
        console.print(f"[dim]{last.generation} generation(s), best fitness {last.best_ever:.4f}[/dim]")
    if tuned is not None and default is not None:
        console.print(f"Validation accuracy: tuned [bold]{_pct(tuned)}%[/bold], untuned defaults {_pct(default)}%")


def display_selftest(results: Sequence):
    table = Table(title="Self-test", show_header=True, box=box.ROUNDED)
    table.add_column("Check", style="cyan")
    table.add_column("Result", justify="center")
    table.add_column("Detail", style="dim")
    for result in results:
        mark = "[bold green]PASS[/bold green]" if result.passed else "[bold red]FAIL[/bold red]"
        table.add_row(result.name, mark, result.detail)
    console.print(table)
