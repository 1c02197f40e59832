"""
UI Display Module
Console status messages, fit summaries and stage-share tables
"""

import io
import math
from typing import Any, Dict, List, Sequence

import numpy as np
from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from ..core.estimate import FitResult
from ..core.model import ModelSpec

# stdout stays free for piped results
console = Console(stderr=True)

SUMMARY_WIDTH = 100


def _num(value: float, digits: int = 4) -> str:
    if value is None or not math.isfinite(value):
        return "n/a"
    return f"{value:.{digits}f}"


def _p(value: float) -> str:
    if value is None or not math.isfinite(value):
        return "n/a"
    return "<0.0001" if value < 1e-4 else f"{value:.4f}"


class UIManager:
    """Manages all console output of the CLI"""

    def __init__(self, quiet: bool = False):
        self.console = console
        self.quiet = quiet

    def fit_tables(self, result: FitResult) -> List[Table]:
        """One coefficient table per equation, then correlations and fit statistics"""
        spec = result.spec
        index = {name: i for i, name in enumerate(result.names)}
        tables = []
        for eq in spec.equations:
            table = Table(title=f"Equation: {eq.name} ({eq.n_stages} stages)", box=box.SIMPLE,
                          title_style="bold cyan", title_justify="left")
            table.add_column("Parameter", style="green")
            for heading in ("Estimate", "Std. err.", "z", "p"):
                table.add_column(heading, justify="right")
            labels = [(f"{eq.name}:beta:{c}", c) for c in eq.covariates]
            labels += [(f"{eq.name}:mu:{j + 1}", f"threshold {j + 1}") for j in range(eq.n_thresholds)]
            for key, label in labels:
                i = index[key]
                table.add_row(label, _num(result.estimates[i]), _num(result.std_errors[i]),
                              _num(result.z_values[i], 2), _p(result.p_values[i]))
            tables.append(table)

        if spec.n_correlations:
            table = Table(title="Correlations", box=box.SIMPLE, title_style="bold cyan", title_justify="left")
            table.add_column("Pair", style="magenta")
            for heading in ("Estimate", "Std. err.", "z", "p"):
                table.add_column(heading, justify="right")
            for i, j in spec.pairs:
                key = f"rho:{spec.equations[i].name},{spec.equations[j].name}"
                k = index[key]
                note = " (fixed)" if result.independent else ""
                table.add_row(key[4:] + note, _num(result.estimates[k]), _num(result.std_errors[k]),
                              _num(result.z_values[k], 2), _p(result.p_values[k]))
            tables.append(table)

        stats = Table(title="Fit statistics", box=box.SIMPLE, title_style="bold cyan", title_justify="left")
        stats.add_column("Statistic", style="yellow")
        stats.add_column("Value", justify="right")
        rows = [
            ("Log-likelihood", _num(result.ll, 2)),
            ("Null log-likelihood", _num(result.ll_null, 2)),
            ("McFadden rho-squared", _num(result.rho2, 3)),
            ("AIC", _num(result.aic, 2)),
            ("BIC", _num(result.bic, 2)),
            ("Observations (n)", str(result.n)),
            ("Parameters (k)", str(result.k)),
            ("Converged", "yes" if result.converged else "no"),
            ("Iterations", str(result.iterations)),
        ]
        if result.lr_test is not None:
            rows.append(("LR test R = I", f"{result.lr_test.stat:.2f} on {result.lr_test.df} df, p {_p(result.lr_test.p_value)}"))
        for name, value in rows:
            stats.add_row(name, value)
        tables.append(stats)
        return tables

    def render_fit_summary(self, result: FitResult) -> str:
        """Plain aligned text of the fit tables"""
        buffer = io.StringIO()
        plain = Console(file=buffer, width=SUMMARY_WIDTH, color_system=None,
                        force_terminal=False, highlight=False)
        for table in self.fit_tables(result):
            plain.print(table)
        return "\n".join(line.rstrip() for line in buffer.getvalue().splitlines()) + "\n"

    def show_fit_summary(self, result: FitResult):
        if self.quiet:
            return
        for table in self.fit_tables(result):
            self.console.print(table)

    def show_stage_shares(self, spec: ModelSpec, shares: Sequence[np.ndarray], title: str = "Stage shares"):
        """Share of observations in each stage per equation"""
        if self.quiet:
            return
        width = max(eq.n_stages for eq in spec.equations)
        table = Table(title=title, box=box.SIMPLE, title_style="bold cyan")
        table.add_column("Equation", style="green")
        for j in range(width):
            table.add_column(f"Stage {j}", justify="right")
        for eq, s in zip(spec.equations, shares):
            cells = [f"{v:.3f}" for v in s] + [""] * (width - eq.n_stages)
            table.add_row(eq.name, *cells)
        self.console.print(table)

    def show_statistics(self, stats: Dict[str, Any], title: str = "Summary"):
        if self.quiet:
            return
        text = "\n".join(f"[cyan]{key.replace('_', ' ').title()}:[/cyan] {value}" for key, value in stats.items())
        self.console.print(Panel(text, title=title, style="green"))

    def show_error(self, message: str):
        """Display error message"""
        self.console.print(f"[red]❌ {message}[/red]", highlight=False)

    def show_success(self, message: str):
        if not self.quiet:
            self.console.print(f"[bold green]✅ {message}[/bold green]", highlight=False)

    def show_warning(self, message: str):
        self.console.print(f"[yellow]⚠️ {message}[/yellow]", highlight=False)
