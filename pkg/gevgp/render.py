"""Console rendering of fit events and summaries."""

from typing import Dict, List, Optional, Sequence

from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from .core.events import Event, FitEndEvent, FitStartEvent, OuterStepEvent, PsdRepairEvent
from .core.laplace import FitResult


class FitRenderer:
    """Render fit events to standard error."""

    def __init__(self, console: Optional[Console] = None, every: int = 1):
        self.console = console or Console(stderr=True)
        self.every = max(1, every)
        self.theta_names: List[str] = []

    def render_event(self, event: Event) -> None:
        """Render an event to the console."""
        if isinstance(event, FitStartEvent):
            self.theta_names = list(event.theta_names)
            self.console.print(
                f"[bold cyan]fit {event.model}[/bold cyan] "
                f"{event.n_sites} sites, {event.n_obs} observations"
            )

        elif isinstance(event, OuterStepEvent):
            if event.iteration % self.every:
                return
            theta = ", ".join(f"{name}={value:.4f}" for name, value in zip(self.theta_names, event.theta))
            self.console.print(
                f"[dim]{event.iteration:4d}[/dim] logml={event.logml:.6f} "
                f"|grad|={event.grad_norm:.2e}  {theta}"
            )

        elif isinstance(event, PsdRepairEvent):
            self.console.print(
                f"[yellow]repaired {event.target}: min eigenvalue {event.min_eigenvalue:.3g}[/yellow]"
            )

        elif isinstance(event, FitEndEvent):
            style = "green" if event.converged else "red"
            status = "converged" if event.converged else "did not converge"
            self.console.print(
                f"[bold {style}]{status}[/bold {style}] after {event.iterations} iterations "
                f"({event.wall_seconds:.1f}s), logml={event.logml:.6f}"
            )

    def render_fit(self, fit: FitResult) -> None:
        """Table of posterior modes and sds of theta."""
        table = Table(title=f"{fit.spec.name} hyperparameters", box=box.ROUNDED)
        table.add_column("name", style="cyan")
        table.add_column("mode", justify="right")
        table.add_column("sd", justify="right")
        for k, name in enumerate(fit.theta_names):
            sd = max(float(fit.v_theta[k, k]), 0.0) ** 0.5
            table.add_row(name, f"{fit.theta_vec[k]:.5f}", f"{sd:.5f}")
        self.console.print(table)

    def render_metrics(self, values: Dict[str, Optional[float]]) -> None:
        lines = [f"{key}: {'n/a' if value is None else f'{value:.4f}'}" for key, value in values.items()]
        self.console.print(Panel("\n".join(lines), border_style="blue", box=box.ROUNDED, padding=(0, 1),
                                 title="[bold blue]metrics[/bold blue]", title_align="left"))

    def render_coverage(self, rows: Sequence) -> None:
        table = Table(title="coverage", box=box.SIMPLE)
        table.add_column("p_exp", justify="right")
        table.add_column("p_obs", justify="right")
        for p_exp, p_obs in rows:
            table.add_row(f"{p_exp:.2f}", f"{p_obs:.4f}")
        self.console.print(table)
