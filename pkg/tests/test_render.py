"""Test suite for the console renderer."""

import io

from rich.console import Console

from gevgp.core.events import FitEndEvent, FitStartEvent, OuterStepEvent, PsdRepairEvent
from gevgp.render import FitRenderer


def make_renderer(every=1):
    buffer = io.StringIO()
    console = Console(file=buffer, width=120, color_system=None)
    return FitRenderer(console=console, every=every), buffer


def test_event_sequence():
    renderer, buffer = make_renderer()

    renderer.render_event(FitStartEvent(model="M2", n_sites=4, n_obs=12, theta_names=["a", "b"]))
    renderer.render_event(OuterStepEvent(iteration=1, theta=[0.5, -1.25], logml=-10.0, grad_norm=0.01))
    renderer.render_event(PsdRepairEvent(target="v_theta", min_eigenvalue=-0.2))
    renderer.render_event(FitEndEvent(converged=True, logml=-9.5, iterations=1, wall_seconds=0.2))

    text = buffer.getvalue()
    assert "fit M2" in text
    assert "a=0.5000, b=-1.2500" in text
    assert "repaired v_theta" in text
    assert "converged after 1 iterations" in text


def test_steps_thinned():
    renderer, buffer = make_renderer(every=5)

    for k in range(1, 11):
        renderer.render_event(OuterStepEvent(iteration=k, theta=[], logml=0.0, grad_norm=1.0))

    assert len(buffer.getvalue().strip().splitlines()) == 2


def test_fit_table(small_dataset, fit_factory):
    renderer, buffer = make_renderer()

    renderer.render_fit(fit_factory(small_dataset, "M1"))

    text = buffer.getvalue()
    assert "M1 hyperparameters" in text
    assert "log_lambda_b" in text
    assert "-2.00000" in text


def test_metrics_panel():
    renderer, buffer = make_renderer()

    renderer.render_metrics({"mae_a": 0.125, "ae_s": None})

    assert "mae_a: 0.1250" in buffer.getvalue()
    assert "ae_s: n/a" in buffer.getvalue()
