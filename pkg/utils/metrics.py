import os
import psutil
from typing import Dict
from prometheus_client import (
    CollectorRegistry,
    Counter,
    Histogram,
    Gauge,
    write_to_textfile,
)


def current_rss_bytes() -> int:
    """Resident set size of this process in bytes."""
    return psutil.Process(os.getpid()).memory_info().rss


class TrainingMetrics:
    """
    Prometheus collectors for one training run.

    Responsibilities:
        - Count optimizer steps and keep the latest value of every loss term.
        - Record the wall-clock latency of each step.
        - Track the current gamma weight and the process memory footprint.
        - Dump everything to a node-exporter style text file at the end of a run.
    """

    def __init__(self) -> None:
        self.registry: CollectorRegistry = CollectorRegistry()

        self.steps: Counter = Counter(
            "cpvae_train_steps",
            "Optimizer steps taken",
            registry=self.registry,
        )
        self.loss: Gauge = Gauge(
            "cpvae_train_loss",
            "Latest value of each loss term",
            ["term"],
            registry=self.registry,
        )
        self.step_latency: Histogram = Histogram(
            "cpvae_train_step_latency_seconds",
            "Wall-clock time per optimizer step",
            buckets=[0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, float("inf")],
            registry=self.registry,
        )
        self.gamma: Gauge = Gauge(
            "cpvae_train_gamma",
            "Current dimension-wise KL weight",
            registry=self.registry,
        )
        self.memory: Gauge = Gauge(
            "cpvae_memory_usage_bytes",
            "Resident memory of the training process",
            registry=self.registry,
        )

    def observe_step(self, terms: Dict[str, float], gamma: float, seconds: float) -> None:
        self.steps.inc()
        for name, value in terms.items():
            self.loss.labels(term=name).set(value)
        self.gamma.set(gamma)
        self.step_latency.observe(seconds)

    def update_system_metrics(self) -> None:
        self.memory.set(current_rss_bytes())

    def write(self, path: str) -> None:
        self.update_system_metrics()
        write_to_textfile(path, self.registry)
