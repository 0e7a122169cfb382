# Shared fixtures. The expensive full-grid experiment is session-scoped so
# the acceptance tests that read its metrics all reuse one run.
from pathlib import Path

import pytest

from crldistill import harness

REPO_ROOT = Path(__file__).resolve().parents[1]
TENSION_CONFIG = REPO_ROOT / "configs" / "tension.yaml"


@pytest.fixture(scope="session")
def tension_records(tmp_path_factory):
    """Full method-grid run of the shipped tension config (10 methods x 5 seeds)."""
    out = tmp_path_factory.mktemp("tension-grid")
    config = harness.ExperimentConfig.from_file(TENSION_CONFIG)
    records = harness.run_experiment(config, output_dir=str(out))
    return records, out


@pytest.fixture(scope="session")
def tension_rows(tension_records):
    _, out = tension_records
    return harness.load_metric_rows(str(out))


def method_means(rows):
    """Per-method mean (success, constraint satisfaction) over seeds."""
    by_method: dict[str, list[dict]] = {}
    for row in rows:
        by_method.setdefault(row["method"], []).append(row)
    means = []
    for method, group in by_method.items():
        means.append({
            "method": method,
            "seed": -1,
            "task_success_rate": sum(r["task_success_rate"] for r in group)
            / len(group),
            "mean_kl": sum(r["mean_kl"] for r in group) / len(group),
            "constraint_satisfaction":
                sum(r["constraint_satisfaction"] for r in group) / len(group),
            "violation_probability":
                sum(r["violation_probability"] for r in group) / len(group),
        })
    return means
