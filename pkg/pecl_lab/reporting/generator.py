"""Report generation and formatting."""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import markdown
from jinja2 import Template

from ..evaluation.metrics import long_format_rows
from ..experiments.runner import ExperimentResult
from ..dataset.io import write_rows_csv

logger = logging.getLogger(__name__)

SUPPORTED_FORMATS = ("json", "csv", "markdown", "html")

EXPERIMENT_MARKDOWN = Template(
    """# {{ result.name }}

## Setup
{% if result.hyperparams %}- **Learning rate**: {{ num(result.hyperparams.learning_rate) }}
- **Batch size**: {{ result.hyperparams.batch_size }}
- **k**: {{ result.hyperparams.k }}
- **alpha**: {{ num(result.hyperparams.alpha) }}
- **tau**: {{ num(result.hyperparams.tau) }}
- **Soft labels**: {{ result.hyperparams.soft_label_source.value }}
{% endif %}- **Split sizes**: {% for split, count in result.split_counts.items() %}{{ split }} {{ count }}{% if not loop.last %}, {% endif %}{% endfor %}
- **Seeds**: {{ result.runs | length }}

## Metrics

| Model | Split | Metric | Mean | SEM | Seeds |
|---|---|---|---|---|---|
{% for row in result.rows %}| {{ row.model }} | {{ row.split }} | {{ row.metric }} | {{ num(row.mean) }} | {{ num(row.sem) }} | {{ row.n_seeds }} |
{% endfor %}
{% if result.runs %}
## Training

| Seed | Best epoch | Epochs run | Stopped early | Val loss |
|---|---|---|---|---|
{% for run in result.runs %}| {{ run.seed }} | {{ run.report.best_epoch if run.report.best_epoch is not none else "-" }} | {{ run.report.epochs | length }} | {{ "yes" if run.report.stopped_early else "no" }} | {{ num(run.report.selected_val_loss()) }} |
{% endfor %}
{% for run in result.runs %}{% for split, metrics in run.metrics.items() %}{% if metrics.pearson_r_species_count is not none %}- Seed {{ run.seed }}, {{ split }}: f_MSE vs species richness r = {{ num(metrics.pearson_r_species_count) }} (p = {{ num(metrics.pearson_p_species_count) }})
{% endif %}{% endfor %}{% endfor %}{% endif %}
"""
)

SEARCH_MARKDOWN = Template(
    """# Hyperparameter search

{{ ok | length }} of {{ ranked | length }} candidates completed.

| Rank | lr | Batch | k | alpha | tau | Val MSE | SEM | Val top-10 | Test MSE |
|---|---|---|---|---|---|---|---|---|---|
{% for r in ok %}| {{ r.rank }} | {{ num(r.learning_rate) }} | {{ r.batch_size }} | {{ r.k }} | {{ num(r.alpha) }} | {{ num(r.tau) }} | {{ num(r.val_mse_mean) }} | {{ num(r.val_mse_sem) }} | {{ num(r.val_top10_mean) }} | {{ num(r.test_mse_mean) }} |
{% endfor %}
{% if failed %}
## Failed candidates
{% for r in failed %}- {{ r.index }} ({{ r.hash }}): {{ r.error }}
{% endfor %}{% endif %}"""
)

HTML_PAGE = Template(
    """<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>{{ title }}</title>
<style>
body { font-family: -apple-system, "Segoe UI", Helvetica, Arial, sans-serif; max-width: 960px; margin: 2em auto; color: #222; }
table { border-collapse: collapse; margin: 1em 0; }
th, td { border: 1px solid #ccc; padding: 4px 10px; text-align: right; }
th { background: #f3f3f3; }
</style>
</head>
<body>
{{ body }}
</body>
</html>
"""
)


def _num(value) -> str:
    if not isinstance(value, (int, float)):
        return "-"
    return f"{value:.4g}"


class ReportGenerator:
    """Writes experiment and search results in the configured formats."""

    def __init__(self, output_dir, formats: Optional[Sequence[str]] = None):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.formats = list(formats or SUPPORTED_FORMATS)

    def _log_error(self, message: str):
        logger.error(f"ReportGenerator: {message}")

    def generate_experiment_report(self, result: ExperimentResult) -> Dict[str, List[str]]:
        """Write every configured format; a failing format is logged and skipped."""
        generators = {
            "json": self._experiment_json,
            "csv": self._experiment_csv,
            "markdown": self._experiment_markdown,
            "html": self._experiment_html,
        }
        generated = {}
        for fmt in self.formats:
            if fmt not in generators:
                self._log_error(f"Unsupported format: {fmt}")
                continue
            try:
                generated[fmt] = [str(p) for p in generators[fmt](result)]
            except Exception as e:
                self._log_error(f"Error generating {fmt} report for {result.name}: {str(e)}")
                continue
        return generated

    def _experiment_json(self, result: ExperimentResult) -> List[Path]:
        path = self.output_dir / "results.json"
        path.write_text(result.model_dump_json(indent=2) + "\n")
        return [path]

    def _experiment_csv(self, result: ExperimentResult) -> List[Path]:
        metrics_path = write_rows_csv(
            self.output_dir / "metrics.csv",
            [row.model_dump(exclude={"values"}) for row in result.rows],
            ["model", "split", "metric", "mean", "sem", "n_seeds"],
        )

        units = []
        for run in result.runs:
            for split, report in run.metrics.items():
                units.extend(long_format_rows(report, split=split, run=f"seed_{run.seed}"))
        units_path = write_rows_csv(
            self.output_dir / "per_unit.csv", units, ["run", "split", "unit_id", "axis", "value"]
        )

        curves = []
        for run in result.runs:
            for record in run.report.epochs:
                curves.append({"seed": run.seed, **record.model_dump()})
        curve_columns = ["seed", "epoch", "train_loss", "train_bce", "train_pecl", "val_loss", "val_bce", "val_pecl"]
        curves_path = write_rows_csv(self.output_dir / "training_curves.csv", curves, curve_columns)
        return [metrics_path, units_path, curves_path]

    def _render_experiment_markdown(self, result: ExperimentResult) -> str:
        return EXPERIMENT_MARKDOWN.render(result=result, num=_num)

    def _experiment_markdown(self, result: ExperimentResult) -> List[Path]:
        path = self.output_dir / "report.md"
        path.write_text(self._render_experiment_markdown(result))
        return [path]

    def _experiment_html(self, result: ExperimentResult) -> List[Path]:
        body = markdown.markdown(self._render_experiment_markdown(result), extensions=["tables"])
        path = self.output_dir / "report.html"
        path.write_text(HTML_PAGE.render(title=result.name, body=body))
        return [path]

    def generate_search_report(self, ranked: List[Dict[str, Any]]) -> Dict[str, List[str]]:
        """Markdown/HTML summary of a ranked search; the ranked CSV is written by the search."""
        ok = [r for r in ranked if r.get("success")]
        failed = [r for r in ranked if not r.get("success")]
        text = SEARCH_MARKDOWN.render(ranked=ranked, ok=ok, failed=failed, num=_num)

        generated = {}
        try:
            if "markdown" in self.formats:
                path = self.output_dir / "search_report.md"
                path.write_text(text)
                generated["markdown"] = [str(path)]
            if "html" in self.formats:
                path = self.output_dir / "search_report.html"
                body = markdown.markdown(text, extensions=["tables"])
                path.write_text(HTML_PAGE.render(title="Hyperparameter search", body=body))
                generated["html"] = [str(path)]
            if "json" in self.formats:
                path = self.output_dir / "search_ranked.json"
                with open(path, "w") as f:
                    json.dump(ranked, f, indent=2, sort_keys=True, default=str)
                    f.write("\n")
                generated["json"] = [str(path)]
        except Exception as e:
            self._log_error(f"Error generating search report: {str(e)}")
        return generated
