"""
Finite-difference verification of every analytic gradient.

Each suite draws random instances, evaluates the analytic gradient and
compares it entrywise with central differences under

    |analytic - numeric| <= atol + rtol * max(|analytic|, |numeric|)

Loss functions are looked up in ``loss_fns`` so a deliberately broken
implementation can be injected to prove the harness catches it.
"""

import logging
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from ..contrastive.losses import (
    ContrastiveConfig,
    bce_loss,
    combined_loss,
    infonce_loss,
    pecl_loss,
    supcon_loss,
)
from ..contrastive.pairing import SoftLabelSource
from ..core.numeric import (
    DEFAULT_FD_STEP,
    SeededRng,
    finite_diff_grad,
    gradient_error,
    gradients_close,
    l2_normalize_rows,
)
from ..exceptions import GradientCheckError
from ..model.encoder import EncoderKind, FrozenEncoder
from ..model.projector import MlpProjector, backward, forward

logger = logging.getLogger(__name__)

SUITES = ("bce", "infonce", "supcon", "pecl", "mlp")
LABEL_SOURCES = (
    SoftLabelSource.LABEL_COSINE_SQUARED,
    SoftLabelSource.LABEL_COSINE,
    SoftLabelSource.CONSTANT_ONE,
)
DEFAULT_LOSS_FNS: Dict[str, Callable] = {
    "bce": bce_loss,
    "infonce": infonce_loss,
    "supcon": supcon_loss,
    "pecl": pecl_loss,
    "combined": combined_loss,
}


class CheckResult(BaseModel):
    suite: str
    trial: int
    passed: bool
    max_error: float
    shape: List[int] = Field(default_factory=list)


class GradcheckReport(BaseModel):
    """Outcome of a gradient-check run."""

    seed: int
    trials: int
    rtol: float
    atol: float
    results: List[CheckResult] = Field(default_factory=list)
    vacuous: bool = False

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failures(self) -> List[CheckResult]:
        return [r for r in self.results if not r.passed]

    def summary(self) -> Dict[str, Dict[str, float]]:
        out = {}
        for suite in sorted({r.suite for r in self.results}):
            rows = [r for r in self.results if r.suite == suite]
            out[suite] = {
                "trials": len(rows),
                "failures": sum(1 for r in rows if not r.passed),
                "max_error": max(r.max_error for r in rows),
            }
        return out


def _random_labels(rng: SeededRng, n: int, s: int) -> np.ndarray:
    labels = rng.uniform(0.0, 1.0, (n, s))
    # sparsify so similarities spread out; keep every row nonzero
    labels[rng.random((n, s)) < 0.3] = 0.0
    labels[:, 0] = np.maximum(labels[:, 0], 0.05)
    return labels


def _random_embeddings(rng: SeededRng, n: int, d: int) -> np.ndarray:
    return l2_normalize_rows(rng.normal(0.0, 1.0, (n, d)))


class GradientChecker:
    """Runs the finite-difference suites for losses and the MLP backward pass."""

    def __init__(
        self,
        trials: int = 100,
        seed: int = 0,
        rtol: float = 1e-5,
        atol: float = 1e-8,
        step: float = DEFAULT_FD_STEP,
        loss_fns: Optional[Dict[str, Callable]] = None,
        progress_callback: Optional[Callable[[str], None]] = None,
    ):
        if trials < 0:
            raise ValueError(f"trials must be >= 0, got {trials}")
        self.trials = int(trials)
        self.seed = int(seed)
        self.rtol = rtol
        self.atol = atol
        self.step = step
        self.loss_fns = dict(DEFAULT_LOSS_FNS)
        self.loss_fns.update(loss_fns or {})
        self.progress_callback = progress_callback

    def _emit_progress(self, message: str):
        logger.info(message)
        if self.progress_callback:
            self.progress_callback(message)

    def _compare(self, suite: str, trial: int, analytic, numeric) -> CheckResult:
        return CheckResult(
            suite=suite,
            trial=trial,
            passed=gradients_close(analytic, numeric, self.rtol, self.atol),
            max_error=gradient_error(analytic, numeric, self.atol),
            shape=list(np.shape(analytic)),
        )

    def check_bce(self, rng: SeededRng, trial: int) -> CheckResult:
        n, s = int(rng.integers(1, 17)), int(rng.integers(3, 63))
        labels = rng.uniform(0.0, 1.0, (n, s))
        # stay clear of the clamp at 1e-7
        preds = rng.uniform(0.05, 0.95, (n, s))
        fn = self.loss_fns["bce"]
        analytic = fn(labels, preds).grad_predictions
        numeric = finite_diff_grad(lambda p: fn(labels, p).value, preds, self.step)
        return self._compare("bce", trial, analytic, numeric)

    def check_infonce(self, rng: SeededRng, trial: int) -> CheckResult:
        n, d = int(rng.integers(2, 17)), int(rng.integers(4, 33))
        tau = float(rng.uniform(0.1, 1.0))
        z = _random_embeddings(rng, n, d)
        positives = [int((i + 1 + rng.integers(0, n - 1)) % n) for i in range(n)]
        fn = self.loss_fns["infonce"]
        analytic = fn(z, positives, tau).grad_embeddings
        numeric = finite_diff_grad(lambda e: fn(e, positives, tau).value, z, self.step)
        return self._compare("infonce", trial, analytic, numeric)

    def check_supcon(self, rng: SeededRng, trial: int) -> CheckResult:
        n, d = int(rng.integers(2, 17)), int(rng.integers(4, 33))
        tau = float(rng.uniform(0.1, 1.0))
        z = _random_embeddings(rng, n, d)
        positive_sets = []
        for i in range(n):
            others = [j for j in range(n) if j != i]
            size = int(rng.integers(1, len(others) + 1))
            chosen = rng.permutation(len(others))[:size]
            positive_sets.append(sorted(others[c] for c in chosen))
        fn = self.loss_fns["supcon"]
        analytic = fn(z, positive_sets, tau).grad_embeddings
        numeric = finite_diff_grad(lambda e: fn(e, positive_sets, tau).value, z, self.step)
        return self._compare("supcon", trial, analytic, numeric)

    def check_pecl(self, rng: SeededRng, trial: int) -> CheckResult:
        n, d, s = int(rng.integers(2, 17)), int(rng.integers(4, 33)), int(rng.integers(3, 63))
        config = ContrastiveConfig(
            k=int(rng.integers(1, 11)),
            tau=float(rng.uniform(0.1, 1.0)),
            alpha=1.0,
            soft_label_source=LABEL_SOURCES[int(rng.integers(0, len(LABEL_SOURCES)))],
        )
        z = _random_embeddings(rng, n, d)
        labels = _random_labels(rng, n, s)
        fn = self.loss_fns["pecl"]
        analytic = fn(z, labels, config).grad_embeddings
        numeric = finite_diff_grad(lambda e: fn(e, labels, config).value, z, self.step)
        return self._compare("pecl", trial, analytic, numeric)

    def check_mlp(self, rng: SeededRng, trial: int) -> CheckResult:
        """Full backward pass of combined loss through a small random projector."""
        n, d, s = int(rng.integers(2, 9)), int(rng.integers(4, 9)), int(rng.integers(3, 13))
        projector = MlpProjector(
            input_dim=d,
            output_dim=s,
            n_layers=int(rng.integers(1, 4)),
            hidden_width=8,
            use_adapter=bool(rng.integers(0, 2)),
            seed=int(rng.integers(0, 2**31)),
        )
        if projector.use_adapter:
            # move off the identity so the adapter gradient is exercised generically
            projector.params["adapter.weight"] = projector.params["adapter.weight"] + rng.normal(
                0.0, 0.3, (d, d)
            )
        encoder = FrozenEncoder(EncoderKind.IDENTITY, d)
        features = rng.normal(0.0, 1.0, (n, d))
        labels = _random_labels(rng, n, s)
        config = ContrastiveConfig(
            k=int(rng.integers(1, 6)),
            tau=float(rng.uniform(0.1, 1.0)),
            alpha=float(rng.uniform(0.1, 1.0)),
            soft_label_source=LABEL_SOURCES[int(rng.integers(0, len(LABEL_SOURCES)))],
        )
        fn = self.loss_fns["combined"]

        fp = forward(encoder, projector, features)
        grads = backward(projector, fp, fn(labels, fp.predictions, fp.embeddings, config))

        analytic_parts, numeric_parts = [], []
        for name, value in projector.parameters().items():
            perturbed = projector.copy()

            def loss_at(theta, name=name, perturbed=perturbed):
                perturbed.params[name] = theta
                out = forward(encoder, perturbed, features)
                return fn(labels, out.predictions, out.embeddings, config).value

            analytic_parts.append(grads[name].ravel())
            numeric_parts.append(finite_diff_grad(loss_at, value, self.step).ravel())
        return self._compare(
            "mlp", trial, np.concatenate(analytic_parts), np.concatenate(numeric_parts)
        )

    def run(self, suites: Optional[Sequence[str]] = None, raise_on_failure: bool = False) -> GradcheckReport:
        suites = list(suites or SUITES)
        unknown = [s for s in suites if s not in SUITES]
        if unknown:
            raise ValueError(f"unknown gradient-check suites {unknown}")

        report = GradcheckReport(seed=self.seed, trials=self.trials, rtol=self.rtol, atol=self.atol)
        if self.trials == 0:
            report.vacuous = True
            logger.warning("gradient check ran with trials=0; nothing was verified")
            return report

        root = SeededRng(self.seed)
        for index, suite in enumerate(SUITES):
            if suite not in suites:
                continue
            check = getattr(self, f"check_{suite}")
            rng = root.spawn(index)
            for trial in range(self.trials):
                report.results.append(check(rng, trial))
            stats = report.summary()[suite]
            self._emit_progress(
                f"{suite}: {stats['trials'] - stats['failures']}/{stats['trials']} passed, "
                f"max error {stats['max_error']:.2e}"
            )

        if raise_on_failure and not report.passed:
            first = report.failures()[0]
            raise GradientCheckError(
                f"{len(report.failures())} gradient checks failed; first: {first.suite} trial "
                f"{first.trial} error {first.max_error:.3e}"
            )
        return report
