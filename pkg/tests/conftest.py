"""Shared fixtures: a small catalog, mixtures, and synthetic-data builders."""

from __future__ import annotations

import numpy as np
import pytest

from atlas_kit import CorpusCatalog, LawParams, LawSpec, RunRecord, RunSet
from atlas_kit.synth import SynthDesign, generate_runs

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

CATALOG_ENTRIES = {
    "fr": 3_000_000_000,
    "en": 40_000_000_000,
    "es": 5_000_000_000,
    "de": 4_000_000_000,
    "zh": 2_000_000_000,
    "hi": 400_000_000,
}

MIXTURES = (
    ("mono_fr", {"fr": 1.0}),
    ("bi_fr_en", {"fr": 0.5, "en": 0.5}),
    ("bi_fr_es", {"fr": 0.5, "es": 0.5}),
    ("bi_fr_de", {"fr": 0.5, "de": 0.5}),
    ("tri_fr_en_zh", {"fr": 0.4, "en": 0.4, "zh": 0.2}),
    ("quad", {"fr": 0.3, "en": 0.3, "es": 0.2, "de": 0.2}),
    ("five", {"fr": 0.25, "en": 0.25, "es": 0.2, "de": 0.15, "hi": 0.15}),
    ("unimax", {"fr": 0.2, "en": 0.3, "es": 0.15, "de": 0.15, "zh": 0.1, "hi": 0.1}),
)

TRUTH_FULL = LawParams(
    variant="atlas_full",
    e_irreducible=0.72,
    log_a=6.4,
    log_b=8.1,
    alpha=0.37,
    beta=0.42,
    lam=1.8,
    tau_transfer={"en": 0.55, "es": 0.3, "de": 0.12},
    tau_other=0.18,
)
SPEC_FULL = LawSpec("atlas_full", "fr", ("en", "es", "de"))

#: Trimmed but honest multi-start grid; the built-in default crosses 2304
#: points, far more than these desk-scale tests need.
FAST_GRID = {
    "e_irreducible": (0.0, 0.7),
    "log_a": (4.0, 10.0),
    "alpha": (0.25, 0.55),
    "log_b": (4.0, 10.0),
    "beta": (0.25, 0.55),
    "lam": (1.0,),
}


@pytest.fixture(scope="session")
def catalog() -> CorpusCatalog:
    return CorpusCatalog(dict(CATALOG_ENTRIES))


def make_design(
    *,
    law: LawParams = TRUTH_FULL,
    spec: LawSpec = SPEC_FULL,
    n_sizes: int = 6,
    n_checkpoints: int = 12,
    mixtures=MIXTURES,
    noise_sigma: float = 0.0,
    seed: int = 42,
) -> SynthDesign:
    sizes = tuple(int(v) for v in np.geomspace(1e7, 2e9, n_sizes))
    checkpoints = tuple(int(v) for v in np.geomspace(2e8, 6e10, n_checkpoints))
    return SynthDesign(
        spec=spec,
        law=law,
        n_values=sizes,
        token_checkpoints=checkpoints,
        mixtures=mixtures,
        noise_sigma=noise_sigma,
        seed=seed,
    )


@pytest.fixture(scope="session")
def noiseless_runs(catalog) -> RunSet:
    return generate_runs(make_design(noise_sigma=0.0), catalog)


@pytest.fixture(scope="session")
def noisy_runs(catalog) -> RunSet:
    return generate_runs(make_design(noise_sigma=0.01), catalog)


def make_record(
    run_id="r1",
    n_params=10**8,
    mixture_id="mix",
    weights=None,
    tokens=None,
    total=None,
    eval_language="fr",
    loss=2.0,
) -> RunRecord:
    weights = weights if weights is not None else {"fr": 1.0}
    tokens = tokens if tokens is not None else {"fr": 1000}
    total = total if total is not None else sum(tokens.values())
    return RunRecord(
        run_id=run_id,
        n_params=n_params,
        mixture_id=mixture_id,
        sampling_weights=weights,
        cumulative_tokens=tokens,
        total_tokens=total,
        eval_language=eval_language,
        loss=loss,
    )
