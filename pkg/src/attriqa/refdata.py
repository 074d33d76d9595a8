"""Bundled reference data: published system scores, correlation plot points,
and the answer-divergence example cases.

These are reference fixtures, not reproduction targets. The published
absolute scores came from 540B-parameter generators, trained dense
retrievers, a full 2021 Wikipedia snapshot, and pools of human raters; none
of that is rebuilt here. The fixtures feed the correlation tooling and the
report formatter, and pin the expected values in tests.

Each correlation fixture carries two point sets. "figure_points" are the
plotted marks. "fit_extra_points" are the additional systems (the
score-reranked variants and the URL-generation system) whose inclusion
exactly reproduces the published line of best fit; the published fit is not
recoverable from the plotted marks alone.
"""

from __future__ import annotations

import json
from importlib import resources

FIXTURE_AIS_EM = "ais-vs-em"
FIXTURE_AIS_AUTOAIS = "ais-vs-autoais"
CORRELATION_FIXTURES = (FIXTURE_AIS_EM, FIXTURE_AIS_AUTOAIS)

_FIXTURE_FILES = {
    FIXTURE_AIS_EM: "correlation_ais_em.json",
    FIXTURE_AIS_AUTOAIS: "correlation_ais_autoais.json",
}


def _load(name: str):
    with resources.files("attriqa.data").joinpath(name).open(encoding="utf-8") as handle:
        return json.load(handle)


def best_systems() -> list[dict]:
    """Per-architecture best-system scores (EM / AutoAIS / AIS +/- se)."""
    return _load("best_systems.json")


def rtr_ablations() -> list[dict]:
    """Retrieve-then-read ablation grid over retrieval, T, P, and A."""
    return _load("rtr_ablations.json")


def posthoc_ablations() -> list[dict]:
    """Post-hoc retrieval ablation grid over retrieval, exemplars, and k."""
    return _load("posthoc_ablations.json")


def correlation_fixture(name: str) -> dict:
    """A correlation fixture by name (see CORRELATION_FIXTURES)."""
    if name not in _FIXTURE_FILES:
        raise KeyError(f"unknown correlation fixture {name!r}; have {CORRELATION_FIXTURES}")
    return _load(_FIXTURE_FILES[name])


def fixture_series(fixture: dict, *, include_fit_extras: bool = True) -> tuple[list[float], list[float]]:
    """(xs, ys) series for a correlation fixture.

    With include_fit_extras the series is the full analysis set behind the
    published fit line; without, just the plotted marks.
    """
    points = list(fixture["figure_points"])
    if include_fit_extras:
        points += fixture["fit_extra_points"]
    return [p["x"] for p in points], [p["y"] for p in points]


def em_divergence_cases() -> list[dict]:
    """Examples where string match scores a valid attributed answer as wrong."""
    return _load("em_divergence_cases.json")
