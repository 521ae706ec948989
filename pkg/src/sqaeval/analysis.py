"""How answer quality degrades as transcript quality drops.

Each recognition system becomes one point (word error rate, mean overlap
scores); an ordinary least squares line through those points summarizes the
degradation per point of word error rate.
"""

from __future__ import annotations

import json
import logging
import math
import statistics
from dataclasses import dataclass
from typing import Mapping, Sequence

from .align import TimeInterval, project_span_to_time, transfer_times
from .corpus import ResponseRecord
from .errors import ValidationError
from .metrics import TosMode, aos, combine_wer, tos, wer

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SystemPoint:
    """One system's corpus word error rate and mean scores, all percentages."""

    system_name: str
    wer: float
    mean_tos: float
    mean_aos: float


@dataclass(frozen=True)
class SystemInputs:
    """A system's transcripts plus its predictions into those transcripts.

    Transcript records must mirror the reference ids; their own annotations and
    word times are ignored, gold spans and timing always come from the
    reference.
    """

    records: Sequence[ResponseRecord]
    predictions: Mapping[str, tuple[int, int] | None]


def _check_ids(name: str, expected: set[str], actual: set[str], what: str) -> None:
    missing = sorted(expected - actual)
    extra = sorted(actual - expected)
    problems = []
    if missing:
        problems.append(f"missing {', '.join(missing)}")
    if extra:
        problems.append(f"unexpected {', '.join(extra)}")
    if problems:
        raise ValidationError(f"system {name}: {what} ids {'; '.join(problems)}")


def score_system(
    name: str,
    reference: Sequence[ResponseRecord],
    inputs: SystemInputs,
    tos_mode: TosMode = "set",
) -> SystemPoint:
    """Corpus WER plus mean TOS/AOS of the system's predictions, scored against
    the reference annotations, with prediction timing transferred from the
    reference word intervals."""
    ref_by_id = {r.id: r for r in reference}
    sys_by_id = {r.id: r for r in inputs.records}
    _check_ids(name, set(ref_by_id), set(sys_by_id), "transcript")
    _check_ids(name, set(ref_by_id), set(inputs.predictions), "prediction")

    wer_parts = []
    tos_values = []
    aos_values = []
    for sample_id in sorted(ref_by_id):
        ref = ref_by_id[sample_id]
        sys_words = sys_by_id[sample_id].word_texts
        wer_parts.append(wer(ref.word_texts, sys_words))

        gold_indices: set[int] = set()
        gold_intervals: list[TimeInterval] = []
        for gold in ref.answers:
            if not gold.is_no_answer:
                gold_indices.update(range(gold.first, gold.last + 1))
                gold_intervals.append(
                    project_span_to_time((gold.first, gold.last), ref.words)
                )
        gold_words = [ref.words[k].text for k in sorted(gold_indices)]

        prediction = inputs.predictions[sample_id]
        if prediction is None:
            pred_words: list[str] = []
            pred_intervals: list[TimeInterval] = []
        else:
            first, last = prediction
            if not 0 <= first <= last < len(sys_words):
                raise ValidationError(
                    f"system {name}: prediction for {sample_id} "
                    f"[{first}, {last}] exceeds transcript length {len(sys_words)}"
                )
            pred_words = sys_words[first : last + 1]
            transferred = transfer_times(ref.words, sys_words)
            pred_intervals = [project_span_to_time(prediction, transferred)]

        tos_values.append(tos(pred_words, gold_words, tos_mode))
        if not pred_intervals and not gold_intervals:
            aos_values.append(1.0)
        elif not pred_intervals or not gold_intervals:
            aos_values.append(0.0)
        else:
            aos_values.append(aos(pred_intervals, gold_intervals))

    n = len(tos_values)
    combined = combine_wer(wer_parts)
    return SystemPoint(
        system_name=name,
        wer=100.0 * combined.wer,
        mean_tos=100.0 * math.fsum(tos_values) / n if n else 0.0,
        mean_aos=100.0 * math.fsum(aos_values) / n if n else 0.0,
    )


def build_system_points(
    reference: Sequence[ResponseRecord],
    systems: Mapping[str, SystemInputs],
    tos_mode: TosMode = "set",
) -> list[SystemPoint]:
    """One point per system, ordered by system name."""
    return [
        score_system(name, reference, systems[name], tos_mode) for name in sorted(systems)
    ]


# ---------------------------------------------------------------------------
# Degradation fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DegradationFit:
    """score% = intercept + slope * wer%, by ordinary least squares."""

    metric: str
    slope: float
    intercept: float
    r_squared: float
    n_points: int


def fit_degradation(
    points: Sequence[SystemPoint], metric: str, include_reference: bool = False
) -> DegradationFit:
    """Least squares line for the chosen metric over WER.

    Points at exactly zero WER describe the reference transcript, not a
    recognition system, and are left out unless include_reference is set.
    """
    if metric not in ("tos", "aos"):
        raise ValueError(f"unknown metric {metric!r}")
    usable = [p for p in points if include_reference or p.wer != 0.0]
    xs = [p.wer for p in usable]
    ys = [p.mean_tos if metric == "tos" else p.mean_aos for p in usable]
    if len(xs) < 2:
        raise ValidationError(
            f"need at least two points to fit {metric}, have {len(xs)}"
        )
    try:
        slope, intercept = statistics.linear_regression(xs, ys)
    except statistics.StatisticsError as exc:
        raise ValidationError(f"cannot fit {metric}: {exc}") from exc

    mean_y = math.fsum(ys) / len(ys)
    ss_tot = math.fsum((y - mean_y) ** 2 for y in ys)
    ss_res = math.fsum((y - (intercept + slope * x)) ** 2 for x, y in zip(xs, ys))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return DegradationFit(metric, slope, intercept, r_squared, len(xs))


def fit_all(
    points: Sequence[SystemPoint], include_reference: bool = False
) -> dict[str, DegradationFit]:
    """Fits for both metrics; a metric that cannot be fit is omitted with a warning."""
    fits: dict[str, DegradationFit] = {}
    for metric in ("tos", "aos"):
        try:
            fits[metric] = fit_degradation(points, metric, include_reference)
        except ValidationError as exc:
            logger.warning("no %s fit: %s", metric, exc)
    return fits


# ---------------------------------------------------------------------------
# Report rendering
# ---------------------------------------------------------------------------

SYSTEMS_CSV_HEADER = "system,wer,mean_tos,mean_aos"
DEGRADATION_CSV_HEADER = "metric,series,wer,score"


def render_report(
    points: Sequence[SystemPoint], fits: Mapping[str, DegradationFit]
) -> dict[str, str]:
    """File name to content for the analysis outputs.

    The CSV tables round percentages to one decimal for reading;
    report.json keeps full precision for plotting and further processing.
    Without any fit the degradation table is omitted entirely.
    """
    ordered = sorted(points, key=lambda p: (p.wer, p.system_name))

    systems_lines = [SYSTEMS_CSV_HEADER]
    for p in ordered:
        systems_lines.append(
            f"{p.system_name},{p.wer:.1f},{p.mean_tos:.1f},{p.mean_aos:.1f}"
        )

    degradation_lines = [DEGRADATION_CSV_HEADER]
    for metric in ("tos", "aos"):
        fit = fits.get(metric)
        if fit is None:
            continue
        for p in ordered:
            score = p.mean_tos if metric == "tos" else p.mean_aos
            degradation_lines.append(f"{metric},observed,{p.wer:.1f},{score:.1f}")
        for p in ordered:
            fitted = fit.intercept + fit.slope * p.wer
            degradation_lines.append(f"{metric},fit,{p.wer:.1f},{fitted:.1f}")

    report = {
        "systems": [
            {
                "system": p.system_name,
                "wer": p.wer,
                "mean_tos": p.mean_tos,
                "mean_aos": p.mean_aos,
            }
            for p in ordered
        ],
        "fits": {
            metric: (
                None
                if metric not in fits
                else {
                    "slope": fits[metric].slope,
                    "intercept": fits[metric].intercept,
                    "r_squared": fits[metric].r_squared,
                    "n_points": fits[metric].n_points,
                }
            )
            for metric in ("tos", "aos")
        },
    }

    files = {
        "systems.csv": "\n".join(systems_lines) + "\n",
        "degradation.csv": "\n".join(degradation_lines) + "\n",
        "report.json": json.dumps(report, ensure_ascii=False, separators=(",", ":")) + "\n",
    }
    if not fits:
        del files["degradation.csv"]
        logger.warning("no degradation fits; omitting degradation.csv")
    return files
