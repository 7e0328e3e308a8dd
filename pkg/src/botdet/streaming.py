"""On-line detection over a time-ordered flow stream with bounded state.

The loop keeps open aggregates for the current window plus the rows of
the previous N-1 closed windows, nothing else. A flow whose timestamp
crosses into a later window acts as the watermark: every window up to
that point is closed, scored inside its trailing N-window context, and
classified. The sequence construction is the same code the batch path
uses, so identical flows give identical verdicts.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator

from .detector import DetectorModel, classify
from .features import AggBuilder, FeatureRow, rows_from_aggregates, trailing_sequences, window_index
from .ingest import FlowRecord
from .scoring import score_sequences
from .train import TrainedModel


@dataclass
class StreamStats:
    flows_in: int = 0
    late_dropped: int = 0
    windows_closed: int = 0
    decisions: int = 0


def run_stream(model: TrainedModel, det: DetectorModel,
               flows: Iterable[FlowRecord]
               ) -> tuple[Iterator[dict], StreamStats]:
    """Decision-record generator plus live counters.

    Window 0 starts at the first flow's timestamp. Decisions for window w
    are emitted when the first flow of a later window arrives (or at end
    of input); missing history windows contribute no sequence elements,
    so decisions flow from the first window boundary onward. Flows older
    than the current open window are counted and dropped.

    emit_latency is measured on the data clock: the watermark timestamp
    that closed the window minus the window's end time. The end-of-input
    flush has no later flow to act as watermark, so its latency is
    clamped to 0.
    """
    stats = StreamStats()

    def gen() -> Iterator[dict]:
        t0: float | None = None
        current_w = 0
        builders: dict[str, AggBuilder] = {}
        history: deque[list[FeatureRow]] = deque(maxlen=max(model.n_windows - 1, 0))

        def flush(w: int, watermark: float) -> Iterator[dict]:
            aggs = sorted((b.finalize() for b in builders.values()),
                          key=lambda a: (a.first_seen, a.src_addr))
            builders.clear()
            rows = rows_from_aggregates(aggs, model.normalizer)
            stats.windows_closed += 1
            decisions: list[dict] = []
            if rows:
                context = [r for past in history for r in past] + rows
                seqs = [s for s in trailing_sequences(context, model.n_windows,
                                                      model.l_max)
                        if s.target_window == w]
                window_end = t0 + (w + 1) * model.window_seconds
                for s in score_sequences(model.arch, model.params, seqs):
                    v = classify(s.score, det)
                    decisions.append({
                        "src_addr": s.src_addr,
                        "window_index": s.window_index,
                        "score": s.score,
                        "likelihood_normal": v.likelihood_normal,
                        "likelihood_botnet": v.likelihood_botnet,
                        "verdict": "Malicious" if v.malicious else "NonMalicious",
                        "out_of_support": v.out_of_support,
                        "emit_latency": max(watermark - window_end, 0.0),
                    })
                decisions.sort(key=lambda d: d["src_addr"])
            history.append(rows)
            stats.decisions += len(decisions)
            yield from decisions

        last_time: float | None = None
        for flow in flows:
            stats.flows_in += 1
            if t0 is None:
                t0 = flow.start_time
            if flow.start_time < t0:
                stats.late_dropped += 1
                continue
            w = window_index(flow.start_time, t0, model.window_seconds)
            if w < current_w:
                stats.late_dropped += 1
                continue
            while w > current_w:
                yield from flush(current_w, flow.start_time)
                current_w += 1
            b = builders.get(flow.src_addr)
            if b is None:
                b = builders[flow.src_addr] = AggBuilder(flow.src_addr, w)
            b.add(flow)
            last_time = flow.start_time

        if t0 is not None and last_time is not None:
            yield from flush(current_w, last_time)

    return gen(), stats


def stream_decisions(model: TrainedModel, det: DetectorModel,
                     flows: Iterable[FlowRecord]) -> tuple[list[dict], StreamStats]:
    """Drain run_stream into a list; convenience for tests and batch diff."""
    it, stats = run_stream(model, det, flows)
    return list(it), stats
