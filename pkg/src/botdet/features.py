"""Per-host time-window aggregation, [0,1] normalization, and sequence assembly.

Flows are bucketed by source address into fixed-duration windows counted
from the first flow's timestamp. Each (host, window) bucket becomes one
25-value aggregate: connection/uniqueness counts, byte/packet/duration
sums, protocol/state/service category counts, and distinct-value counts.
Aggregates are min-max scaled to [0,1] with statistics fitted on the
training split, then chained into model-ready sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence as Seq

import numpy as np

from .errors import DataError
from .ingest import FlowRecord, GroundTruth

FEATURE_NAMES: tuple[str, ...] = (
    "n_connections",
    "n_unique_dst_addrs",
    "n_unique_dst_ports",
    "n_unique_src_ports",
    "sum_bytes",
    "sum_pkts",
    "sum_dur",
    "proto_tcp",
    "proto_udp",
    "proto_icmp",
    "proto_other",
    "state_con",
    "state_int",
    "state_urp",
    "state_rst",
    "state_est",
    "state_other",
    "service_dns",
    "service_smtp",
    "service_ssl",
    "service_http",
    "service_other",
    "n_distinct_proto",
    "n_distinct_state",
    "n_distinct_service",
)

N_FEATURES = len(FEATURE_NAMES)

PROTO_CATEGORIES = ("tcp", "udp", "icmp")
STATE_CATEGORIES = ("con", "int", "urp", "rst", "est")
SERVICE_CATEGORIES = ("dns", "smtp", "ssl", "http")

_IDX = {name: i for i, name in enumerate(FEATURE_NAMES)}


def proto_category(proto: str) -> str:
    p = proto.lower()
    return p if p in PROTO_CATEGORIES else "other"


def state_category(state: str) -> str:
    """Bucket a flow-state string.

    CON/INT/URP are matched exactly (connectionless summaries). For
    flag-pair forms like FSPA_FSPA, a reset flag on either side wins,
    otherwise acknowledgement on both sides counts as an established
    exchange. Everything else, including empty states, is "other".
    """
    s = state.strip().upper()
    if s in ("CON", "INT", "URP"):
        return s.lower()
    if "_" in s:
        left, right = s.split("_", 1)
        if "R" in left or "R" in right:
            return "rst"
        if "A" in left and "A" in right:
            return "est"
        return "other"
    if s.startswith("RST"):
        return "rst"
    return "other"


def window_index(t: float, t0: float, window_seconds: float) -> int:
    """Zero-based window number of timestamp ``t`` relative to ``t0``."""
    if window_seconds <= 0:
        raise ValueError(f"window_seconds must be positive, got {window_seconds}")
    if t < t0:
        raise ValueError(f"timestamp {t} precedes stream origin {t0}")
    return int((t - t0) // window_seconds)


@dataclass(frozen=True, slots=True)
class HostWindowAggregate:
    """One source host's activity summary for one time window."""

    src_addr: str
    window_index: int
    first_seen: float
    label: GroundTruth
    values: np.ndarray  # (N_FEATURES,) raw, unnormalized

    def value(self, name: str) -> float:
        return float(self.values[_IDX[name]])


class AggBuilder:
    """Incremental accumulator behind a (host, window) aggregate.

    Shared by the batch preprocessor and the streaming detector so both
    produce identical aggregates from identical flows.
    """

    __slots__ = ("src_addr", "window_index", "first_seen", "n", "dst_addrs",
                 "dst_ports", "src_ports", "sum_bytes", "sum_pkts", "sum_dur",
                 "proto_counts", "state_counts", "service_counts",
                 "protos", "states", "services", "any_botnet", "any_normal")

    def __init__(self, src_addr: str, window_idx: int):
        self.src_addr = src_addr
        self.window_index = window_idx
        self.first_seen = float("inf")
        self.n = 0
        self.dst_addrs: set[str] = set()
        self.dst_ports: set[str] = set()
        self.src_ports: set[str] = set()
        self.sum_bytes = 0
        self.sum_pkts = 0
        self.sum_dur = 0.0
        self.proto_counts = dict.fromkeys(PROTO_CATEGORIES + ("other",), 0)
        self.state_counts = dict.fromkeys(STATE_CATEGORIES + ("other",), 0)
        self.service_counts = dict.fromkeys(SERVICE_CATEGORIES + ("other",), 0)
        self.protos: set[str] = set()
        self.states: set[str] = set()
        self.services: set[str] = set()
        self.any_botnet = False
        self.any_normal = False

    def add(self, flow: FlowRecord) -> None:
        self.n += 1
        self.first_seen = min(self.first_seen, flow.start_time)
        self.dst_addrs.add(flow.dst_addr)
        self.dst_ports.add(flow.dst_port)
        self.src_ports.add(flow.src_port)
        self.sum_bytes += flow.tot_bytes
        self.sum_pkts += flow.tot_pkts
        self.sum_dur += flow.duration
        self.proto_counts[proto_category(flow.proto)] += 1
        self.state_counts[state_category(flow.state)] += 1
        self.service_counts[flow.service] += 1
        self.protos.add(flow.proto.lower())
        self.states.add(flow.state)
        self.services.add(flow.service)
        label = flow.label
        if label is GroundTruth.BOTNET:
            self.any_botnet = True
        elif label is GroundTruth.NORMAL:
            self.any_normal = True

    def finalize(self) -> HostWindowAggregate:
        if self.n == 0:
            raise ValueError("empty aggregate")
        values = np.zeros(N_FEATURES, dtype=np.float64)
        values[_IDX["n_connections"]] = self.n
        values[_IDX["n_unique_dst_addrs"]] = len(self.dst_addrs)
        values[_IDX["n_unique_dst_ports"]] = len(self.dst_ports)
        values[_IDX["n_unique_src_ports"]] = len(self.src_ports)
        values[_IDX["sum_bytes"]] = self.sum_bytes
        values[_IDX["sum_pkts"]] = self.sum_pkts
        values[_IDX["sum_dur"]] = self.sum_dur
        for cat, count in self.proto_counts.items():
            values[_IDX[f"proto_{cat}"]] = count
        for cat, count in self.state_counts.items():
            values[_IDX[f"state_{cat}"]] = count
        for cat, count in self.service_counts.items():
            values[_IDX[f"service_{cat}"]] = count
        values[_IDX["n_distinct_proto"]] = len(self.protos)
        values[_IDX["n_distinct_state"]] = len(self.states)
        values[_IDX["n_distinct_service"]] = len(self.services)
        if self.any_botnet:
            label = GroundTruth.BOTNET
        elif self.any_normal:
            label = GroundTruth.NORMAL
        else:
            label = GroundTruth.BACKGROUND
        return HostWindowAggregate(
            src_addr=self.src_addr,
            window_index=self.window_index,
            first_seen=self.first_seen,
            label=label,
            values=values,
        )


def aggregate_window(flows: Seq[FlowRecord], window_idx: int) -> list[HostWindowAggregate]:
    """Aggregate the flows of a single window, one result per source host."""
    builders: dict[str, AggBuilder] = {}
    for flow in flows:
        b = builders.get(flow.src_addr)
        if b is None:
            b = builders[flow.src_addr] = AggBuilder(flow.src_addr, window_idx)
        b.add(flow)
    done = [b.finalize() for b in builders.values()]
    done.sort(key=lambda a: (a.first_seen, a.src_addr))
    return done


def aggregate_flows(records: Iterable[FlowRecord], t0: float,
                    window_seconds: float) -> list[HostWindowAggregate]:
    """Bucket a flow stream into (host, window) aggregates.

    Accepts flows in any order; ``first_seen`` and label flags are
    order-independent. Results are sorted by (window, first_seen, host).
    """
    builders: dict[tuple[str, int], AggBuilder] = {}
    for flow in records:
        w = window_index(flow.start_time, t0, window_seconds)
        key = (flow.src_addr, w)
        b = builders.get(key)
        if b is None:
            b = builders[key] = AggBuilder(flow.src_addr, w)
        b.add(flow)
    done = [b.finalize() for b in builders.values()]
    done.sort(key=lambda a: (a.window_index, a.first_seen, a.src_addr))
    return done


def _apply_log1p(x: np.ndarray, flags: np.ndarray) -> np.ndarray:
    """log1p flagged columns; counts are floored at 0 to keep the log real."""
    if not flags.any():
        return x
    out = np.array(x, dtype=np.float64, copy=True)
    out[..., flags] = np.log1p(np.maximum(out[..., flags], 0.0))
    return out


@dataclass
class Normalizer:
    """Per-feature min-max scaling to [0,1], with optional log1p pre-transform.

    Statistics must be fitted on the training split only; values outside
    the fitted range clamp to the interval ends, and a constant feature
    maps to 0.
    """

    feature_names: tuple[str, ...]
    vmin: np.ndarray
    vmax: np.ndarray
    log1p: np.ndarray  # bool flags, applied before min/max

    @classmethod
    def fit(cls, raw: np.ndarray, log1p: np.ndarray | None = None,
            feature_names: tuple[str, ...] = FEATURE_NAMES) -> "Normalizer":
        raw = np.asarray(raw, dtype=np.float64)
        if raw.ndim != 2 or raw.shape[0] < 1:
            raise DataError("normalizer: need at least one aggregate to fit")
        if raw.shape[1] != len(feature_names):
            raise DataError(
                f"normalizer: {raw.shape[1]} columns vs {len(feature_names)} feature names")
        flags = (np.zeros(raw.shape[1], dtype=bool) if log1p is None
                 else np.asarray(log1p, dtype=bool))
        x = _apply_log1p(raw, flags)
        return cls(feature_names=tuple(feature_names),
                   vmin=x.min(axis=0), vmax=x.max(axis=0), log1p=flags)

    def transform(self, raw: np.ndarray) -> np.ndarray:
        x = _apply_log1p(np.asarray(raw, dtype=np.float64), self.log1p)
        span = self.vmax - self.vmin
        out = np.zeros_like(x)
        nz = span != 0
        scaled = (x - self.vmin)
        out = np.divide(scaled, span, out=out, where=nz)
        return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True, slots=True)
class FeatureRow:
    """A normalized host-window record: the unit scored and classified."""

    src_addr: str
    window_index: int
    first_seen: float
    label: GroundTruth
    values: np.ndarray  # (N_FEATURES,) in [0,1]


def rows_from_aggregates(aggs: Seq[HostWindowAggregate],
                         norm: Normalizer) -> list[FeatureRow]:
    return [
        FeatureRow(a.src_addr, a.window_index, a.first_seen, a.label,
                   norm.transform(a.values))
        for a in aggs
    ]


@dataclass
class Sequence:
    """Time-ordered host-window vectors from one span of consecutive windows."""

    vectors: np.ndarray  # (L, F)
    src_addrs: tuple[str, ...]
    window_indices: np.ndarray  # (L,) int64
    labels: tuple[GroundTruth, ...]
    first_seen: np.ndarray  # (L,)
    span_start: int
    n_windows: int
    target_window: int | None = None  # set when built as trailing context

    def __len__(self) -> int:
        return len(self.src_addrs)


def _span_chunks(members: list[FeatureRow], span_start: int, n_windows: int,
                 l_max: int, target_window: int | None) -> Iterator[Sequence]:
    members = sorted(members, key=lambda r: (r.first_seen, r.src_addr))
    for lo in range(0, len(members), l_max):
        chunk = members[lo:lo + l_max]
        yield Sequence(
            vectors=np.stack([r.values for r in chunk]),
            src_addrs=tuple(r.src_addr for r in chunk),
            window_indices=np.array([r.window_index for r in chunk], dtype=np.int64),
            labels=tuple(r.label for r in chunk),
            first_seen=np.array([r.first_seen for r in chunk], dtype=np.float64),
            span_start=span_start,
            n_windows=n_windows,
            target_window=target_window,
        )


def build_sequences(rows: Seq[FeatureRow], n_windows: int, l_max: int,
                    stride: int | None = None) -> list[Sequence]:
    """Chain host-window rows into sequences over spans of ``n_windows`` windows.

    Spans start at window 0 and advance by ``stride`` (default: span
    width, i.e. non-overlapping); members sort by (first_seen, src_addr)
    and split into chunks of at most ``l_max``. With the default stride
    every row lands in exactly one sequence.
    """
    if n_windows < 1 or l_max < 1:
        raise ValueError("n_windows and l_max must be >= 1")
    stride = n_windows if stride is None else stride
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if not rows:
        return []
    by_window: dict[int, list[FeatureRow]] = {}
    for r in rows:
        by_window.setdefault(r.window_index, []).append(r)
    max_w = max(by_window)
    out: list[Sequence] = []
    for start in range(0, max_w + 1, stride):
        members: list[FeatureRow] = []
        for w in range(start, start + n_windows):
            members.extend(by_window.get(w, ()))
        if members:
            out.extend(_span_chunks(members, start, n_windows, l_max, None))
    return out


def trailing_sequences(rows: Seq[FeatureRow], n_windows: int,
                       l_max: int) -> list[Sequence]:
    """One span per populated window ``w``, covering windows (w-N, w].

    This is the scoring-time construction: each row is judged in the
    context of the N-window history ending at its own window, which is
    exactly what the streaming path can know at the moment window ``w``
    closes. Missing history windows simply contribute no elements.
    Scores are kept only for elements whose window equals
    ``target_window``, so every row is scored exactly once.
    """
    if not rows:
        return []
    by_window: dict[int, list[FeatureRow]] = {}
    for r in rows:
        by_window.setdefault(r.window_index, []).append(r)
    out: list[Sequence] = []
    for w in sorted(by_window):
        members: list[FeatureRow] = []
        for wi in range(w - n_windows + 1, w + 1):
            members.extend(by_window.get(wi, ()))
        out.extend(_span_chunks(members, w - n_windows + 1, n_windows, l_max, w))
    return out


def non_malicious(rows: Iterable[FeatureRow]) -> list[FeatureRow]:
    return [r for r in rows if r.label is not GroundTruth.BOTNET]
