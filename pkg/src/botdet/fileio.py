"""On-disk artifact formats.

Every artifact is versioned and self-describing:

- features file: header JSON (feature names, normalizer stats, window
  config, t0) plus one record per host-window, as CSV (``#META`` first
  line) or a compact length-prefixed binary
- model file: JSON with named flat parameter arrays; floats survive a
  save/load round trip bit for bit (shortest-repr encoding)
- detector file: JSON with the two fitted densities
- scores file: CSV src_addr,window_index,first_seen,label,score
- decisions file: JSON lines
- run manifest: config hash, input digests, seed, library versions; no
  timestamps, so reruns produce identical bytes

Readers verify format_version and artifact kind and raise DataError with
the offending path on any mismatch.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy

from . import __version__
from .detector import DetectorModel, FittedPdf, family_by_name
from .errors import DataError
from .features import FeatureRow, Normalizer
from .ingest import GroundTruth
from .models import MlpVaeParams, RvaeParams
from .scoring import ScoredWindow
from .train import TrainedModel

FORMAT_VERSION = 1

_BINARY_MAGIC = b"BDFT"
_LABEL_CODES = {GroundTruth.BACKGROUND: 0, GroundTruth.NORMAL: 1, GroundTruth.BOTNET: 2}
_CODE_LABELS = {v: k for k, v in _LABEL_CODES.items()}


def _to_jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON-serializable: {type(obj)!r}")


def dump_json(payload: dict, path: str | Path) -> None:
    text = json.dumps(payload, indent=1, sort_keys=True, default=_to_jsonable)
    Path(path).write_text(text + "\n")


def _load_json(path: str | Path, kind: str) -> dict:
    p = Path(path)
    try:
        payload = json.loads(p.read_text())
    except FileNotFoundError:
        raise DataError(f"{p}: file not found")
    except json.JSONDecodeError as exc:
        raise DataError(f"{p}: not valid JSON ({exc})")
    got_kind = payload.get("kind")
    if got_kind != kind:
        raise DataError(f"{p}: expected a {kind} file, found kind={got_kind!r}")
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(f"{p}: unsupported format_version {version!r}, "
                        f"this build reads {FORMAT_VERSION}")
    return payload


def sha256_of(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------- features

@dataclass(frozen=True)
class FeaturesMeta:
    """Everything a consumer needs to interpret feature rows."""

    feature_names: tuple[str, ...]
    normalizer: Normalizer
    window_seconds: float
    n_windows: int
    l_max: int
    t0: float

    def to_header(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "features",
            "feature_names": list(self.feature_names),
            "normalizer": {
                "min": self.normalizer.vmin.tolist(),
                "max": self.normalizer.vmax.tolist(),
                "log1p": self.normalizer.log1p.tolist(),
            },
            "window_seconds": self.window_seconds,
            "n_windows": self.n_windows,
            "l_max": self.l_max,
            "t0": self.t0,
        }

    @classmethod
    def from_header(cls, header: dict, path: str) -> "FeaturesMeta":
        names = tuple(header["feature_names"])
        nz = header["normalizer"]
        normalizer = Normalizer(
            feature_names=names,
            vmin=np.asarray(nz["min"], dtype=np.float64),
            vmax=np.asarray(nz["max"], dtype=np.float64),
            log1p=np.asarray(nz["log1p"], dtype=bool),
        )
        if normalizer.vmin.shape != (len(names),):
            raise DataError(f"{path}: normalizer stats do not match feature names")
        return cls(feature_names=names, normalizer=normalizer,
                   window_seconds=float(header["window_seconds"]),
                   n_windows=int(header["n_windows"]),
                   l_max=int(header["l_max"]), t0=float(header["t0"]))


def _check_features_header(header: dict, path: str) -> None:
    if header.get("kind") != "features":
        raise DataError(f"{path}: expected a features file, "
                        f"found kind={header.get('kind')!r}")
    if header.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format_version "
                        f"{header.get('format_version')!r}")


def write_features_csv(path: str | Path, meta: FeaturesMeta,
                       rows: Iterable[FeatureRow]) -> None:
    header_json = json.dumps(meta.to_header(), sort_keys=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"#META {header_json}\n")
        writer = csv.writer(fh)
        writer.writerow(["src_addr", "window_index", "first_seen", "label",
                         *meta.feature_names])
        for row in rows:
            writer.writerow([row.src_addr, row.window_index, repr(row.first_seen),
                             row.label.value, *[repr(float(v)) for v in row.values]])


def read_features_csv(path: str | Path) -> tuple[FeaturesMeta, list[FeatureRow]]:
    p = Path(path)
    with open(p, newline="") as fh:
        first = fh.readline()
        if not first.startswith("#META "):
            raise DataError(f"{p}: missing #META header line")
        header = json.loads(first[len("#META "):])
        _check_features_header(header, str(p))
        meta = FeaturesMeta.from_header(header, str(p))
        reader = csv.reader(fh)
        columns = next(reader, None)
        expected = ["src_addr", "window_index", "first_seen", "label",
                    *meta.feature_names]
        if columns != expected:
            raise DataError(f"{p}: column header does not match feature names")
        rows = []
        for rec in reader:
            values = np.array([float(v) for v in rec[4:]], dtype=np.float64)
            rows.append(FeatureRow(src_addr=rec[0], window_index=int(rec[1]),
                                   first_seen=float(rec[2]),
                                   label=GroundTruth(rec[3]), values=values))
    return meta, rows


def write_features_binary(path: str | Path, meta: FeaturesMeta,
                          rows: Sequence[FeatureRow]) -> None:
    header = json.dumps(meta.to_header(), sort_keys=True).encode()
    f_dim = len(meta.feature_names)
    with open(path, "wb") as fh:
        fh.write(_BINARY_MAGIC)
        fh.write(struct.pack("<II", len(header), len(rows)))
        fh.write(header)
        for row in rows:
            addr = row.src_addr.encode()
            fh.write(struct.pack("<H", len(addr)))
            fh.write(addr)
            fh.write(struct.pack("<qdB", row.window_index, row.first_seen,
                                 _LABEL_CODES[row.label]))
            fh.write(struct.pack(f"<{f_dim}d", *row.values))


def read_features_binary(path: str | Path) -> tuple[FeaturesMeta, list[FeatureRow]]:
    p = Path(path)
    data = p.read_bytes()
    if data[:4] != _BINARY_MAGIC:
        raise DataError(f"{p}: not a binary features file (bad magic)")
    header_len, n_rows = struct.unpack_from("<II", data, 4)
    offset = 12
    header = json.loads(data[offset:offset + header_len].decode())
    _check_features_header(header, str(p))
    meta = FeaturesMeta.from_header(header, str(p))
    offset += header_len
    f_dim = len(meta.feature_names)
    rows = []
    try:
        for _ in range(n_rows):
            (addr_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            addr = data[offset:offset + addr_len].decode()
            offset += addr_len
            window_index, first_seen, code = struct.unpack_from("<qdB", data, offset)
            offset += struct.calcsize("<qdB")
            values = np.array(struct.unpack_from(f"<{f_dim}d", data, offset))
            offset += 8 * f_dim
            rows.append(FeatureRow(src_addr=addr, window_index=window_index,
                                   first_seen=first_seen,
                                   label=_CODE_LABELS[code], values=values))
    except (struct.error, KeyError) as exc:
        raise DataError(f"{p}: truncated or corrupt features file ({exc})")
    return meta, rows


def write_features(path: str | Path, meta: FeaturesMeta,
                   rows: Sequence[FeatureRow]) -> None:
    if str(path).endswith(".bin"):
        write_features_binary(path, meta, rows)
    else:
        write_features_csv(path, meta, rows)


def read_features(path: str | Path) -> tuple[FeaturesMeta, list[FeatureRow]]:
    if str(path).endswith(".bin"):
        return read_features_binary(path)
    return read_features_csv(path)


# ------------------------------------------------------------------ model

def _model_config(model: TrainedModel) -> dict:
    cfg = {
        "f_dim": model.params.f_dim,
        "hidden": (model.params.hidden if isinstance(model.params, RvaeParams)
                   else list(model.params.hidden)),
        "latent": model.params.latent,
        "l_max": model.l_max,
        "window_seconds": model.window_seconds,
        "n_windows": model.n_windows,
    }
    return cfg


def save_model(path: str | Path, model: TrainedModel) -> None:
    named = model.params.named_parameters()
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": "model",
        "arch": model.arch,
        "config": _model_config(model),
        "feature_names": list(model.feature_names),
        "normalizer": {
            "min": model.normalizer.vmin.tolist(),
            "max": model.normalizer.vmax.tolist(),
            "log1p": model.normalizer.log1p.tolist(),
        },
        "parameters": {
            name: {"shape": list(t.data.shape), "data": t.data.ravel().tolist()}
            for name, t in named.items()
        },
        "rng_seed": model.seed,
        "training_log_summary": model.train_summary,
    }
    dump_json(payload, path)


def load_model(path: str | Path) -> TrainedModel:
    payload = _load_json(path, "model")
    p = Path(path)
    arch = payload["arch"]
    cfg = payload["config"]
    rng = np.random.default_rng(0)  # placeholder init, overwritten below
    if arch == "rvae":
        params = RvaeParams.init(rng, int(cfg["f_dim"]), int(cfg["hidden"]),
                                 int(cfg["latent"]))
    elif arch == "mlp":
        params = MlpVaeParams.init(rng, int(cfg["f_dim"]),
                                   tuple(cfg["hidden"]), int(cfg["latent"]))
    else:
        raise DataError(f"{p}: unknown arch {arch!r}")
    named = params.named_parameters()
    stored = payload["parameters"]
    if set(named) != set(stored):
        missing = sorted(set(named) - set(stored))
        extra = sorted(set(stored) - set(named))
        raise DataError(f"{p}: parameter names do not match arch {arch!r} "
                        f"(missing {missing}, extra {extra})")
    for name, tensor in named.items():
        entry = stored[name]
        arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        if arr.shape != tensor.data.shape:
            raise DataError(f"{p}: parameter {name} has shape {arr.shape}, "
                            f"expected {tensor.data.shape}")
        tensor.data = arr
    names = tuple(payload["feature_names"])
    nz = payload["normalizer"]
    normalizer = Normalizer(feature_names=names,
                            vmin=np.asarray(nz["min"], dtype=np.float64),
                            vmax=np.asarray(nz["max"], dtype=np.float64),
                            log1p=np.asarray(nz["log1p"], dtype=bool))
    return TrainedModel(arch=arch, params=params, feature_names=names,
                        normalizer=normalizer,
                        window_seconds=float(cfg["window_seconds"]),
                        n_windows=int(cfg["n_windows"]), l_max=int(cfg["l_max"]),
                        seed=int(payload["rng_seed"]),
                        train_summary=payload["training_log_summary"])


# --------------------------------------------------------------- detector

def _pdf_payload(fit: FittedPdf) -> dict:
    return {"family": fit.family, "params": list(fit.shapes), "loc": fit.loc,
            "scale": fit.scale, "sse": fit.sse, "n": fit.n_samples}


def _pdf_from_payload(entry: dict, path: str) -> FittedPdf:
    family_by_name(entry["family"])  # validates the name
    return FittedPdf(family=entry["family"], shapes=tuple(entry["params"]),
                     loc=float(entry["loc"]), scale=float(entry["scale"]),
                     sse=float(entry["sse"]), n_samples=int(entry["n"]))


def save_detector(path: str | Path, det: DetectorModel) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": "detector",
        "pdf_normal": _pdf_payload(det.pdf_normal),
        "pdf_botnet": _pdf_payload(det.pdf_botnet),
        "tie_rule": det.tie_rule,
        "bins": det.bins,
        "min_samples": det.min_samples,
    }
    dump_json(payload, path)


def load_detector(path: str | Path) -> DetectorModel:
    payload = _load_json(path, "detector")
    return DetectorModel(
        pdf_normal=_pdf_from_payload(payload["pdf_normal"], str(path)),
        pdf_botnet=_pdf_from_payload(payload["pdf_botnet"], str(path)),
        tie_rule=payload["tie_rule"],
        bins=int(payload["bins"]),
        min_samples=int(payload["min_samples"]),
    )


# ----------------------------------------------------------------- scores

SCORES_HEADER = ("src_addr", "window_index", "first_seen", "label", "score")


def write_scores_csv(path: str | Path, scored: Iterable[ScoredWindow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCORES_HEADER)
        for s in scored:
            writer.writerow([s.src_addr, s.window_index, repr(s.first_seen),
                             s.label.value, repr(s.score)])


def read_scores_csv(path: str | Path) -> list[ScoredWindow]:
    p = Path(path)
    with open(p, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(SCORES_HEADER):
            raise DataError(f"{p}: not a scores file (bad column header)")
        out = []
        for rec in reader:
            out.append(ScoredWindow(src_addr=rec[0], window_index=int(rec[1]),
                                    first_seen=float(rec[2]),
                                    label=GroundTruth(rec[3]),
                                    score=float(rec[4])))
    return out


# -------------------------------------------------------------- decisions

def write_decisions_jsonl(path: str | Path, decisions: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        for record in decisions:
            fh.write(json.dumps(record, sort_keys=True, default=_to_jsonable))
            fh.write("\n")


def read_decisions_jsonl(path: str | Path) -> list[dict]:
    p = Path(path)
    out = []
    with open(p) as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"{p}:{i}: bad decision record ({exc})")
    return out


# ------------------------------------------------------------ run manifest

def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"),
                       default=_to_jsonable)
    return hashlib.sha256(canon.encode()).hexdigest()


def write_run_manifest(path: str | Path, stage: str, config: dict,
                       inputs: Sequence[str | Path],
                       outputs: Sequence[str | Path], seed: int | None) -> dict:
    """Reproducibility sidecar: hashes of config and inputs, no timestamps."""
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": "run-manifest",
        "stage": stage,
        "config": config,
        "config_sha256": config_hash(config),
        "inputs": {str(p): sha256_of(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "versions": {
            "botdet": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    dump_json(payload, path)
    return payload


def read_run_manifest(path: str | Path) -> dict:
    return _load_json(path, "run-manifest")
