"""File formats, feature hashing, and model persistence.

Formats (documented with examples in docs/file_formats.md):

* events: JSON Lines, one object per line with string ``user`` and
  ``brand`` ids, a binary ``y`` label, and a feature array ``x``;
* ground truth sidecar: single JSON document of true latents;
* checkpoint: single canonical JSON document, schema version 1;
* metrics report: JSON summary of a cross-validation run;
* ELBO trace: two-column CSV ``iteration,elbo``.

All writers emit canonical JSON (sorted keys, compact separators, full
round-trip float precision), so identical inputs produce byte-identical
files.
"""

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .inference import FitReport
from .model import (
    Dataset,
    EventRecord,
    GammaPosterior,
    GaussianPosterior,
    HyperParams,
    Responsibilities,
    VariationalState,
)

__all__ = [
    "EventParseError",
    "CheckpointError",
    "Checkpoint",
    "CHECKPOINT_SCHEMA_VERSION",
    "load_events",
    "save_events",
    "load_candidates",
    "hash_features",
    "save_checkpoint",
    "load_checkpoint",
    "save_ground_truth",
    "save_metrics_report",
    "save_ranking",
    "save_trace_csv",
]

CHECKPOINT_SCHEMA_VERSION = 1


class EventParseError(ValueError):
    """Raised when an event file cannot be parsed."""


class CheckpointError(ValueError):
    """Raised when a checkpoint file is malformed or violates invariants."""


def _dump_canonical(obj, path):
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# events
# ---------------------------------------------------------------------------


def _parse_event_line(obj, lineno, feature_dim, require_label=True):
    if not isinstance(obj, dict):
        raise EventParseError(f"line {lineno}: expected a JSON object")
    for key in ("user", "brand", "x") + (("y",) if require_label else ()):
        if key not in obj:
            raise EventParseError(f"line {lineno}: missing field {key!r}")
    user, brand, x = obj["user"], obj["brand"], obj["x"]
    if not isinstance(user, str) or not isinstance(brand, str):
        raise EventParseError(f"line {lineno}: user and brand must be strings")
    if not isinstance(x, list) or not all(isinstance(v, (int, float)) and
                                          not isinstance(v, bool) for v in x):
        raise EventParseError(f"line {lineno}: x must be an array of numbers")
    xv = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xv)):
        raise EventParseError(f"line {lineno}: x contains non-finite values")
    if feature_dim is not None and xv.size != feature_dim:
        raise EventParseError(
            f"line {lineno}: feature length {xv.size} != {feature_dim}"
        )
    y = obj.get("y")
    if y is not None or require_label:
        if isinstance(y, bool) or y not in (0, 1):
            raise EventParseError(f"line {lineno}: label y must be 0 or 1, got {y!r}")
    return user, brand, xv, y


def load_events(path) -> Dataset:
    """Read a JSON-Lines event file into a Dataset.

    String ids are dictionary-encoded to dense indices in first-seen order;
    the feature dimension is inferred from the first record and enforced on
    the rest.  Malformed input raises EventParseError with the line number.
    """
    user_index, brand_index = {}, {}
    events = []
    feature_dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise EventParseError(f"line {lineno}: invalid JSON ({err.msg})") from None
            user, brand, xv, y = _parse_event_line(obj, lineno, feature_dim)
            feature_dim = xv.size if feature_dim is None else feature_dim
            uid = user_index.setdefault(user, len(user_index))
            bid = brand_index.setdefault(brand, len(brand_index))
            events.append(EventRecord(x=xv, brand=bid, user=uid, y=int(y)))
    if not events:
        raise EventParseError("empty dataset")
    return Dataset(events=events, num_users=len(user_index), num_brands=len(brand_index),
                   feature_dim=feature_dim, user_ids=list(user_index),
                   brand_ids=list(brand_index))


def save_events(data: Dataset, path):
    """Write a Dataset as JSON Lines; indices become "u<k>"/"b<i>" ids unless
    the dataset carries original string ids."""
    with open(path, "w", encoding="utf-8") as fh:
        for e in data.events:
            user = data.user_ids[e.user] if data.user_ids else f"u{e.user}"
            brand = data.brand_ids[e.brand] if data.brand_ids else f"b{e.brand}"
            obj = {"brand": brand, "user": user, "x": [float(v) for v in e.x], "y": int(e.y)}
            fh.write(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n")


def load_candidates(path):
    """Read candidate items for ranking: same line format as events, ``y``
    optional.  Returns (item, ...) tuples of (index, x, brand_id, user_id)."""
    out = []
    feature_dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise EventParseError(f"line {lineno}: invalid JSON ({err.msg})") from None
            user, brand, xv, _ = _parse_event_line(obj, lineno, feature_dim,
                                                   require_label=False)
            feature_dim = xv.size if feature_dim is None else feature_dim
            out.append((len(out), xv, brand, user))
    if not out:
        raise EventParseError("empty candidate file")
    return out


# ---------------------------------------------------------------------------
# feature hashing
# ---------------------------------------------------------------------------


def hash_features(tokens, width: int) -> np.ndarray:
    """Signed feature hashing of (name, value) token pairs.

    Each token is rendered as ``name \\x1f value`` and digested with
    BLAKE2b (16-byte digest): bytes 0-7 little-endian pick the bucket
    (mod width), the low bit of byte 8 picks the sign.  Token order does
    not matter; the result is identical across runs and platforms.
    """
    if width < 1:
        raise ValueError("width must be >= 1")
    vec = np.zeros(width)
    for name, value in tokens:
        digest = hashlib.blake2b(f"{name}\x1f{value}".encode("utf-8"),
                                 digest_size=16).digest()
        bucket = int.from_bytes(digest[:8], "little") % width
        sign = 1.0 if digest[8] & 1 else -1.0
        vec[bucket] += sign
    return vec


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    """A fitted model with everything needed to rank: state, hyper-parameters,
    dataset dimensions, fit diagnostics, and the id dictionaries."""

    schema_version: int
    hyperparams: HyperParams
    state: VariationalState
    num_users: int
    num_brands: int
    fit_report: FitReport
    user_ids: list | None = None
    brand_ids: list | None = None


def _gaussian_to_obj(g: GaussianPosterior):
    if g.isotropic:
        return {"mean": [float(v) for v in g.mean], "iso_var": float(g.cov)}
    return {"mean": [float(v) for v in g.mean],
            "cov": [[float(v) for v in row] for row in g.cov]}


def _gaussian_from_obj(obj) -> GaussianPosterior:
    if "iso_var" in obj:
        return GaussianPosterior(np.asarray(obj["mean"], dtype=float), float(obj["iso_var"]))
    return GaussianPosterior(np.asarray(obj["mean"], dtype=float),
                             np.asarray(obj["cov"], dtype=float))


def save_checkpoint(state: VariationalState, meta: dict, path):
    """Persist a fitted state as canonical JSON.

    ``meta`` must provide "hyperparams" (HyperParams), "num_users",
    "num_brands" and "fit_report" (FitReport); "user_ids"/"brand_ids" are
    optional.  Saving, loading and saving again produces a byte-identical
    file.
    """
    hp: HyperParams = meta["hyperparams"]
    report: FitReport = meta["fit_report"]
    doc = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "hyperparams": {
            "num_styles": hp.num_styles,
            "feature_dim": hp.feature_dim,
            "gamma0": [float(v) for v in hp.gamma0],
            "alpha0": float(hp.alpha0),
            "beta0": float(hp.beta0),
            "max_iters": hp.max_iters,
            "rel_tol": float(hp.rel_tol),
        },
        "num_users": int(meta["num_users"]),
        "num_brands": int(meta["num_brands"]),
        "state": {
            "users": [_gaussian_to_obj(g) for g in state.users],
            "brands": [_gaussian_to_obj(g) for g in state.brands],
            "styles": [_gaussian_to_obj(g) for g in state.styles],
            "w": _gaussian_to_obj(state.w),
            "theta_gamma": [float(v) for v in state.theta_gamma],
            "resp": [[float(v) for v in row] for row in state.resp.mu],
            "prec_u": {"shape": state.prec_u.shape, "rate": state.prec_u.rate},
            "prec_b": {"shape": state.prec_b.shape, "rate": state.prec_b.rate},
            "prec_s": {"shape": state.prec_s.shape, "rate": state.prec_s.rate},
            "prec_w": {"shape": state.prec_w.shape, "rate": state.prec_w.rate},
            "xi": [float(v) for v in state.xi],
        },
        "fit_report": {
            "elbo_trace": [float(v) for v in report.elbo_trace],
            "iterations_run": report.iterations_run,
            "converged": bool(report.converged),
        },
        "user_ids": meta.get("user_ids"),
        "brand_ids": meta.get("brand_ids"),
    }
    _dump_canonical(doc, path)


def load_checkpoint(path) -> Checkpoint:
    """Load and validate a checkpoint; any invariant violation raises
    CheckpointError."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise CheckpointError(f"invalid JSON: {err.msg}") from None

    version = doc.get("schema_version")
    if version != CHECKPOINT_SCHEMA_VERSION:
        raise CheckpointError(
            f"unsupported schema_version {version!r} (expected {CHECKPOINT_SCHEMA_VERSION})"
        )
    try:
        hp_obj = doc["hyperparams"]
        hp = HyperParams(
            num_styles=hp_obj["num_styles"],
            feature_dim=hp_obj["feature_dim"],
            gamma0=np.asarray(hp_obj["gamma0"], dtype=float),
            alpha0=hp_obj["alpha0"],
            beta0=hp_obj["beta0"],
            max_iters=hp_obj["max_iters"],
            rel_tol=hp_obj["rel_tol"],
        )
        s = doc["state"]
        state = VariationalState(
            users=[_gaussian_from_obj(o) for o in s["users"]],
            brands=[_gaussian_from_obj(o) for o in s["brands"]],
            styles=[_gaussian_from_obj(o) for o in s["styles"]],
            w=_gaussian_from_obj(s["w"]),
            theta_gamma=np.asarray(s["theta_gamma"], dtype=float),
            resp=Responsibilities(np.asarray(s["resp"], dtype=float)),
            prec_u=GammaPosterior(**s["prec_u"]),
            prec_b=GammaPosterior(**s["prec_b"]),
            prec_s=GammaPosterior(**s["prec_s"]),
            prec_w=GammaPosterior(**s["prec_w"]),
            xi=np.asarray(s["xi"], dtype=float),
        )
        report = FitReport(
            elbo_trace=list(doc["fit_report"]["elbo_trace"]),
            iterations_run=doc["fit_report"]["iterations_run"],
            converged=doc["fit_report"]["converged"],
        )
        num_users = doc["num_users"]
        num_brands = doc["num_brands"]
        user_ids = doc.get("user_ids")
        brand_ids = doc.get("brand_ids")
    except (KeyError, TypeError) as err:
        raise CheckpointError(f"malformed checkpoint: {err}") from None

    try:
        state.validate()
    except ValueError as err:
        raise CheckpointError(f"invariant violation: {err}") from None
    if state.num_users != num_users or state.num_brands != num_brands:
        raise CheckpointError("state dimensions disagree with recorded dimensions")
    if state.num_styles != hp.num_styles or state.dim != hp.feature_dim:
        raise CheckpointError("state dimensions disagree with hyperparams")

    return Checkpoint(schema_version=version, hyperparams=hp, state=state,
                      num_users=num_users, num_brands=num_brands, fit_report=report,
                      user_ids=user_ids, brand_ids=brand_ids)


# ---------------------------------------------------------------------------
# other artifacts
# ---------------------------------------------------------------------------


def save_ground_truth(truth, true_precisions, feature_scale, path):
    """Write the generator's ground-truth sidecar JSON."""
    prec_u, prec_b, prec_s, prec_w = (float(p) for p in true_precisions)
    doc = {
        "style_vectors": [[float(v) for v in row] for row in truth.style_vectors],
        "brand_vectors": [[float(v) for v in row] for row in truth.brand_vectors],
        "user_vectors": [[float(v) for v in row] for row in truth.user_vectors],
        "style_assignments": [int(v) for v in truth.style_assignments],
        "theta": [float(v) for v in truth.theta],
        "w": [float(v) for v in truth.w],
        "true_precisions": {"user": prec_u, "brand": prec_b, "style": prec_s, "w": prec_w},
        "feature_scale": float(feature_scale),
    }
    _dump_canonical(doc, path)


def save_metrics_report(summary: dict, path):
    """Write a cross-validation summary (see CrossValidationResult.summary)."""
    _dump_canonical(summary, path)


def save_ranking(doc: dict, path):
    """Write a ranking result document as canonical JSON."""
    _dump_canonical(doc, path)


def save_trace_csv(trace, path):
    """Write the ELBO trace as ``iteration,elbo`` CSV."""
    lines = ["iteration,elbo"]
    lines += [f"{i},{float(v)!r}" for i, v in enumerate(trace)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
