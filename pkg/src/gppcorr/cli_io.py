"""File formats: model documents (JSON), field-sample CSVs and report tables.

Model document (``schema_version`` 1)::

    {"schema_version": 1, "family": "parsimonious_matern", "dim": 2,
     "sigma": [[...]], "precision": [[...]], "nus": [...], "phi": 10.0}

``sigma`` or ``precision`` may be given alone; writers emit both.  See the
README for every family's fields.
"""
from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import math
import os
import platform
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .covmodels import (
    LMC,
    DiscretizedConvolution,
    InsideOut,
    Kernel,
    LocationSet,
    ParsimoniousMatern,
    ProcessConvolution,
    Separable,
    SigmaPair,
)
from .experiments import Report
from .gaussian import FieldSample
from .specialfn import MaternParams

SCHEMA_VERSION = 1
FAMILIES = ("separable", "parsimonious_matern", "process_convolution",
            "discretized_convolution", "inside_out", "lmc")


class FormatError(ValueError):
    """Malformed model document or data file."""


# ---------------------------------------------------------------------------
# model documents


def _matern(d) -> MaternParams:
    try:
        return MaternParams(float(d["nu"]), float(d["phi"]))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"Matérn parameters need 'nu' and 'phi': {d!r}") from exc


def _sigma_pair(doc) -> SigmaPair:
    if "sigma" in doc and "precision" in doc:
        return SigmaPair(np.array(doc["sigma"], float), np.array(doc["precision"], float))
    if "sigma" in doc:
        return SigmaPair.from_sigma(np.array(doc["sigma"], float))
    if "precision" in doc:
        return SigmaPair.from_precision(np.array(doc["precision"], float))
    raise FormatError("model needs 'sigma' or 'precision'")


def model_from_dict(doc: dict):
    """Build a cross-covariance model from its JSON-compatible document."""
    if not isinstance(doc, dict):
        raise FormatError("model document must be a JSON object")
    ver = doc.get("schema_version")
    if ver != SCHEMA_VERSION:
        raise FormatError(f"unsupported schema_version {ver!r} (expected {SCHEMA_VERSION})")
    fam = doc.get("family")
    dim = int(doc.get("dim", 2))
    try:
        if fam == "lmc":
            return LMC(np.array(doc["loadings"], float), tuple(_matern(c) for c in doc["corrs"]), dim)
        sp = _sigma_pair(doc)
        if fam == "separable":
            return Separable(sp, _matern(doc["corr"]), dim)
        if fam == "parsimonious_matern":
            return ParsimoniousMatern(sp, tuple(doc["nus"]), float(doc["phi"]), dim)
        kernels = tuple(Kernel(k["family"], float(k["bandwidth"]), dim) for k in doc.get("kernels", ()))
        if fam == "process_convolution":
            return ProcessConvolution(sp, kernels)
        if fam == "discretized_convolution":
            areas = doc.get("areas")
            return DiscretizedConvolution(sp, kernels, LocationSet(np.array(doc["knots"], float)),
                                          None if areas is None else np.array(areas, float))
        if fam == "inside_out":
            return InsideOut(sp, tuple(_matern(c) for c in doc["corrs"]),
                             LocationSet(np.array(doc["reference"], float)))
    except KeyError as exc:
        raise FormatError(f"family {fam!r} is missing field {exc}") from None
    raise FormatError(f"unknown model family {fam!r}; expected one of {', '.join(FAMILIES)}")


def model_to_dict(model) -> dict:
    """JSON-compatible document; floats are written exactly (shortest repr)."""
    doc = {"schema_version": SCHEMA_VERSION, "family": model.family, "dim": int(model.dim)}
    mp = lambda p: {"nu": p.nu, "phi": p.phi}
    if isinstance(model, LMC):
        doc.update(loadings=model.loadings.tolist(), corrs=[mp(p) for p in model.corrs])
        return doc
    doc.update(sigma=model.sigma.tolist(), precision=model.sp.q_mat.tolist())
    if isinstance(model, Separable):
        doc["corr"] = mp(model.corr)
    elif isinstance(model, ParsimoniousMatern):
        doc.update(nus=list(model.nus), phi=model.phi)
    elif isinstance(model, (ProcessConvolution, DiscretizedConvolution)):
        doc["kernels"] = [{"family": k.family, "bandwidth": k.bandwidth} for k in model.kernels]
        if isinstance(model, DiscretizedConvolution):
            doc.update(knots=model.knots.coords.tolist(), areas=model.areas.tolist())
    elif isinstance(model, InsideOut):
        doc.update(corrs=[mp(p) for p in model.corrs], reference=model.reference.coords.tolist())
    return doc


def models_equal(a, b) -> bool:
    """Structural equality of two models (exact float comparison)."""
    return model_to_dict(a) == model_to_dict(b)


def load_model(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    return model_from_dict(doc)


def save_model(model, path) -> Path:
    return atomic_write(path, json.dumps(model_to_dict(model), indent=2) + "\n")


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None


# ---------------------------------------------------------------------------
# field samples


_COORD_NAMES = ("x", "y", "z")


def fmt_float(v) -> str:
    return "%.17g" % v


def read_field_csv(path) -> tuple[FieldSample, tuple]:
    """Read ``x, y[, z], comp_1, ..., comp_q``; empty cells are missing.

    Returns the sample and the component names (header order).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    d = 0
    while d < len(header) and d < 3 and header[d].lower() == _COORD_NAMES[d]:
        d += 1
    if d < 1:
        raise FormatError(f"{path}: header must start with coordinate columns x, y[, z]")
    names = tuple(header[d:])
    if not names:
        raise FormatError(f"{path}: no component columns")
    coords, vals, mask = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise FormatError(f"{path}:{lineno}: expected {len(header)} cells, found {len(row)}")
        try:
            coords.append([float(c) for c in row[:d]])
            cells = row[d:]
            vals.append([float(c) if c.strip() else 0.0 for c in cells])
            mask.append([bool(c.strip()) for c in cells])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
    if not coords:
        raise FormatError(f"{path}: no data rows")
    locs = LocationSet(np.array(coords))
    if locs.has_duplicates():
        warnings.warn(f"{path}: duplicate coordinates present", RuntimeWarning, stacklevel=2)
    return FieldSample(np.array(vals), locs, np.array(mask)), names


def write_field_csv(sample: FieldSample, path, names=None) -> Path:
    names = names or tuple(f"y{j + 1}" for j in range(sample.q))
    if len(names) != sample.q:
        raise ValueError("need one name per component")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(_COORD_NAMES[: sample.locs.d]) + list(names))
    for a in range(sample.n):
        cells = [fmt_float(c) for c in sample.locs.coords[a]]
        cells += [fmt_float(v) if m else "" for v, m in zip(sample.values[a], sample.mask[a])]
        w.writerow(cells)
    return atomic_write(path, buf.getvalue())


# ---------------------------------------------------------------------------
# reports


def atomic_write(path, text: str) -> Path:
    """Write UTF-8 text with LF newlines via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "inf" if math.isinf(v) and v > 0 else fmt_float(v)
    return str(v)


def table_to_csv(table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


@dataclass
class RunManifest:
    """Everything needed to re-run a command, plus wall-clock stamps."""

    command: str
    argv: list
    config: dict
    master_seed: int | None
    started: str
    finished: str = ""
    notes: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    tool_version: str = __version__

    def to_dict(self) -> dict:
        return _jsonable({
            "tool": "gppcorr",
            "tool_version": self.tool_version,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "command": self.command,
            "argv": self.argv,
            "config": self.config,
            "master_seed": self.master_seed,
            "started": self.started,
            "finished": self.finished,
            "divergence_notes": self.notes,
            "summary": self.summary,
            "files": self.files,
        })


MANIFEST_NAME = "manifest.json"
# fields that legitimately differ between otherwise identical runs
VOLATILE_KEYS = ("started", "finished", "argv")


def now_iso() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_tables(report: Report | None, out_dir, manifest: RunManifest) -> list:
    """Write one CSV per table plus ``manifest.json``; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    if report is not None:
        for name in sorted(report.tables):
            paths.append(atomic_write(out / f"{name}.csv", table_to_csv(report.tables[name])))
        manifest.notes = list(report.notes)
        manifest.summary = report.summary
        if not manifest.config:
            manifest.config = report.config
    manifest.files = [p.name for p in paths]
    manifest.finished = now_iso()
    paths.append(atomic_write(out / MANIFEST_NAME, json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n"))
    return paths
