"""Canonical on-disk formats: model JSON, trajectory CSV, Bode CSV, manifests.

Every float is printed with one fixed 17-significant-digit formatter and
keys are emitted in a fixed order, so serialize -> parse -> serialize is
byte-identical and repeated runs with the same inputs produce byte-identical
files.  Output files are written atomically (temp file + rename) and each
CLI invocation emits a manifest naming its inputs, outputs, seed, version,
and the digest of its effective configuration.
"""

import csv
import hashlib
import io
import json
import os
import tempfile

import numpy as np

from .errors import DimensionError
from .model import FosModel, MultiTermNetwork
from .simulate import Trajectory

__all__ = [
    "fmt_float",
    "canonical_json",
    "config_digest",
    "atomic_write",
    "write_model",
    "read_model",
    "write_trajectory",
    "read_trajectory",
    "write_bode",
    "write_manifest",
]


def fmt_float(x: float) -> str:
    """Fixed 17-significant-digit decimal form (round-trips every float64)."""
    return format(float(x), ".17g")


def canonical_json(obj) -> str:
    """Deterministic JSON: insertion-ordered dicts, fixed float formatting."""
    out = io.StringIO()
    _emit(obj, out)
    return out.getvalue()


def _emit(obj, out) -> None:
    if isinstance(obj, dict):
        out.write("{")
        for i, (key, val) in enumerate(obj.items()):
            if i:
                out.write(", ")
            out.write(json.dumps(str(key)))
            out.write(": ")
            _emit(val, out)
        out.write("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        items = obj.tolist() if isinstance(obj, np.ndarray) else obj
        out.write("[")
        for i, val in enumerate(items):
            if i:
                out.write(", ")
            _emit(val, out)
        out.write("]")
    elif isinstance(obj, bool):
        out.write("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.write(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.write(fmt_float(obj))
    elif obj is None:
        out.write("null")
    else:
        out.write(json.dumps(str(obj)))


def config_digest(config: dict) -> str:
    """SHA-256 hex digest of the canonical bytes of a configuration dict."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def atomic_write(path: str, text: str) -> None:
    """Write-then-rename so readers never observe a partial file."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _matrix_list(M: np.ndarray) -> list:
    return [list(row) for row in np.atleast_2d(M)]


def model_to_dict(model) -> dict:
    if isinstance(model, FosModel):
        return {
            "n": model.n,
            "m": model.m,
            "alpha": list(model.alpha),
            "A": _matrix_list(model.A),
            "B": _matrix_list(model.B),
            "Bw": _matrix_list(model.Bw),
        }
    if isinstance(model, MultiTermNetwork):
        def terms(pairs):
            return [{"exponent": e, "matrix": _matrix_list(M)} for e, M in pairs]

        return {
            "state_terms": terms(model.state_terms),
            "input_terms": terms(model.input_terms),
            "disturbance_terms": terms(model.disturbance_terms),
            "C": model.C.tolist() if model.C.ndim == 3 else _matrix_list(model.C),
        }
    raise DimensionError(f"cannot serialize object of type {type(model).__name__}")


def model_from_dict(data: dict):
    if "state_terms" in data:
        def terms(items):
            return tuple((item["exponent"], np.asarray(item["matrix"], dtype=float))
                         for item in items)

        return MultiTermNetwork(
            state_terms=terms(data["state_terms"]),
            input_terms=terms(data.get("input_terms", ())),
            disturbance_terms=terms(data.get("disturbance_terms", ())),
            C=np.asarray(data["C"], dtype=float) if data.get("C") is not None else None,
        )
    if "A" not in data or "alpha" not in data:
        raise DimensionError("model file lacks the required 'alpha' and 'A' fields")
    model = FosModel(
        alpha=np.asarray(data["alpha"], dtype=float),
        A=np.asarray(data["A"], dtype=float),
        B=np.asarray(data["B"], dtype=float) if data.get("B") is not None else None,
        Bw=np.asarray(data["Bw"], dtype=float) if data.get("Bw") is not None else None,
    )
    if "n" in data and int(data["n"]) != model.n:
        raise DimensionError(f"declared n={data['n']} but A is {model.A.shape}")
    if "m" in data and int(data["m"]) != model.m:
        raise DimensionError(f"declared m={data['m']} but B is {model.B.shape}")
    return model


def write_model(path: str, model) -> None:
    atomic_write(path, canonical_json(model_to_dict(model)) + "\n")


def read_model(path: str):
    with open(path, "r") as fh:
        return model_from_dict(json.load(fh))


def write_trajectory(path: str, traj: Trajectory) -> None:
    """CSV with header t,x1..xn[,u1..um][,y1..yq]; the last input row is blank."""
    n = traj.n
    header = ["t"] + [f"x{i + 1}" for i in range(n)]
    m = traj.inputs.shape[1] if traj.inputs is not None else 0
    q = traj.outputs.shape[1] if traj.outputs is not None else 0
    header += [f"u{i + 1}" for i in range(m)]
    header += [f"y{i + 1}" for i in range(q)]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for k in range(traj.K + 1):
        row = [fmt_float(k * traj.dt)]
        row += [fmt_float(v) for v in traj.states[k]]
        if m:
            row += [fmt_float(v) for v in traj.inputs[k]] if k < traj.K else [""] * m
        if q:
            row += [fmt_float(v) for v in traj.outputs[k]]
        writer.writerow(row)
    atomic_write(path, out.getvalue())


def read_trajectory(path: str) -> Trajectory:
    """Parse a trajectory CSV; missing u/y blocks and blank cells are tolerated."""
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DimensionError(f"{path}: empty trajectory file") from None
        rows = [r for r in reader if r and any(cell.strip() for cell in r)]
    cols = {name: idx for idx, name in enumerate(header)}
    if "t" not in cols:
        raise DimensionError(f"{path}: trajectory header lacks the time column")
    x_idx = [cols[h] for h in header if h.startswith("x")]
    u_idx = [cols[h] for h in header if h.startswith("u")]
    y_idx = [cols[h] for h in header if h.startswith("y")]
    if not x_idx:
        raise DimensionError(f"{path}: trajectory header lacks state columns")
    T = len(rows)
    states = np.array([[float(r[i]) for i in x_idx] for r in rows])
    outputs = np.array([[float(r[i]) for i in y_idx] for r in rows]) if y_idx else None
    inputs = None
    if u_idx:
        vals = []
        for r in rows[: T - 1]:
            vals.append([float(r[i]) if r[i].strip() else 0.0 for i in u_idx])
        inputs = np.array(vals) if vals else None
    dt = 1.0
    if T >= 2:
        t0, t1 = float(rows[0][cols["t"]]), float(rows[1][cols["t"]])
        dt = t1 - t0 if t1 > t0 else 1.0
    return Trajectory(states=states, inputs=inputs, outputs=outputs, dt=dt)


def write_bode(path: str, freq_response) -> None:
    """CSV columns omega,re,im,mag_db,phase_deg."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["omega", "re", "im", "mag_db", "phase_deg"])
    for w, h, mag, ph in zip(
        freq_response.omega, freq_response.response,
        freq_response.mag_db, freq_response.phase_deg,
    ):
        writer.writerow([fmt_float(w), fmt_float(h.real), fmt_float(h.imag),
                         fmt_float(mag), fmt_float(ph)])
    atomic_write(path, out.getvalue())


#: Config keys that only name result files; excluded from the digest so the
#: digest identifies the computation, not where its outputs land.
_OUTPUT_KEYS = frozenset({"out", "out_model", "out_diag"})


def write_manifest(out_path: str, subcommand: str, inputs: dict, outputs: dict,
                   seed, config: dict, version: str) -> str:
    """Write <out>.manifest.json describing one CLI invocation; returns its path."""
    effective = {k: v for k, v in sorted(config.items()) if k not in _OUTPUT_KEYS}
    manifest = {
        "subcommand": subcommand,
        "inputs": inputs,
        "outputs": outputs,
        "seed": seed,
        "version": version,
        "config_digest": config_digest(effective),
    }
    path = out_path + ".manifest.json"
    atomic_write(path, canonical_json(manifest) + "\n")
    return path
