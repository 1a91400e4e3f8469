"""File formats: the binary artifact container, CSV tables and INI configs.

Container layout (all integers little-endian)::

    magic       8 bytes  b"BATROM\\x1a\\n"
    version     uint16
    kind        uint16 length + utf-8
    signature   uint16 length + utf-8   (mesh signature)
    config hash uint16 length + utf-8
    count       uint32
    sections    count times:
        name    uint16 length + utf-8
        dtype   uint8  (0 float64, 1 int64, 2 raw bytes)
        ndim    uint8
        dims    uint64 * ndim
        payload little-endian data, C order
"""
from __future__ import annotations

import configparser
import csv
import io as _io
import json
import struct
from pathlib import Path

import numpy as np

from .fom import Trajectory, cell_voltage, state_of_charge
from .mesh import COMPONENTS, PseudoMesh
from .model import REGIONS, CellConfig
from .pod import BasisMatrix

MAGIC = b"BATROM\x1a\n"
FORMAT_VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<i8"), 2: np.dtype("u1")}
_CODES = {"f": 0, "i": 1, "u": 2}


class ContainerError(ValueError):
    """Malformed container or a mismatch with the expected mesh or config."""


# ---------------------------------------------------------------------------
# container primitives
# ---------------------------------------------------------------------------

def _pack_str(s: str) -> bytes:
    b = s.encode()
    return struct.pack("<H", len(b)) + b


def _read_str(f) -> str:
    (n,) = struct.unpack("<H", _read(f, 2))
    return _read(f, n).decode()


def _read(f, n: int) -> bytes:
    b = f.read(n)
    if len(b) != n:
        raise ContainerError("truncated container")
    return b


def write_container(path, kind: str, signature: str, config_hash: str, sections: dict):
    """Write named arrays (float64, int64 or uint8) to ``path``."""
    buf = _io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", FORMAT_VERSION))
    for s in (kind, signature, config_hash):
        buf.write(_pack_str(s))
    buf.write(struct.pack("<I", len(sections)))
    for name, arr in sections.items():
        arr = np.asarray(arr)
        code = _CODES.get(arr.dtype.kind)
        if code is None:
            raise TypeError(f"section {name!r}: unsupported dtype {arr.dtype}")
        arr = np.asarray(arr, dtype=_DTYPES[code], order="C")  # keeps 0-d shapes
        buf.write(_pack_str(name))
        buf.write(struct.pack("<BB", code, arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    Path(path).write_bytes(buf.getvalue())


def read_container(path):
    """Return ``(kind, signature, config_hash, sections)``."""
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise ContainerError(f"{path}: not a batrom container")
        (version,) = struct.unpack("<H", _read(f, 2))
        if version != FORMAT_VERSION:
            raise ContainerError(f"{path}: unsupported format version {version}")
        kind, signature, chash = _read_str(f), _read_str(f), _read_str(f)
        (count,) = struct.unpack("<I", _read(f, 4))
        sections = {}
        for _ in range(count):
            name = _read_str(f)
            code, ndim = struct.unpack("<BB", _read(f, 2))
            if code not in _DTYPES:
                raise ContainerError(f"section {name!r}: unknown dtype code {code}")
            shape = struct.unpack(f"<{ndim}Q", _read(f, 8 * ndim))
            dt = _DTYPES[code]
            n = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            sections[name] = np.frombuffer(_read(f, n * dt.itemsize), dtype=dt).reshape(shape).copy()
        if f.read(1):
            raise ContainerError(f"{path}: trailing bytes after the last section")
    return kind, signature, chash, sections


def _json_section(obj) -> np.ndarray:
    return np.frombuffer(json.dumps(obj, sort_keys=True).encode(), dtype=np.uint8)


def _from_json_section(arr) -> dict:
    return json.loads(arr.tobytes().decode())


def _mesh_dict(mesh: PseudoMesh) -> dict:
    return {"n_macro": mesh.n_macro, "n_micro": mesh.n_micro, "widths": list(mesh.widths)}


def _check(signature, chash, mesh, config, expected_mesh, expected_config):
    if signature != mesh.signature:
        raise ContainerError("stored mesh signature does not match the stored mesh")
    if chash != config.config_hash():
        raise ContainerError("stored config hash does not match the stored config")
    if expected_mesh is not None and expected_mesh.signature != signature:
        raise ContainerError(f"mesh mismatch: file {signature}, expected {expected_mesh.signature}")
    if expected_config is not None and expected_config.config_hash() != chash:
        raise ContainerError("config mismatch: the artifact was built for another parameter set")


# ---------------------------------------------------------------------------
# artifacts and state dumps
# ---------------------------------------------------------------------------

def save_artifact(artifact, path):
    """Persist a :class:`~batrom.rom.RomArtifact`."""
    meta = {"config": artifact.config.to_dict(), "mesh": _mesh_dict(artifact.mesh),
            "metadata": artifact.metadata}
    sections = {"meta": _json_section(meta)}
    projected = artifact.projected()
    for c in COMPONENTS:
        sections[f"basis/{c}/modes"] = artifact.bases[c].modes
        sections[f"basis/{c}/sv"] = artifact.bases[c].singular_values
        sections[f"collateral/{c}/modes"] = artifact.collateral[c].modes
        sections[f"collateral/{c}/sv"] = artifact.collateral[c].singular_values
        sections[f"points/{c}/indices"] = artifact.points[c].indices
        sections[f"points/{c}/matrix"] = artifact.points[c].matrix
        sections[f"projected/{c}"] = projected[c]
    write_container(path, "rom-artifact", artifact.mesh_signature, artifact.config_hash, sections)


def load_artifact(path, mesh: PseudoMesh | None = None, config: CellConfig | None = None):
    """Load an artifact, optionally checking it against the expected mesh and config."""
    from .rom import InterpolationPoints, RomArtifact

    kind, signature, chash, s = read_container(path)
    if kind != "rom-artifact":
        raise ContainerError(f"{path}: holds {kind!r}, not a reduced model")
    meta = _from_json_section(s["meta"])
    cfg = CellConfig.from_dict(meta["config"])
    m = meta["mesh"]
    pmesh = PseudoMesh(m["n_macro"], m["n_micro"], tuple(m["widths"]))
    _check(signature, chash, pmesh, cfg, mesh, config)
    bases, coll, points = {}, {}, {}
    for c in COMPONENTS:
        bases[c] = BasisMatrix(s[f"basis/{c}/modes"], s[f"basis/{c}/sv"])
        coll[c] = BasisMatrix(s[f"collateral/{c}/modes"], s[f"collateral/{c}/sv"])
        points[c] = InterpolationPoints(s[f"points/{c}/indices"], s[f"points/{c}/matrix"])
    md = meta["metadata"]
    if "train" in md:
        md["train"] = [tuple(t) for t in md["train"]]
    art = RomArtifact(cfg, pmesh, bases, coll, points, md)
    art.check_consistency()
    return art


def save_states(path, states, times, mesh: PseudoMesh, config: CellConfig):
    """Dump full state vectors (one row per time) with their times."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if states.shape[1] != mesh.n_dofs:
        raise ValueError("state length does not match the mesh")
    meta = {"config": config.to_dict(), "mesh": _mesh_dict(mesh)}
    write_container(path, "states", mesh.signature, config.config_hash(),
                    {"meta": _json_section(meta), "states": states,
                     "times": np.asarray(times, dtype=float)})


def load_states(path, mesh: PseudoMesh | None = None, config: CellConfig | None = None):
    """Return ``(states, times, mesh, config)`` from a state dump."""
    kind, signature, chash, s = read_container(path)
    if kind != "states":
        raise ContainerError(f"{path}: holds {kind!r}, not a state dump")
    meta = _from_json_section(s["meta"])
    cfg = CellConfig.from_dict(meta["config"])
    m = meta["mesh"]
    pmesh = PseudoMesh(m["n_macro"], m["n_micro"], tuple(m["widths"]))
    _check(signature, chash, pmesh, cfg, mesh, config)
    return s["states"], s["times"], pmesh, cfg


# ---------------------------------------------------------------------------
# CSV tables
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header, rows):
    """Write rows with shortest round-trip float formatting and ``\\n`` line ends."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])


def read_csv(path):
    """Header and float rows of a CSV written by :func:`write_csv`."""
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        rows = [[float(v) for v in row] for row in r]
    return header, np.array(rows).reshape(-1, len(header))


TRAJECTORY_HEADER = ["tau", "ybar_cat", "ybar_an", "E_dimless", "E_volts"]
CYCLE_HEADER = ["n", "d_value", "l_value", "c_rate", "soc_at_emin"]


def trajectory_rows(traj: Trajectory, config: CellConfig):
    for t, u in zip(traj.times, traj.states):
        e, v = cell_voltage(u, config, traj.mesh)
        yield [t, state_of_charge(u, "cathode", traj.mesh), state_of_charge(u, "anode", traj.mesh), e, v]


def write_trajectory_csv(path, traj: Trajectory, config: CellConfig):
    write_csv(path, TRAJECTORY_HEADER, trajectory_rows(traj, config))


def write_cycle_csv(path, result):
    """Capacity-vs-cycle table; timings go to :func:`write_timing_csv`."""
    write_csv(path, CYCLE_HEADER, result.rows())


def write_timing_csv(path, rows):
    """``(label, seconds)`` rows; kept apart from the data tables since they vary per run."""
    write_csv(path, ["label", "seconds"], rows)


# ---------------------------------------------------------------------------
# INI configuration
# ---------------------------------------------------------------------------

def config_to_ini(config: CellConfig) -> str:
    d = config.to_dict()
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["cell"] = {"bv_symmetry": repr(d["bv_symmetry"]), "e_min": repr(d["e_min"])}
    for sec in ("electrolyte", "anode", "cathode"):
        cp[sec] = {k: repr(v) for k, v in d[sec].items()}
    for r in REGIONS:
        cp[f"geometry.{r}"] = {k: repr(v) for k, v in d["geometry"][r].items()}
    out = _io.StringIO()
    cp.write(out)
    return out.getvalue()


def save_config(config: CellConfig, path):
    Path(path).write_text(config_to_ini(config))


def config_from_ini(text: str) -> CellConfig:
    """Parse an INI config; missing sections or keys keep the reference values."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read_string(text)
    d = CellConfig().to_dict()
    known = {"cell", "electrolyte", "anode", "cathode"} | {f"geometry.{r}" for r in REGIONS}
    for sec in cp.sections():
        if sec not in known:
            raise ValueError(f"unknown config section [{sec}]")
        target = d if sec == "cell" else (d["geometry"][sec[9:]] if sec.startswith("geometry.")
                                          else d[sec])
        allowed = {"bv_symmetry", "e_min"} if sec == "cell" else set(target)
        for k, v in cp[sec].items():
            if k not in allowed:
                raise ValueError(f"unknown key {k!r} in [{sec}]")
            target[k] = float(v)
    return CellConfig.from_dict(d)


def load_config(path) -> CellConfig:
    return config_from_ini(Path(path).read_text())

