"""Experiment configuration: strict JSON schema with path-labeled errors.

Every validation failure raises ConfigError carrying the dotted path of
the offending field ("mesh.N", "carleman.psi.coeffs"), so the CLI can
report exactly what to fix and exit with the config-error status.
Unknown keys are rejected rather than ignored: a typo that silently
falls back to a default would defeat the provenance contract (each JSON
summary embeds the fully resolved config that actually ran).
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from typing import Any

from .carleman import (
    MAX_PROFILE_DEGREE,
    SIDES,
    Arc,
    FlowSpec,
    ManufacturedBump,
    WeightFunction,
)
from .generator import GeneratorMatrix, assemble_generator
from .mesh import Grid2D, Mesh1D, MeshError, build_grid2d, build_mesh

DAMPING_STYLES = ("damped", "free", "hinged")

OUTPUT_FORMATS = ("csv", "json", "svg")

MAX_SCAN_GRID = 10_000


class ConfigError(ValueError):
    """Invalid configuration; `path` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


# Schema defaults.  The mesh and damping sections have no defaults: the
# physical setup of a run must be stated, not inherited silently.
_DEFAULTS: dict[str, Any] = {
    "seed": 42,
    "evolution": {"dt": 1e-3, "T": 10.0, "k": 1, "record_every": 10, "refine": True},
    "scan": {
        "re_range": [0.25, 8.0],
        "im_range": [-40.0, 40.0],
        "resolution": [17, 33],
    },
    "sweep": {
        "n_samples": 20,
        "re_range": [1.0, 50.0],
        "im_half_width": 0.01,
    },
    "carleman": {
        "psi": {"coeffs": {"1,0": 1.0, "0,1": 0.3}},
        "lambda_c": 4.0,
        "gamma": "left",
        "h_values": [0.2, 0.1, 0.05, 0.025],
        "region": [0.0, 1.0, 0.0, 1.0],
        "grid": [129, 129],
        "n_xi": 8,
        "bump": {"center": [0.5, 0.5], "width": 0.18, "amplitude": 1.0},
        "flow": {
            # Single Morse saddle at the region center:
            # (x1 - 1/2)^2 + (x1 - 1/2)^4 - (x2 - 1/2)^2.
            "psi1_coeffs": {
                "0,0": 0.3125,
                "1,0": -1.5,
                "2,0": 2.5,
                "3,0": -2.0,
                "4,0": 1.0,
                "0,1": 1.0,
                "0,2": -1.0,
            },
            "arcs": [{"start": [0.28, 0.5], "end": [0.72, 0.5]}],
            "tube_radius": 0.12,
            "normal_plateau": 0.04,
            "longitudinal_pad": 0.1,
            "step": 1e-3,
            "grid": [65, 65],
        },
    },
    "output": {"directory": "artifacts", "formats": ["csv", "json"]},
}


def _require_mapping(value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(path, f"must be an object, got {type(value).__name__}")
    return value


def _reject_unknown(section: dict, known: tuple[str, ...], path: str) -> None:
    for key in section:
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown field")


def _float(section: dict, path: str, key: str, *, default=None, minimum=None,
           strict_min=None) -> float:
    if key not in section:
        if default is None:
            raise ConfigError(f"{path}.{key}", "missing required field")
        return float(default)
    raw = section[key]
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ConfigError(f"{path}.{key}", f"must be a number, got {raw!r}")
    value = float(raw)
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}.{key}", f"must be >= {minimum}, got {value}")
    if strict_min is not None and value <= strict_min:
        raise ConfigError(f"{path}.{key}", f"must be > {strict_min}, got {value}")
    return value


def _int(section: dict, path: str, key: str, *, default=None, minimum=None) -> int:
    if key not in section:
        if default is None:
            raise ConfigError(f"{path}.{key}", "missing required field")
        return int(default)
    raw = section[key]
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise ConfigError(f"{path}.{key}", f"must be an integer, got {raw!r}")
    if minimum is not None and raw < minimum:
        raise ConfigError(f"{path}.{key}", f"must be >= {minimum}, got {raw}")
    return int(raw)


def _str_choice(section: dict, path: str, key: str, choices, *, default=None) -> str:
    raw = section.get(key, default)
    if raw is None:
        raise ConfigError(f"{path}.{key}", "missing required field")
    if raw not in choices:
        raise ConfigError(f"{path}.{key}", f"must be one of {list(choices)}, got {raw!r}")
    return str(raw)


def _float_pair(section: dict, path: str, key: str, *, default=None,
                ordered=True) -> list[float]:
    raw = section.get(key, default)
    full_path = f"{path}.{key}"
    if raw is None:
        raise ConfigError(full_path, "missing required field")
    if not isinstance(raw, (list, tuple)) or len(raw) != 2:
        raise ConfigError(full_path, f"must be a pair [lo, hi], got {raw!r}")
    lo, hi = (float(v) for v in raw)
    if ordered and not lo < hi:
        raise ConfigError(full_path, f"must satisfy lo < hi, got [{lo}, {hi}]")
    return [lo, hi]


def _parse_coeffs(raw: Any, path: str) -> dict[tuple[int, int], float]:
    """Parse {"i,j": value} monomial maps; total degree capped."""
    raw = _require_mapping(raw, path)
    if not raw:
        raise ConfigError(path, "must contain at least one monomial")
    coeffs: dict[tuple[int, int], float] = {}
    for key, value in raw.items():
        parts = str(key).split(",")
        try:
            i, j = (int(p) for p in parts)
        except ValueError:
            i = j = -1
        if len(parts) != 2 or i < 0 or j < 0:
            raise ConfigError(
                f"{path}.{key}", 'monomial keys must look like "i,j" with i, j >= 0'
            )
        if i + j > MAX_PROFILE_DEGREE:
            raise ConfigError(
                f"{path}.{key}",
                f"total degree {i + j} exceeds the cap {MAX_PROFILE_DEGREE}",
            )
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}.{key}", f"must be a number, got {value!r}")
        coeffs[(i, j)] = float(value)
    return coeffs


def _coeffs_to_json(coeffs: dict[tuple[int, int], float]) -> dict[str, float]:
    return {f"{i},{j}": v for (i, j), v in sorted(coeffs.items())}


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved run configuration.

    The section dicts are already validated and defaulted; `as_dict`
    round-trips them for embedding in JSON summaries.  Builder methods
    construct the numerical objects, converting late geometry failures
    (off-grid interface, degenerate flow tubes) into ConfigError so the
    CLI maps them to the config-error exit status.
    """

    seed: int
    mesh: dict
    damping: dict
    evolution: dict
    scan: dict
    sweep: dict
    carleman: dict
    output: dict

    def as_dict(self) -> dict:
        return copy.deepcopy(
            {
                "seed": self.seed,
                "mesh": self.mesh,
                "damping": self.damping,
                "evolution": self.evolution,
                "scan": self.scan,
                "sweep": self.sweep,
                "carleman": self.carleman,
                "output": self.output,
            }
        )

    def build_mesh(self) -> Mesh1D:
        m = self.mesh
        try:
            return build_mesh(L=m["L"], x0=m["x0"], c1=m["c1"], c2=m["c2"], N=m["N"])
        except MeshError as exc:
            raise ConfigError("mesh", str(exc)) from exc

    def build_generator(self) -> GeneratorMatrix:
        mesh = self.build_mesh()
        style = self.damping["style"]
        a, b = self.damping["a"], self.damping["b"]
        # "free" is the undamped right end: same assembly, zero feedback.
        assemble_style = "hinged" if style == "hinged" else "damped"
        return assemble_generator(mesh, a, b, style=assemble_style)

    def weight(self) -> WeightFunction:
        psi = self.carleman["psi"]
        coeffs = _parse_coeffs(psi["coeffs"], "carleman.psi.coeffs")
        return WeightFunction.from_coefficients(coeffs, scale=self.carleman["lambda_c"])

    def region(self) -> Grid2D:
        bounds = tuple(self.carleman["region"])
        nx, ny = self.carleman["grid"]
        try:
            return build_grid2d(bounds, nx, ny)
        except MeshError as exc:
            raise ConfigError("carleman.grid", str(exc)) from exc

    def bump(self) -> ManufacturedBump:
        b = self.carleman["bump"]
        try:
            return ManufacturedBump(
                bounds=tuple(self.carleman["region"]),
                gamma=self.carleman["gamma"],
                center=tuple(b["center"]),
                width=b["width"],
                amplitude=b["amplitude"],
            )
        except ValueError as exc:
            raise ConfigError("carleman.bump", str(exc)) from exc

    def flow_psi1(self) -> WeightFunction:
        coeffs = _parse_coeffs(
            self.carleman["flow"]["psi1_coeffs"], "carleman.flow.psi1_coeffs"
        )
        return WeightFunction.from_coefficients(coeffs, scale=1.0)

    def flow_spec(self) -> FlowSpec:
        f = self.carleman["flow"]
        try:
            arcs = tuple(
                Arc(start=tuple(a["start"]), end=tuple(a["end"])) for a in f["arcs"]
            )
            return FlowSpec(
                arcs=arcs,
                tube_radius=f["tube_radius"],
                normal_plateau=f["normal_plateau"],
                longitudinal_pad=f["longitudinal_pad"],
                step=f["step"],
            )
        except ValueError as exc:
            raise ConfigError("carleman.flow", str(exc)) from exc

    def flow_region(self) -> Grid2D:
        bounds = tuple(self.carleman["region"])
        nx, ny = self.carleman["flow"]["grid"]
        try:
            return build_grid2d(bounds, nx, ny)
        except MeshError as exc:
            raise ConfigError("carleman.flow.grid", str(exc)) from exc


def _resolve_mesh(raw: dict) -> dict:
    section = _require_mapping(raw.get("mesh"), "mesh") if "mesh" in raw else None
    if section is None:
        raise ConfigError("mesh", "missing required section")
    _reject_unknown(section, ("L", "x0", "c1", "c2", "N"), "mesh")
    return {
        "L": _float(section, "mesh", "L", strict_min=0.0),
        "x0": _float(section, "mesh", "x0", strict_min=0.0),
        "c1": _float(section, "mesh", "c1", strict_min=0.0),
        "c2": _float(section, "mesh", "c2", strict_min=0.0),
        "N": _int(section, "mesh", "N", minimum=8),
    }


def _resolve_damping(raw: dict) -> dict:
    if "damping" not in raw:
        raise ConfigError("damping", "missing required section")
    section = _require_mapping(raw["damping"], "damping")
    _reject_unknown(section, ("a", "b", "style"), "damping")
    a = _float(section, "damping", "a", minimum=0.0)
    b = _float(section, "damping", "b", minimum=0.0)
    style = _str_choice(section, "damping", "style", DAMPING_STYLES, default="damped")
    if style == "damped" and min(a, b) <= 0.0:
        raise ConfigError(
            "damping.a", f"style 'damped' requires min(a, b) > 0, got a={a}, b={b}"
        )
    if style in ("free", "hinged") and (a != 0.0 or b != 0.0):
        raise ConfigError(
            "damping.a", f"style {style!r} requires a = b = 0, got a={a}, b={b}"
        )
    return {"a": a, "b": b, "style": style}


def _resolve_evolution(raw: dict) -> dict:
    section = _require_mapping(raw.get("evolution", {}), "evolution")
    _reject_unknown(section, ("dt", "T", "k", "record_every", "refine"), "evolution")
    d = _DEFAULTS["evolution"]
    refine = section.get("refine", d["refine"])
    if not isinstance(refine, bool):
        raise ConfigError("evolution.refine", f"expected a boolean, got {refine!r}")
    return {
        "dt": _float(section, "evolution", "dt", default=d["dt"], strict_min=0.0),
        "T": _float(section, "evolution", "T", default=d["T"], strict_min=0.0),
        "k": _int(section, "evolution", "k", default=d["k"], minimum=1),
        "record_every": _int(
            section, "evolution", "record_every", default=d["record_every"], minimum=1
        ),
        "refine": refine,
    }


def _resolve_scan(raw: dict) -> dict:
    section = _require_mapping(raw.get("scan", {}), "scan")
    _reject_unknown(section, ("re_range", "im_range", "resolution"), "scan")
    d = _DEFAULTS["scan"]
    re_range = _float_pair(section, "scan", "re_range", default=d["re_range"])
    im_range = _float_pair(section, "scan", "im_range", default=d["im_range"])
    res = section.get("resolution", d["resolution"])
    if (
        not isinstance(res, (list, tuple))
        or len(res) != 2
        or any(isinstance(v, bool) or not isinstance(v, int) for v in res)
    ):
        raise ConfigError("scan.resolution", f"must be a pair of integers, got {res!r}")
    n_re, n_im = (int(v) for v in res)
    if n_re < 2 or n_im < 2:
        raise ConfigError("scan.resolution", f"needs at least 2 points per axis, got {res}")
    if n_re * n_im > MAX_SCAN_GRID:
        raise ConfigError(
            "scan.resolution",
            f"grid of {n_re * n_im} points exceeds the cap of {MAX_SCAN_GRID}",
        )
    return {"re_range": re_range, "im_range": im_range, "resolution": [n_re, n_im]}


def _resolve_sweep(raw: dict) -> dict:
    section = _require_mapping(raw.get("sweep", {}), "sweep")
    _reject_unknown(section, ("n_samples", "re_range", "im_half_width"), "sweep")
    d = _DEFAULTS["sweep"]
    return {
        "n_samples": _int(section, "sweep", "n_samples", default=d["n_samples"], minimum=1),
        "re_range": _float_pair(section, "sweep", "re_range", default=d["re_range"]),
        "im_half_width": _float(
            section, "sweep", "im_half_width", default=d["im_half_width"], minimum=0.0
        ),
    }


def _resolve_region(section: dict, path: str, key: str, default) -> list[float]:
    raw = section.get(key, default)
    full_path = f"{path}.{key}"
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise ConfigError(full_path, f"must be [x1min, x1max, x2min, x2max], got {raw!r}")
    vals = [float(v) for v in raw]
    if not (vals[1] > vals[0] and vals[3] > vals[2]):
        raise ConfigError(full_path, f"degenerate rectangle {vals}")
    return vals


def _resolve_grid_pair(section: dict, path: str, key: str, default) -> list[int]:
    raw = section.get(key, default)
    full_path = f"{path}.{key}"
    if (
        not isinstance(raw, (list, tuple))
        or len(raw) != 2
        or any(isinstance(v, bool) or not isinstance(v, int) for v in raw)
    ):
        raise ConfigError(full_path, f"must be a pair of integers, got {raw!r}")
    nx, ny = (int(v) for v in raw)
    if nx < 16 or ny < 16:
        raise ConfigError(full_path, f"needs at least 16 points per axis, got {raw}")
    return [nx, ny]


def _resolve_carleman(raw: dict) -> dict:
    section = _require_mapping(raw.get("carleman", {}), "carleman")
    _reject_unknown(
        section,
        ("psi", "lambda_c", "gamma", "h_values", "region", "grid", "n_xi", "bump", "flow"),
        "carleman",
    )
    d = _DEFAULTS["carleman"]

    psi = _require_mapping(section.get("psi", d["psi"]), "carleman.psi")
    _reject_unknown(psi, ("coeffs",), "carleman.psi")
    coeffs = _parse_coeffs(psi.get("coeffs", d["psi"]["coeffs"]), "carleman.psi.coeffs")

    lambda_c = _float(section, "carleman", "lambda_c", default=d["lambda_c"], strict_min=0.0)
    gamma = _str_choice(section, "carleman", "gamma", SIDES, default=d["gamma"])

    h_raw = section.get("h_values", d["h_values"])
    if not isinstance(h_raw, (list, tuple)) or not h_raw:
        raise ConfigError("carleman.h_values", f"must be a nonempty list, got {h_raw!r}")
    h_values = [float(v) for v in h_raw]
    if any(v <= 0.0 for v in h_values):
        raise ConfigError("carleman.h_values", f"must be positive, got {h_values}")
    if any(b >= a for a, b in zip(h_values, h_values[1:])):
        raise ConfigError("carleman.h_values", f"must be strictly decreasing, got {h_values}")

    region = _resolve_region(section, "carleman", "region", d["region"])
    grid = _resolve_grid_pair(section, "carleman", "grid", d["grid"])
    n_xi = _int(section, "carleman", "n_xi", default=d["n_xi"], minimum=8)

    bump = _require_mapping(section.get("bump", d["bump"]), "carleman.bump")
    _reject_unknown(bump, ("center", "width", "amplitude"), "carleman.bump")
    center_raw = bump.get("center", d["bump"]["center"])
    if not isinstance(center_raw, (list, tuple)) or len(center_raw) != 2:
        raise ConfigError("carleman.bump.center", f"must be [x1, x2], got {center_raw!r}")
    bump_resolved = {
        "center": [float(v) for v in center_raw],
        "width": _float(bump, "carleman.bump", "width", default=d["bump"]["width"],
                        strict_min=0.0),
        "amplitude": _float(bump, "carleman.bump", "amplitude",
                            default=d["bump"]["amplitude"]),
    }

    flow = _require_mapping(section.get("flow", d["flow"]), "carleman.flow")
    _reject_unknown(
        flow,
        ("psi1_coeffs", "arcs", "tube_radius", "normal_plateau", "longitudinal_pad",
         "step", "grid"),
        "carleman.flow",
    )
    df = d["flow"]
    psi1_coeffs = _parse_coeffs(
        flow.get("psi1_coeffs", df["psi1_coeffs"]), "carleman.flow.psi1_coeffs"
    )
    arcs_raw = flow.get("arcs", df["arcs"])
    if not isinstance(arcs_raw, (list, tuple)) or not arcs_raw:
        raise ConfigError("carleman.flow.arcs", f"must be a nonempty list, got {arcs_raw!r}")
    arcs = []
    for i, arc in enumerate(arcs_raw):
        arc = _require_mapping(arc, f"carleman.flow.arcs[{i}]")
        _reject_unknown(arc, ("start", "end"), f"carleman.flow.arcs[{i}]")
        for key in ("start", "end"):
            pt = arc.get(key)
            if not isinstance(pt, (list, tuple)) or len(pt) != 2:
                raise ConfigError(
                    f"carleman.flow.arcs[{i}].{key}", f"must be [x1, x2], got {pt!r}"
                )
        arcs.append(
            {"start": [float(v) for v in arc["start"]],
             "end": [float(v) for v in arc["end"]]}
        )
    flow_resolved = {
        "psi1_coeffs": _coeffs_to_json(psi1_coeffs),
        "arcs": arcs,
        "tube_radius": _float(flow, "carleman.flow", "tube_radius",
                              default=df["tube_radius"], strict_min=0.0),
        "normal_plateau": _float(flow, "carleman.flow", "normal_plateau",
                                 default=df["normal_plateau"], strict_min=0.0),
        "longitudinal_pad": _float(flow, "carleman.flow", "longitudinal_pad",
                                   default=df["longitudinal_pad"], strict_min=0.0),
        "step": _float(flow, "carleman.flow", "step", default=df["step"], strict_min=0.0),
        "grid": _resolve_grid_pair(flow, "carleman.flow", "grid", df["grid"]),
    }

    return {
        "psi": {"coeffs": _coeffs_to_json(coeffs)},
        "lambda_c": lambda_c,
        "gamma": gamma,
        "h_values": h_values,
        "region": region,
        "grid": grid,
        "n_xi": n_xi,
        "bump": bump_resolved,
        "flow": flow_resolved,
    }


def _resolve_output(raw: dict) -> dict:
    section = _require_mapping(raw.get("output", {}), "output")
    _reject_unknown(section, ("directory", "formats"), "output")
    d = _DEFAULTS["output"]
    directory = section.get("directory", d["directory"])
    if not isinstance(directory, str) or not directory:
        raise ConfigError("output.directory", f"must be a nonempty string, got {directory!r}")
    formats = section.get("formats", d["formats"])
    if not isinstance(formats, (list, tuple)):
        raise ConfigError("output.formats", f"must be a list, got {formats!r}")
    for fmt in formats:
        if fmt not in OUTPUT_FORMATS:
            raise ConfigError(
                "output.formats", f"must contain only {list(OUTPUT_FORMATS)}, got {fmt!r}"
            )
    # CSV and JSON artifacts are always written; formats only adds SVG.
    resolved = [fmt for fmt in OUTPUT_FORMATS if fmt in ("csv", "json") or fmt in formats]
    return {"directory": directory, "formats": resolved}


def resolve_config(raw: dict) -> ExperimentConfig:
    raw = _require_mapping(raw, "config")
    _reject_unknown(
        raw,
        ("seed", "mesh", "damping", "evolution", "scan", "sweep", "carleman", "output"),
        "config",
    )
    seed = _int(raw, "config", "seed", default=_DEFAULTS["seed"], minimum=0)
    return ExperimentConfig(
        seed=seed,
        mesh=_resolve_mesh(raw),
        damping=_resolve_damping(raw),
        evolution=_resolve_evolution(raw),
        scan=_resolve_scan(raw),
        sweep=_resolve_sweep(raw),
        carleman=_resolve_carleman(raw),
        output=_resolve_output(raw),
    )


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON in {path!r}: {exc}") from exc
    return resolve_config(raw)
