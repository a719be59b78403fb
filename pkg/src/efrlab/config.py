"""INI-style run configuration files.

Example::

    [flow]
    nu = 1e-4
    dt = 0.004
    T = 1.0

    [geometry]
    kind = periodic_box

    [efr]
    variant = delta_chi_opt
    k = 10

Every key is optional; an empty value selects the documented default.
Unknown sections or keys are rejected with the offending line number.
"""
from __future__ import annotations

import configparser
import re
from pathlib import Path

from .efr import FilterConfig
from .errors import ConfigError, EfrError
from .evolve import FlowConfig
from .grid import GeometrySpec
from .loss import LossSpec
from .optimizer import OptOptions
from .orchestrator import RunConfig


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# section -> key -> (parser, default); ``None`` defaults are resolved later
SCHEMA = {
    "flow": {"nu": (float, 1e-4), "dt": (float, 0.004), "t0": (float, 0.0), "T": (float, 4.0),
             "U": (float, 1.0), "L": (float, 0.1), "inlet_umax": (float, 1.5),
             "upwind": (_bool, False), "rtol": (float, 1e-10)},
    "geometry": {"kind": (str, "channel_cylinder"), "Lx": (float, None), "Ly": (float, None),
                 "center_x": (float, 0.2), "center_y": (float, 0.2), "radius": (float, 0.05)},
    "grids": {"coarse_nx": (int, 64), "coarse_ny": (int, 12), "fine_nx": (int, 128),
              "fine_ny": (int, 24)},
    "filter": {"grad_div_gamma": (float, 0.0), "rtol": (float, 1e-10)},
    "efr": {"variant": (str, "delta_chi_opt"), "k": (int, 10), "delta0": (float, None),
            "chi0": (float, None), "delta_min": (float, 1e-5), "delta_max": (float, 1e-3),
            "chi_min": (float, 0.0), "chi_max": (float, 1.0)},
    "loss": {"kind": (str, "global"), "w_u": (float, 1.0), "w_gradu": (float, 1.0),
             "w_p": (float, 0.0), "area_weighted": (_bool, False)},
    "optimizer": {"max_iter": (int, 25), "tol": (float, 1e-8), "fd_step": (float, 1e-6)},
    "output": {"dir": (str, None), "snapshot_stride": (int, 1)},
    "initial": {"name": (str, "zero"), "thickness": (float, None), "amplitude": (float, None),
                "umax": (float, None)},
}

_DEFAULT_EXTENT = {"periodic_box": (1.0, 1.0), "channel": (2.2, 0.41), "channel_cylinder": (2.2, 0.41)}
_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^\s=:;#][^=:]*?)\s*[=:]")


def _line_index(text: str) -> dict:
    """Map ``(section, key)`` and ``(section, None)`` to 1-based line numbers."""
    index = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            index.setdefault((section, None), lineno)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None and not line[:1].isspace():
            index.setdefault((section, m.group(1).strip()), lineno)
    return index


def _resolve(sections: dict, lines: dict, path) -> dict:
    """Typed values with defaults filled in; raises ConfigError with line info."""
    for sec, keys in sections.items():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", lines.get((sec, None)), path)
        for key in keys:
            if key not in SCHEMA[sec]:
                valid = ", ".join(SCHEMA[sec])
                raise ConfigError(f"unknown key {key!r} in [{sec}] (valid: {valid})",
                                  lines.get((sec, key)), path)
    out = {}
    for sec, keys in SCHEMA.items():
        vals = {}
        given = sections.get(sec, {})
        for key, (conv, default) in keys.items():
            raw = given.get(key)
            if raw is None or str(raw).strip() == "":
                vals[key] = default
                continue
            try:
                vals[key] = conv(str(raw).strip())
            except ValueError as exc:
                raise ConfigError(f"[{sec}] {key}: {exc}", lines.get((sec, key)), path) from None
        out[sec] = vals
    return out


def _build(v: dict, lines: dict, path) -> RunConfig:
    def fail(msg, sec, key):
        raise ConfigError(msg, lines.get((sec, key), lines.get((sec, None))), path)

    e = v["efr"]
    if e["delta_min"] > e["delta_max"]:
        fail("delta bounds are inverted (delta_min > delta_max)", "efr", "delta_min")
    if e["chi_min"] > e["chi_max"]:
        fail("chi bounds are inverted (chi_min > chi_max)", "efr", "chi_min")
    if e["variant"] in ("delta_opt_ef", "standard_ef") and e["chi0"] is not None and e["chi0"] != 1:
        fail(f"variant {e['variant']} fixes chi = 1", "efr", "chi0")

    g = v["geometry"]
    if g["kind"] not in _DEFAULT_EXTENT:
        fail(f"unknown geometry kind {g['kind']!r}", "geometry", "kind")
    lx0, ly0 = _DEFAULT_EXTENT[g["kind"]]
    gr = v["grids"]
    fine = None
    if gr["fine_nx"] is not None and gr["fine_ny"] is not None:
        fine = (gr["fine_nx"], gr["fine_ny"])
    ini = v["initial"]
    params = tuple((k, ini[k]) for k in ("thickness", "amplitude", "umax") if ini[k] is not None)
    f = v["flow"]
    lo = v["loss"]
    o = v["optimizer"]
    steps = [
        ("flow", None, lambda: FlowConfig(nu=f["nu"], dt=f["dt"], t0=f["t0"], T=f["T"], U=f["U"],
                                          L=f["L"], inlet_umax=f["inlet_umax"],
                                          upwind=f["upwind"], rtol=f["rtol"])),
        ("geometry", None, lambda: _geometry(g, lx0, ly0)),
        ("filter", None, lambda: FilterConfig(grad_div_gamma=v["filter"]["grad_div_gamma"],
                                              rtol=v["filter"]["rtol"])),
        ("loss", None, lambda: LossSpec(kind=lo["kind"], w_u=lo["w_u"], w_gradu=lo["w_gradu"],
                                        w_p=lo["w_p"], area_weighted=lo["area_weighted"])),
        ("optimizer", None, lambda: OptOptions(max_iter=o["max_iter"], tol=o["tol"],
                                               fd_step=o["fd_step"])),
    ]
    built = {}
    for sec, key, make in steps:
        try:
            built[sec] = make()
        except EfrError as exc:
            fail(str(exc), sec, key)
    try:
        cfg = RunConfig(flow=built["flow"], geometry=built["geometry"],
                        coarse=(gr["coarse_nx"], gr["coarse_ny"]), fine=fine,
                        filter=built["filter"], variant=e["variant"], loss=built["loss"], k=e["k"],
                        delta0=e["delta0"], chi0=e["chi0"],
                        delta_bounds=(e["delta_min"], e["delta_max"]),
                        chi_bounds=(e["chi_min"], e["chi_max"]), opt=built["optimizer"],
                        initial=ini["name"], initial_params=params,
                        snapshot_stride=v["output"]["snapshot_stride"], output_dir=v["output"]["dir"])
        cfg.flow.n_steps
    except EfrError as exc:
        fail(str(exc), "efr", None)
    return cfg


def _geometry(g: dict, lx0: float, ly0: float) -> GeometrySpec:
    spec = GeometrySpec(kind=g["kind"], Lx=lx0 if g["Lx"] is None else g["Lx"],
                        Ly=ly0 if g["Ly"] is None else g["Ly"],
                        center=(g["center_x"], g["center_y"]), radius=g["radius"])
    spec.validate()
    return spec


def parse_config_text(text: str, path=None) -> RunConfig:
    """Parse configuration text into a validated :class:`RunConfig`."""
    cp = configparser.ConfigParser(interpolation=None, strict=True, empty_lines_in_values=False)
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(path) if path else "<config>")
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(exc.message if hasattr(exc, "message") else str(exc), line, path) from None
    sections = {s: dict(cp[s]) for s in cp.sections()}
    lines = _line_index(text)
    return _build(_resolve(sections, lines, path), lines, path)


def parse_config(path) -> RunConfig:
    """Read and validate a configuration file.

    Raises
    ------
    ConfigError
        Syntax errors, unknown keys, malformed values or failed validation;
        the message carries ``path:line``.
    FileNotFoundError
        ``path`` does not exist.
    """
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"configuration file not found: {path}")
    return parse_config_text(p.read_text(), p)


def config_to_sections(cfg: RunConfig) -> dict:
    """Fully resolved configuration as ``{section: {key: text}}``.

    ``parse_config_text(render_config(config_to_sections(cfg)))`` rebuilds an
    equal configuration (the body-force callable is not serializable).
    """
    f, g, e = cfg.flow, cfg.geometry, cfg
    ini = dict(cfg.initial_params)
    fine = cfg.fine or (None, None)
    raw = {
        "flow": {"nu": f.nu, "dt": f.dt, "t0": f.t0, "T": f.T, "U": f.U, "L": f.L,
                 "inlet_umax": f.inlet_umax, "upwind": f.upwind, "rtol": f.rtol},
        "geometry": {"kind": g.kind, "Lx": g.Lx, "Ly": g.Ly, "center_x": g.center[0],
                     "center_y": g.center[1], "radius": g.radius},
        "grids": {"coarse_nx": cfg.coarse[0], "coarse_ny": cfg.coarse[1], "fine_nx": fine[0],
                  "fine_ny": fine[1]},
        "filter": {"grad_div_gamma": cfg.filter.grad_div_gamma, "rtol": cfg.filter.rtol},
        "efr": {"variant": e.variant, "k": e.k, "delta0": e.delta_init, "chi0": e.chi_init,
                "delta_min": e.delta_bounds[0], "delta_max": e.delta_bounds[1],
                "chi_min": e.chi_bounds[0], "chi_max": e.chi_bounds[1]},
        "loss": {"kind": cfg.loss.kind, "w_u": cfg.loss.w_u, "w_gradu": cfg.loss.w_gradu,
                 "w_p": cfg.loss.w_p, "area_weighted": cfg.loss.area_weighted},
        "optimizer": {"max_iter": cfg.opt.max_iter, "tol": cfg.opt.tol, "fd_step": cfg.opt.fd_step},
        "output": {"dir": cfg.output_dir, "snapshot_stride": cfg.snapshot_stride},
        "initial": {"name": cfg.initial, **{k: ini.get(k) for k in ("thickness", "amplitude", "umax")}},
    }
    return {s: {k: _text(v) for k, v in kv.items()} for s, kv in raw.items()}


def _text(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_config(sections: dict) -> str:
    parts = []
    for sec, kv in sections.items():
        parts.append(f"[{sec}]")
        parts += [f"{k} = {v}" for k, v in kv.items()]
        parts.append("")
    return "\n".join(parts)


def config_from_sections(sections: dict) -> RunConfig:
    """Inverse of :func:`config_to_sections` (used when reloading runs)."""
    return parse_config_text(render_config(sections))
