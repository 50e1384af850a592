"""TOML scenario files.

Only ``[grid]`` and ``[time]`` are required::

    [grid]
    m = 100            # cells along x
    n = 100            # cells along y
    h = 0.01           # cell size, default 1/m

    [time]
    T = 1.5            # end time
    tau = 0.0049       # time step
    auto_substep = false

    [potential]
    kind = "eikonal"   # eikonal | gaussian | poisson | rotation
    exit_edges = ["right"]
    exit_cells = []    # extra exit cells as [i, j] pairs
    sigma = 5.0        # Gaussian width
    sigma_units = "cells"   # or "domain"
    mu = [0.0, 0.0]    # kernel shift, or rotation centre
    normalization = "unnormalized"   # unnormalized | paper1d | twod
    padding = "zero"   # zero | reflect
    omega = 1.0        # angular velocity of the rotation kind
    refresh_every = 1  # steps between potential updates

    [boundary]
    mode = "noflux"    # noflux | outflow | reflect

    [init]
    normalization = "unnormalized"
    rho1 = [{amplitude = 0.9, lambda = 0.1, center = [0.3, 0.7]},
            {x0 = 0.1, x1 = 0.3, y0 = 0.2, y1 = 0.8, value = 0.8}]
    rho2 = {complement = 0.9}

    [pd]
    theta = 1.0
    max_iters = 5000
    tol_primal = 1e-6
    tol_feas = 1e-6
    warm_start = true  # alpha and beta default to 0.95 / |Lambda|

    [output]
    dir = "out"
    every = 10
    formats = ["raw", "csv"]    # any of raw, pgm, csv, png
"""

from __future__ import annotations

import re
from importlib import resources

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from . import initial
from .grid import Grid
from .potentials import Normalization, PotentialSpec
from .projection import PdParams
from .simulator import FORMATS, Scenario
from .transport import BoundaryMode

_KEYS = {
    "grid": {"m", "n", "h"},
    "time": {"T", "tau", "auto_substep"},
    "potential": {"kind", "exit_edges", "exit_cells", "sigma", "sigma_units", "mu",
                  "normalization", "padding", "omega", "refresh_every"},
    "boundary": {"mode"},
    "init": {"rho1", "rho2", "normalization"},
    "pd": {"alpha", "beta", "theta", "max_iters", "tol_primal", "tol_feas", "warm_start"},
    "output": {"dir", "every", "formats"},
}
_REQUIRED = {"grid": {"m", "n"}, "time": {"T", "tau"}}
_BUMP_KEYS = {"amplitude", "lambda", "center"}
_RECT_KEYS = {"x0", "x1", "y0", "y1", "value"}


class ConfigError(ValueError):
    """Invalid scenario file; the message names the line and key."""


def _find_line(text: str, section: str, key: str | None = None) -> int | None:
    current = None
    header = re.compile(r"^\s*\[\s*([A-Za-z0-9_.]+)\s*\]")
    for lineno, line in enumerate(text.splitlines(), start=1):
        mh = header.match(line)
        if mh:
            current = mh.group(1)
            if key is None and current == section:
                return lineno
            continue
        if key is not None and current == section and re.match(rf"^\s*{re.escape(key)}\s*=", line):
            return lineno
    return None


class _Reader:
    def __init__(self, text, data):
        self.text = text
        self.data = data

    def fail(self, section, key, msg):
        lineno = _find_line(self.text, section, key)
        if lineno is None and key is not None:
            lineno = _find_line(self.text, section)
        where = f"line {lineno}: " if lineno is not None else ""
        name = f"{section}.{key}" if key else f"[{section}]"
        raise ConfigError(f"{where}{name}: {msg}")

    def section(self, name):
        sec = self.data.get(name, {})
        if not isinstance(sec, dict):
            self.fail(name, None, "must be a table")
        for key in _REQUIRED.get(name, ()):
            if key not in sec:
                self.fail(name, None, f"missing required key {key!r}")
        return sec

    def get(self, name, key, kind, default=None):
        sec = self.data.get(name, {})
        if key not in sec:
            return default
        v = sec[key]
        if kind is float:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                self.fail(name, key, f"expected a number, got {v!r}")
            return float(v)
        if kind is int:
            if isinstance(v, bool) or not isinstance(v, int):
                self.fail(name, key, f"expected an integer, got {v!r}")
            return v
        if not isinstance(v, kind):
            self.fail(name, key, f"expected {kind.__name__}, got {v!r}")
        return v


def _pair(r, section, key, v):
    if not (isinstance(v, list) and len(v) == 2
            and all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in v)):
        r.fail(section, key, f"expected a pair of numbers, got {v!r}")
    return float(v[0]), float(v[1])


def _density_items(r, key, value):
    if isinstance(value, dict):
        if key == "rho2" and set(value) == {"complement"}:
            scale = value["complement"]
            if isinstance(scale, bool) or not isinstance(scale, (int, float)):
                r.fail("init", key, "complement scale must be a number")
            if not 0 <= scale <= 1:
                r.fail("init", key, f"complement scale must lie in [0, 1], got {scale}")
            return initial.Complement(float(scale))
        value = [value]
    if not isinstance(value, list):
        r.fail("init", key, "expected a list of bumps and rectangles")
    items = []
    for k, it in enumerate(value):
        if not isinstance(it, dict):
            r.fail("init", key, f"item {k} must be a table")
        keys = set(it)
        try:
            if keys == _BUMP_KEYS:
                items.append(initial.Bump(float(it["amplitude"]), float(it["lambda"]),
                                          _pair(r, "init", key, it["center"])))
            elif keys == _RECT_KEYS:
                rect = initial.Rect(*(float(it[c]) for c in ("x0", "x1", "y0", "y1", "value")))
                if not (rect.x0 < rect.x1 and rect.y0 < rect.y1):
                    r.fail("init", key, f"item {k}: rectangle needs x0 < x1 and y0 < y1")
                items.append(rect)
            else:
                extra = keys - _BUMP_KEYS - _RECT_KEYS
                what = f"unknown keys {sorted(extra)}" if extra else f"incomplete keys {sorted(keys)}"
                r.fail("init", key, f"item {k}: {what}; a bump needs {sorted(_BUMP_KEYS)}, "
                                    f"a rectangle {sorted(_RECT_KEYS)}")
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            r.fail("init", key, f"item {k}: {exc}")
    return tuple(items)


def parse_config(text: str) -> Scenario:
    """Parse and validate a scenario document."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"syntax error: {exc}") from None
    r = _Reader(text, data)
    for name, sec in data.items():
        if name not in _KEYS:
            lineno = _find_line(text, name)
            where = f"line {lineno}: " if lineno else ""
            raise ConfigError(f"{where}unknown section [{name}]")
        if not isinstance(sec, dict):
            r.fail(name, None, "must be a table")
        for key in sec:
            if key not in _KEYS[name]:
                r.fail(name, key, "unknown key")
    r.section("grid")
    r.section("time")

    m = r.get("grid", "m", int)
    n = r.get("grid", "n", int)
    if m < 2 or n < 2:
        r.fail("grid", "m" if m < 2 else "n", "grid needs at least 2 cells per direction")
    h = r.get("grid", "h", float, 1.0 / m)
    if not h > 0:
        r.fail("grid", "h", f"must be > 0, got {h}")
    grid = Grid(m, n, h)

    T = r.get("time", "T", float)
    tau = r.get("time", "tau", float)
    if not tau > 0:
        r.fail("time", "tau", f"must be > 0, got {tau}")
    if not T >= tau:
        r.fail("time", "T", f"must be >= tau ({tau}), got {T}")
    auto = r.get("time", "auto_substep", bool, False)

    pot = {}
    for key, kind in (("kind", str), ("sigma", float), ("sigma_units", str),
                      ("normalization", str), ("padding", str), ("omega", float),
                      ("refresh_every", int)):
        v = r.get("potential", key, kind)
        if v is not None:
            pot[key] = v
    if "exit_edges" in data.get("potential", {}):
        edges = r.get("potential", "exit_edges", list)
        if not all(isinstance(e, str) for e in edges):
            r.fail("potential", "exit_edges", "expected a list of edge names")
        pot["exit_edges"] = tuple(edges)
    if "exit_cells" in data.get("potential", {}):
        cells = r.get("potential", "exit_cells", list)
        pot["exit_cells"] = tuple(_cell(r, c, grid) for c in cells)
    if "mu" in data.get("potential", {}):
        pot["mu"] = _pair(r, "potential", "mu", data["potential"]["mu"])
    try:
        spec = PotentialSpec(**pot)
        if spec.kind.value == "eikonal" and not spec.mask(grid).any():
            raise ValueError("exit set is empty")
    except ValueError as exc:
        key = next((k for k in ("kind", "padding", "normalization", "sigma_units", "exit_edges",
                                "sigma", "refresh_every") if k in str(exc) or k in pot), None)
        r.fail("potential", key, str(exc))

    mode = r.get("boundary", "mode", str, "noflux")
    try:
        boundary = BoundaryMode(mode)
    except ValueError:
        r.fail("boundary", "mode", f"unknown mode {mode!r}; choose from "
                                   f"{[b.value for b in BoundaryMode]}")

    init = data.get("init", {})
    norm = r.get("init", "normalization", str, "unnormalized")
    try:
        norm = Normalization(norm)
    except ValueError:
        r.fail("init", "normalization", f"unknown normalization {norm!r}")
    rho1 = _density_items(r, "rho1", init["rho1"]) if "rho1" in init else ()
    if isinstance(rho1, initial.Complement):
        r.fail("init", "rho1", "a complement is only allowed for rho2")
    rho2 = _density_items(r, "rho2", init["rho2"]) if "rho2" in init else ()

    pdkw = {}
    for key, kind in (("alpha", float), ("beta", float), ("theta", float), ("max_iters", int),
                      ("tol_primal", float), ("tol_feas", float), ("warm_start", bool)):
        v = r.get("pd", key, kind)
        if v is not None:
            pdkw[key] = v
    try:
        pd = PdParams(**pdkw)
        pd.steps(grid)
    except ValueError as exc:
        key = next((k for k in pdkw if k in str(exc)), None)
        r.fail("pd", key, str(exc))

    out_dir = r.get("output", "dir", str, "out")
    every = r.get("output", "every", int, 10)
    if every < 1:
        r.fail("output", "every", "must be >= 1")
    formats = r.get("output", "formats", list, ["raw", "csv"])
    for f in formats:
        if f not in FORMATS:
            r.fail("output", "formats", f"unknown format {f!r}; choose from {list(FORMATS)}")

    return Scenario(grid=grid, T=T, tau=tau, potential=spec, boundary=boundary,
                    rho1_spec=rho1, rho2_spec=rho2, init_normalization=norm, pd=pd,
                    auto_substep=auto, snapshot_every=every, output_dir=out_dir,
                    formats=tuple(formats))


def _cell(r, c, grid):
    if not (isinstance(c, list) and len(c) == 2 and all(isinstance(x, int) for x in c)):
        r.fail("potential", "exit_cells", f"expected [i, j] integer pairs, got {c!r}")
    i, j = c
    if not (0 <= i < grid.m and 0 <= j < grid.n):
        r.fail("potential", "exit_cells", f"cell {c} lies outside the {grid.m}x{grid.n} grid")
    return i, j


def _items_to_toml(items):
    if isinstance(items, initial.Complement):
        return {"complement": items.scale}
    out = []
    for it in items:
        if isinstance(it, initial.Bump):
            out.append({"amplitude": it.amplitude, "lambda": it.lam, "center": list(it.center)})
        else:
            out.append({"x0": it.x0, "x1": it.x1, "y0": it.y0, "y1": it.y1, "value": it.value})
    return out


def to_dict(sc: Scenario) -> dict:
    p = sc.potential
    if p.exit_mask is not None:
        raise ValueError("a scenario with an explicit exit mask cannot be serialized")
    pd = {"theta": sc.pd.theta, "max_iters": sc.pd.max_iters, "tol_primal": sc.pd.tol_primal,
          "tol_feas": sc.pd.tol_feas, "warm_start": sc.pd.warm_start}
    if sc.pd.alpha is not None:
        pd["alpha"] = sc.pd.alpha
    if sc.pd.beta is not None:
        pd["beta"] = sc.pd.beta
    return {
        "grid": {"m": sc.grid.m, "n": sc.grid.n, "h": sc.grid.h},
        "time": {"T": sc.T, "tau": sc.tau, "auto_substep": sc.auto_substep},
        "potential": {
            "kind": p.kind.value, "exit_edges": list(p.exit_edges),
            "exit_cells": [list(c) for c in p.exit_cells], "sigma": p.sigma,
            "sigma_units": p.sigma_units, "mu": list(p.mu),
            "normalization": p.normalization.value, "padding": p.padding.value,
            "omega": p.omega, "refresh_every": p.refresh_every,
        },
        "boundary": {"mode": sc.boundary.value},
        "init": {"normalization": sc.init_normalization.value,
                 "rho1": _items_to_toml(sc.rho1_spec), "rho2": _items_to_toml(sc.rho2_spec)},
        "pd": pd,
        "output": {"dir": sc.output_dir, "every": sc.snapshot_every, "formats": list(sc.formats)},
    }


def serialize(sc: Scenario) -> str:
    """TOML text that parses back to an equal scenario."""
    return tomli_w.dumps(to_dict(sc))


def load_config(path) -> Scenario:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())


def bundled_names() -> list[str]:
    files = resources.files("congestflow") / "scenarios"
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".toml"))


def bundled_text(name: str) -> str:
    path = resources.files("congestflow") / "scenarios" / f"{name}.toml"
    if not path.is_file():
        raise ConfigError(f"no bundled scenario named {name!r}; available: {bundled_names()}")
    return path.read_text(encoding="utf-8")


def load_bundled(name: str) -> Scenario:
    return parse_config(bundled_text(name))
