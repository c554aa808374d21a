"""Scenario configuration: JSON schema, validation, and bundled files.

A scenario is one JSON file describing the grid, the initial shape, the
eps sweep (with one grid resolution per eps), the run horizon, a test
function suite, and the list of checks with optional parameter overrides.
Validation happens at load time and reports the first violated
constraint; unknown check names are rejected before anything runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

from .errors import ConfigError
from .fields import BOUNDARY_MODES, Grid, TestFunction
from .geometry import ReferenceFlow, Shape, shape_from_json

#: Names the verify registry accepts, with the context each needs.
KNOWN_CHECKS = (
    "energy_dissipation",
    "discrepancy_ratio",
    "profile_fidelity",
    "radius_law",
    "brakke",
    "bv",
    "l2_flow",
    "l2_amplitude",
    "abscont_identity",
    "abscont_blocks",
    "density_ratio",
    "discrepancy_decay",
    "bv_decay",
    "mfp_lsc",
    "geometric_identities",
    "bv_counterexample",
    "abscont_counterexample",
)

SWEEP_CHECKS = {"discrepancy_decay", "bv_decay", "mfp_lsc"}
ANALYTIC_CHECKS = {"geometric_identities", "bv_counterexample",
                   "abscont_counterexample"}


@dataclass(frozen=True)
class CheckSpec:
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    dim: int
    extent: float
    resolutions: tuple      # one per eps (empty for purely analytic scenarios)
    boundary: str
    shape_json: dict | None
    epsilons: tuple
    safety: float
    t_end: float
    snapshot_every: float
    output: str
    dump_fields: bool
    threads: int
    reference_flow: ReferenceFlow | None
    tests: tuple            # TestFunction suite
    checks: tuple           # CheckSpec list

    @property
    def analytic_only(self):
        return not self.epsilons

    def shape(self) -> Shape:
        if self.shape_json is None:
            raise ConfigError(f"scenario {self.name!r} has no shape")
        return shape_from_json(self.shape_json)

    def grid_for(self, idx) -> Grid:
        return Grid.uniform(self.dim, self.extent, self.resolutions[idx],
                            bc=self.boundary)


def test_from_json(obj, dim) -> TestFunction:
    kind = obj.get("kind")
    center = tuple(float(c) for c in obj.get("center", (0.0,) * dim))
    if len(center) != dim:
        raise ConfigError(f"test center {center} does not match dimension {dim}")
    return TestFunction(
        kind=kind,
        center=center,
        radius=float(obj.get("radius", float("inf"))),
        amplitude=float(obj.get("amplitude", 1.0)),
        t_start=float(obj.get("t_start", float("-inf"))),
        t_stop=float(obj.get("t_stop", float("inf"))),
        ramp=float(obj.get("ramp", 0.0)),
    )


def _flow_from_json(obj, dim) -> ReferenceFlow:
    return ReferenceFlow(
        kind=obj.get("kind", "smooth-sphere"),
        r0=float(obj["radius"]),
        dim=int(obj.get("dimension", dim)),
        t_cut=(float(obj["t_cut"]) if "t_cut" in obj else None),
    )


def load_scenario(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"scenario file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario file {path} is not valid JSON: {exc}") from exc
    return scenario_from_dict(raw)


def scenario_from_dict(raw) -> ScenarioConfig:
    try:
        name = raw["name"]
        dim = int(raw["dimension"])
    except KeyError as exc:
        raise ConfigError(f"scenario missing required key {exc}") from exc
    if dim not in (1, 2, 3):
        raise ConfigError(f"dimension must be 1, 2 or 3, got {dim}")
    extent = float(raw.get("extent", 1.0))
    epsilons = tuple(float(e) for e in raw.get("epsilons", ()))
    res_raw = raw.get("resolution", ())
    if isinstance(res_raw, (int, float)):
        resolutions = tuple(int(res_raw) for _ in epsilons)
    else:
        resolutions = tuple(int(r) for r in res_raw)
    if epsilons and len(resolutions) != len(epsilons):
        raise ConfigError(
            f"{len(epsilons)} epsilons need {len(epsilons)} resolutions, "
            f"got {len(resolutions)}")
    boundary = raw.get("boundary", "periodic")
    if boundary not in BOUNDARY_MODES:
        raise ConfigError(f"unknown boundary mode {boundary!r}")
    for eps, res in zip(epsilons, resolutions):
        h = extent / res
        if eps < 2.0 * h:
            raise ConfigError(
                f"eps {eps:g} under-resolved on a {res}-cell grid: "
                f"eps/h = {eps / h:.3f} < 2")
    shape_json = raw.get("shape")
    if epsilons and shape_json is None:
        raise ConfigError("scenarios with eps runs need a shape")
    if shape_json is not None:
        shape_from_json(shape_json)  # validate eagerly
    flow = None
    if "reference_flow" in raw:
        try:
            flow = _flow_from_json(raw["reference_flow"], dim)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad reference flow: {exc}") from exc
    tests = tuple(test_from_json(t, dim) for t in raw.get("tests", ()))
    checks = []
    for entry in raw.get("checks", ()):
        if isinstance(entry, str):
            entry = {"name": entry}
        cname = entry.get("name")
        if cname not in KNOWN_CHECKS:
            raise ConfigError(f"unknown check name {cname!r}")
        params = {k: v for k, v in entry.items() if k != "name"}
        checks.append(CheckSpec(cname, params))
    for spec in checks:
        own_eps = spec.params.get("epsilons")
        if spec.name in SWEEP_CHECKS:
            if own_eps is not None:
                own_res = spec.params.get("resolutions", ())
                if len(own_eps) < 3:
                    raise ConfigError(
                        f"check {spec.name!r} needs a sweep of >= 3 epsilons")
                if len(own_res) != len(own_eps):
                    raise ConfigError(
                        f"check {spec.name!r} needs one resolution per eps")
                own_extent = float(spec.params.get("extent", extent))
                for eps, res in zip(own_eps, own_res):
                    h = own_extent / int(res)
                    if eps < 2.0 * h:
                        raise ConfigError(
                            f"check {spec.name!r}: eps {eps:g} under-resolved: "
                            f"eps/h = {eps / h:.3f} < 2")
            elif len(epsilons) < 3:
                raise ConfigError(
                    f"check {spec.name!r} needs a sweep of >= 3 epsilons")
        if spec.name in ("radius_law", "mfp_lsc", *ANALYTIC_CHECKS) and flow is None:
            raise ConfigError(f"check {spec.name!r} needs a reference flow")
    return ScenarioConfig(
        name=name,
        dim=dim,
        extent=extent,
        resolutions=resolutions,
        boundary=boundary,
        shape_json=shape_json,
        epsilons=epsilons,
        safety=float(raw.get("safety", 0.9)),
        t_end=float(raw.get("t_end", 0.0)),
        snapshot_every=float(raw.get("snapshot_every", 0.0)),
        output=raw.get("output", "runs/" + name),
        dump_fields=bool(raw.get("dump_fields", False)),
        threads=int(raw.get("threads", 1)),
        reference_flow=flow,
        tests=tests,
        checks=tuple(checks),
    )


def bundled_scenario_path(name):
    """Filesystem path of a scenario shipped with the package."""
    ref = resources.files("mcflab") / "scenarios" / f"{name}.json"
    if not ref.is_file():
        raise ConfigError(f"no bundled scenario named {name!r}")
    return str(ref)


def bundled_scenario_names():
    out = []
    for item in (resources.files("mcflab") / "scenarios").iterdir():
        if item.name.endswith(".json"):
            out.append(item.name[:-5])
    return sorted(out)
