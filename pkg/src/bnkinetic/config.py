"""Run configuration: a small ``key = value`` format with ``[section]`` headers.

Every key has a typed default; a top-level ``preset = NAME`` line swaps in
the defaults of a named preset before the remaining keys are applied.
Unknown sections or keys, unparsable values and contract violations raise
:class:`ConfigError` carrying the offending line number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .errors import ConfigError, InputContractError
from .kernel_geometry import AngularKernel, KernelParams


def _opt_float(text: str) -> Optional[float]:
    if text.strip().lower() in ("", "none", "auto"):
        return None
    return float(text)


def _int(text: str) -> int:
    return int(text.strip(), 10)


def _int_list(text: str) -> tuple:
    return tuple(_int(x) for x in text.split(",") if x.strip())


def _str(text: str) -> str:
    return text.strip()


def _fmt(value: Any) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(x) for x in value)
    return str(value)


@dataclass(frozen=True)
class _Key:
    parse: Callable[[str], Any]
    default: Any
    check: Optional[Callable[[Any], bool]] = None
    rule: str = ""
    doc: str = ""


def _pos(x) -> bool:
    return x is not None and math.isfinite(x) and x > 0


SCHEMA: dict[str, dict[str, _Key]] = {
    "kernel": {
        "c_phi": _Key(float, 1.0, _pos, "c_phi > 0", "strength C_Phi of Phi(z) = C_Phi z^gamma"),
        "gamma": _Key(float, 1.0, lambda x: 0.0 <= x <= 1.0, "gamma ∈ [0,1]", "hard-potential exponent"),
        "angular_b": _Key(float, 1.0, _pos, "angular_b > 0", "constant angular kernel b"),
        "angular_table": _Key(_str, "", None, "", "optional 'cos:b, cos:b, ...' table replacing angular_b"),
    },
    "grid": {
        "d": _Key(_int, 3, lambda x: x >= 3, "d >= 3", "velocity dimension"),
        "N": _Key(_int, 16, lambda x: x >= 4 and x % 2 == 0, "N even and >= 4", "points per axis"),
        "V": _Key(float, 6.0, _pos, "V > 0", "half width of the velocity cube"),
    },
    "initial": {
        "shape": _Key(_str, "gaussian", lambda x: x in ("gaussian", "zero", "spike", "snapshot"),
                      "shape ∈ {gaussian, zero, spike, snapshot}", "initial datum family"),
        "amplitude": _Key(float, 0.05, lambda x: x >= 0, "amplitude >= 0", "sup norm of the Gaussian part"),
        "temperature": _Key(float, 1.0, _pos, "temperature > 0", "variance of the Gaussian part"),
        "spike_amplitude": _Key(float, 0.0, lambda x: x >= 0, "spike_amplitude >= 0",
                                "height added at the central nodes (shape = spike)"),
        "spike_width": _Key(float, 0.5, _pos, "spike_width > 0", "standard deviation of the spike"),
        "snapshot": _Key(_str, "", None, "", "BNKF1 file read when shape = snapshot"),
    },
    "scheme": {
        "n": _Key(float, 4.0, _pos, "n > 0", "kernel truncation level"),
        "segments": _Key(_int, 1, lambda x: x >= 1, "segments >= 1", "continuation segments"),
        "dt_fraction": _Key(_opt_float, None, lambda x: x is None or 0 < x <= 1, "dt_fraction ∈ (0,1]",
                            "practical step as a fraction of Delta_n; auto = exactly Delta_n"),
        "ceiling_factor": _Key(float, 100.0, lambda x: x > 1, "ceiling_factor > 1",
                               "blow-up halt when sup f exceeds this multiple of sup f0"),
        "sphere_order": _Key(_int, 8, lambda x: x >= 1, "sphere_order >= 1", "sigma-quadrature order"),
    },
    "diagnostics": {
        "s": _Key(float, 3.0, lambda x: x > 2, "s > 2", "weight exponent of weighted norms"),
        "R0": _Key(_opt_float, None, lambda x: x is None or x > 0, "R0 > 0", "concentration radius; auto = criterion value"),
        "hyperplane_directions": _Key(_int, 16, lambda x: x >= 1, "hyperplane_directions >= 1", "plane directions"),
        "hyperplane_offsets": _Key(_int, 9, lambda x: x >= 1, "hyperplane_offsets >= 1", "offsets per direction"),
        "strong_tol": _Key(float, 1e-3, _pos, "strong_tol > 0", "tolerance of the nodewise conservation check"),
    },
    "mode": {
        "subcritical": _Key(_str, "derived", lambda x: x in ("stated", "derived"), "subcritical ∈ {stated, derived}",
                            "threshold coefficient used by the criteria report"),
    },
    "suites": {
        "povzner_samples": _Key(_int, 10_000, lambda x: x >= 1, "povzner_samples >= 1", "pairs per Povzner case"),
        "appendix_samples": _Key(_int, 64, lambda x: x >= 2, "appendix_samples >= 2", "points per appendix fit"),
        "xcheck_ladder": _Key(_int_list, (16, 24, 32), lambda x: len(x) >= 1 and all(n >= 4 and n % 2 == 0 for n in x),
                              "xcheck_ladder: even sizes >= 4", "grid sizes of the Carleman cross-check"),
        "xcheck_points": _Key(_int, 8, lambda x: x >= 1, "xcheck_points >= 1", "evaluation points per level"),
    },
    "io": {
        "out_dir": _Key(_str, "out", None, "", "output directory"),
        "snapshot_every": _Key(_int, 0, lambda x: x >= 0, "snapshot_every >= 0", "steps between snapshots; 0 = final only"),
        "csv_precision": _Key(_int, 15, lambda x: 1 <= x <= 17, "csv_precision ∈ [1,17]", "significant digits printed"),
    },
    "run": {
        "seed": _Key(_int, 0, lambda x: 0 <= x < 2 ** 64, "seed ∈ [0, 2^64)", "seed of every sampled suite"),
        "threads": _Key(_int, 0, lambda x: x >= 0, "threads >= 0", "compute threads; 0 = BNK_THREADS or all cores"),
    },
}

PRESETS: dict[str, dict[str, dict[str, Any]]] = {
    "hard_sphere": {"kernel": {"c_phi": 1.0, "gamma": 1.0, "angular_b": 1.0}, "grid": {"d": 3}},
    "desk_gaussian": {
        "kernel": {"c_phi": 1.0, "gamma": 1.0, "angular_b": 1.0},
        "grid": {"d": 3, "N": 16, "V": 6.0},
        "initial": {"shape": "gaussian", "amplitude": 0.05, "temperature": 1.0},
        "scheme": {"n": 4.0, "segments": 1},
    },
    # dense supercritical Gaussian: the centre gains about 1% per step on N = 16
    "spike": {
        "kernel": {"c_phi": 1.0, "gamma": 1.0, "angular_b": 1.0},
        "grid": {"d": 3, "N": 16, "V": 6.0},
        "initial": {"shape": "gaussian", "amplitude": 5.0, "temperature": 1.5},
        "scheme": {"n": 4.0, "segments": 12, "ceiling_factor": 1.03, "sphere_order": 4},
    },
    # low-mass, low-density datum for the global criterion
    "compliant": {
        "kernel": {"c_phi": 1.0, "gamma": 1.0, "angular_b": 1.0},
        "grid": {"d": 3, "N": 16, "V": 6.0},
        "initial": {"shape": "gaussian", "amplitude": 1e-4, "temperature": 1.0},
        "scheme": {"n": 4.0, "segments": 3},
    },
}


@dataclass(frozen=True)
class RunConfig:
    preset: str = "none"
    values: dict = field(default_factory=dict)

    def get(self, section: str, key: str):
        return self.values[section][key]

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def kernel_params(self) -> KernelParams:
        k = self.values["kernel"]
        if k["angular_table"]:
            xs, bs = _parse_table(k["angular_table"])
            ang = AngularKernel.table(xs, bs)
        else:
            ang = AngularKernel.const(k["angular_b"])
        return KernelParams(c_phi=k["c_phi"], gamma=k["gamma"], angular=ang, d=self.values["grid"]["d"])

    def with_overrides(self, section: str, **kw) -> "RunConfig":
        vals = {s: dict(v) for s, v in self.values.items()}
        for key, value in kw.items():
            spec = SCHEMA[section][key]
            if spec.check is not None and not spec.check(value):
                raise ConfigError(f"contract error {spec.rule!r}")
            vals[section][key] = value
        return RunConfig(self.preset, vals)

    def echo(self) -> str:
        """Effective configuration in the input format, one documented line per key."""
        lines = [f"preset = {self.preset}"]
        for sec, keys in SCHEMA.items():
            lines.append("")
            lines.append(f"[{sec}]")
            for key, spec in keys.items():
                lines.append(f"# {spec.doc}")
                lines.append(f"{key} = {_fmt(self.values[sec][key])}".rstrip())
        return "\n".join(lines) + "\n"


def _parse_table(text: str):
    xs, bs = [], []
    for item in text.split(","):
        if not item.strip():
            continue
        x, b = item.split(":")
        xs.append(float(x))
        bs.append(float(b))
    return xs, bs


def defaults(preset: str = "none") -> dict:
    vals = {sec: {k: spec.default for k, spec in keys.items()} for sec, keys in SCHEMA.items()}
    if preset != "none":
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}")
        for sec, kv in PRESETS[preset].items():
            vals[sec].update(kv)
    return vals


def parse_config(text: str) -> RunConfig:
    """Validated :class:`RunConfig` from configuration text."""
    entries = []
    preset = "none"
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno)
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {raw.strip()!r}", lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if section is None:
            if key != "preset":
                raise ConfigError(f"unknown top-level key {key!r}", lineno)
            if value not in PRESETS and value != "none":
                raise ConfigError(f"unknown preset {value!r}", lineno)
            preset = value
            continue
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]", lineno)
        entries.append((lineno, section, key, value))

    vals = defaults(preset)
    for lineno, sec, key, value in entries:
        spec = SCHEMA[sec][key]
        try:
            parsed = spec.parse(value)
        except ValueError:
            raise ConfigError(f"type mismatch for {key}: {value!r}", lineno) from None
        if spec.check is not None and not spec.check(parsed):
            raise ConfigError(f"contract error {spec.rule!r} for {key} = {value}", lineno)
        vals[sec][key] = parsed
    cfg = RunConfig(preset, vals)
    try:
        cfg.kernel_params()
    except InputContractError as exc:
        line = next((ln for ln, s, _, _ in entries if s in ("kernel", "grid")), None)
        raise ConfigError(f"contract error: {exc}", line) from None
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
