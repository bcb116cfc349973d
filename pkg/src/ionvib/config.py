"""Config-file handling: model files, run configs, hardware files, sidecars.

All files are INI-style key/value sections.  Physical quantities carry their
unit in the key name (``delta_ev``, ``tau_fs``, ``carrier_ev``); energies are
always eV on disk and converted to rad/fs on load.  Floats are written with
``repr`` so a load/save cycle is bit-exact.

Model files use sections [model], [modes], [drive].  Run configs add [run]
plus per-backend sections; the metadata sidecar written next to every output
is itself a complete run config (fully resolved values, seeds included), so
feeding it back reproduces the run byte-for-byte.  The [meta] section carries
versions and diagnostics and is ignored on load.
"""

from __future__ import annotations

import configparser
import dataclasses
import io

import numpy as np

from . import __version__
from .errors import ConfigError
from .model import (
    DriveSpec,
    Envelope,
    LvcmSpec,
    build_ci_model,
    build_plet_model,
    build_toy_model,
    build_vaet_model,
)
from .pulses import HardwareParams
from .units import ev_to_rad_per_fs, ev_to_rad_per_fs_complex, rad_per_fs_to_ev


def _parser() -> configparser.ConfigParser:
    p = configparser.ConfigParser(inline_comment_prefixes=("#",))
    p.optionxform = str  # keep key case
    return p


def _floats(text: str) -> list:
    return [float(tok) for tok in text.replace(",", " ").split()]


def _complexes(text: str) -> list:
    return [complex(tok) for tok in text.split()]


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


# --- model files -----------------------------------------------------------------


def spec_to_sections(spec: LvcmSpec) -> dict:
    """Model as config sections (energies in eV, full precision)."""
    m, n = spec.state_count, spec.mode_count
    model = {
        "states": str(m),
        "modes": str(n),
        "delta_ev": " ".join(repr(complex(rad_per_fs_to_ev(v))) for v in spec.delta.ravel()),
        "kappa_ev": " ".join(repr(complex(rad_per_fs_to_ev(v))) for v in spec.kappa.ravel()),
    }
    if spec.labels:
        model["labels"] = " ".join(spec.labels)
    sections = {"model": model}
    if n:
        sections["modes"] = {"nu_ev": " ".join(repr(float(rad_per_fs_to_ev(v))) for v in spec.nu)}
    if spec.drive is not None:
        d = spec.drive
        sections["drive"] = {
            "transitions": " ".join(f"{lo}:{hi}" for lo, hi in d.transitions),
            "dipoles": " ".join(f"{float(a)!r},{float(b)!r}" for a, b in d.dipoles),
            "polarization": " ".join(repr(complex(v)) for v in d.polarization),
            "carrier_ev": repr(float(rad_per_fs_to_ev(d.carrier_rad_per_fs))),
            "envelope": d.envelope.kind,
            "amplitude": repr(d.envelope.amplitude),
            "center_fs": repr(d.envelope.center_fs),
            "width_fs": repr(d.envelope.width_fs),
            "rwa": str(d.rwa).lower(),
            "rotating_states": " ".join(str(s) for s in d.rotating_states),
        }
    return sections


def spec_from_sections(sections) -> LvcmSpec:
    try:
        model = sections["model"]
    except KeyError:
        raise ConfigError("missing [model] section") from None
    preset = model.get("preset", "custom").strip().lower()
    if preset == "toy":
        return build_toy_model(int(model.get("modes", "2")), float(model.get("lambda_over_delta", "1.0")))
    if preset == "ci":
        return build_ci_model(
            float(model["kx_ev"]), float(model["kz_ev"]), float(model["nux_ev"]), float(model["nuz_ev"])
        )
    if preset == "vaet":
        return build_vaet_model(
            float(model.get("e_d_ev", "0.0")),
            float(model["e_a_ev"]),
            float(model["delta_ev"]),
            float(model["kappa_d1_ev"]),
            float(model["kappa_d2_ev"]),
            float(model["kappa_a2_ev"]),
            float(model["kappa_a3_ev"]),
            _floats(model["nu_ev"]),
        )
    if preset == "plet":
        drive = sections["drive"]
        env = Envelope(
            kind=drive.get("envelope", "constant"),
            amplitude=float(drive.get("amplitude", "1.0")),
            center_fs=float(drive.get("center_fs", "0.0")),
            width_fs=float(drive.get("width_fs", "1.0")),
        )
        return build_plet_model(
            _floats(model["omega_ev"]),
            _floats(model["mu1"]),
            _floats(model["mu2"]),
            complex(model["v1_ev"]),
            complex(model["v2_ev"]),
            _complexes(drive["polarization"]),
            float(drive["carrier_ev"]),
            env,
            rwa=parse_bool(drive.get("rwa", "true")),
        )
    if preset != "custom":
        raise ConfigError(f"unknown model preset {preset!r}", key="preset")
    m = int(model["states"])
    n = int(model["modes"])
    delta = np.array(_complexes(model["delta_ev"]), dtype=complex).reshape(m, m)
    kappa_list = _complexes(model.get("kappa_ev", "")) if n else []
    kappa = np.array(kappa_list, dtype=complex).reshape(m, m, n) if n else np.zeros((m, m, 0))
    nu_ev = np.array(_floats(sections["modes"]["nu_ev"])) if n else np.zeros(0)
    labels = tuple(model["labels"].split()) if "labels" in model else None
    drive = None
    if "drive" in sections:
        d = sections["drive"]
        transitions = tuple(tuple(int(x) for x in pair.split(":")) for pair in d["transitions"].split())
        dipoles = tuple(tuple(float(x) for x in tok.split(",")) for tok in d["dipoles"].split())
        drive = DriveSpec(
            transitions=transitions,
            dipoles=dipoles,
            polarization=tuple(_complexes(d["polarization"])),
            carrier_rad_per_fs=ev_to_rad_per_fs(float(d["carrier_ev"])),
            envelope=Envelope(
                kind=d.get("envelope", "constant"),
                amplitude=float(d.get("amplitude", "1.0")),
                center_fs=float(d.get("center_fs", "0.0")),
                width_fs=float(d.get("width_fs", "1.0")),
            ),
            rwa=parse_bool(d.get("rwa", "true")),
            rotating_states=tuple(int(s) for s in d.get("rotating_states", "").split()),
        )
    return LvcmSpec(
        ev_to_rad_per_fs_complex(delta),
        ev_to_rad_per_fs_complex(kappa),
        ev_to_rad_per_fs(nu_ev),
        drive=drive,
        labels=labels,
    )


def save_model(spec: LvcmSpec, path) -> None:
    p = _parser()
    for name, kv in spec_to_sections(spec).items():
        p[name] = kv
    with open(path, "w", encoding="utf-8") as fh:
        p.write(fh)


def load_model(path) -> LvcmSpec:
    p = _parser()
    if not p.read(path):
        raise ConfigError(f"cannot read model file {path}")
    return spec_from_sections({s: dict(p[s]) for s in p.sections()})


# --- hardware files ---------------------------------------------------------------


def hardware_to_sections(hw: HardwareParams) -> dict:
    cal = hw.duration_calibration
    return {
        "hardware": {
            "mode_frequency_bands_mhz": " ".join(f"{lo!r}:{hi!r}" for lo, hi in hw.mode_frequency_bands_mhz),
            "sideband_rabi_khz": f"{hw.sideband_rabi_khz[0]!r} {hw.sideband_rabi_khz[1]!r}",
            "carrier_rabi_khz": repr(hw.carrier_rabi_khz),
            "motional_coherence_ms": repr(hw.motional_coherence_ms),
            "heating_rate_quanta_per_s": repr(hw.heating_rate_quanta_per_s),
            "laser_coherence_ms": repr(hw.laser_coherence_ms),
            "cooling_ms": repr(hw.cooling_ms),
            "state_prep_us": repr(hw.state_prep_us),
            "measurement_us": repr(hw.measurement_us),
            "duration_slope_us_per_rad": " ".join(f"{n}:{c!r}" for n, (c, _) in sorted(cal.items())),
            "duration_floor_us": " ".join(f"{n}:{f!r}" for n, (_, f) in sorted(cal.items())),
        }
    }


def hardware_from_sections(sections) -> HardwareParams:
    h = sections.get("hardware", {})
    defaults = HardwareParams()
    if not h:
        return defaults

    def pairs(text):
        return tuple(tuple(float(x) for x in tok.split(":")) for tok in text.split())

    cal = dict(defaults.duration_calibration)
    if "duration_slope_us_per_rad" in h or "duration_floor_us" in h:
        slopes = {int(k): v for k, v in pairs(h.get("duration_slope_us_per_rad", ""))} or {
            n: c for n, (c, _) in cal.items()
        }
        floors = {int(k): v for k, v in pairs(h.get("duration_floor_us", ""))} or {
            n: f for n, (_, f) in cal.items()
        }
        cal = {n: (slopes[n], floors.get(n, 0.0)) for n in slopes}
    rabi = _floats(h["sideband_rabi_khz"]) if "sideband_rabi_khz" in h else defaults.sideband_rabi_khz
    return HardwareParams(
        mode_frequency_bands_mhz=pairs(h["mode_frequency_bands_mhz"])
        if "mode_frequency_bands_mhz" in h
        else defaults.mode_frequency_bands_mhz,
        sideband_rabi_khz=(rabi[0], rabi[1]),
        carrier_rabi_khz=float(h.get("carrier_rabi_khz", defaults.carrier_rabi_khz)),
        motional_coherence_ms=float(h.get("motional_coherence_ms", defaults.motional_coherence_ms)),
        heating_rate_quanta_per_s=float(
            h.get("heating_rate_quanta_per_s", defaults.heating_rate_quanta_per_s)
        ),
        laser_coherence_ms=float(h.get("laser_coherence_ms", defaults.laser_coherence_ms)),
        cooling_ms=float(h.get("cooling_ms", defaults.cooling_ms)),
        state_prep_us=float(h.get("state_prep_us", defaults.state_prep_us)),
        measurement_us=float(h.get("measurement_us", defaults.measurement_us)),
        duration_calibration=cal,
    )


def load_hardware(path) -> HardwareParams:
    p = _parser()
    if not p.read(path):
        raise ConfigError(f"cannot read hardware file {path}")
    return hardware_from_sections({s: dict(p[s]) for s in p.sections()})


# --- run configs -------------------------------------------------------------------

RUN_DEFAULTS = {
    "backend": "exact",
    "output": "trace.csv",
    "tau_fs": "400.0",
    "grid_points": "40",
    "seed": "1234",
    "initial_state": "0",
}

EXACT_DEFAULTS = {"eps_int": "1e-08", "eps_cut": "0.0001", "frame": "lab", "nbar": "0.0", "cutoffs": ""}
EHRENFEST_DEFAULTS = {"trajectories": "100", "sampling": "wigner_ground", "nbar": "0.0", "tol": "1e-10"}
ION_DEFAULTS = {
    "trotter_steps": "600",
    "cutoffs": "",
    "motional_dephasing": "true",
    "heating": "true",
    "laser_dephasing": "true",
    "runs_per_point": "0",
    "physical_rotations": "false",
    "check": "true",
}
ESTIMATE_DEFAULTS = {
    "lambdas": "1 5 10 20 30",
    "modes_list": "2 3 4 5",
    "runs_per_point": "100",
    "time_points": "40",
    "trotter_steps": "600",
}

BACKENDS = ("exact", "ehrenfest", "ion-ideal", "ion-noisy", "compile", "estimate")


@dataclasses.dataclass
class RunConfig:
    """Fully resolved run settings, ready to execute or to serialize as a sidecar."""

    sections: dict

    @property
    def backend(self) -> str:
        return self.sections["run"]["backend"]

    def section(self, name: str) -> dict:
        return self.sections.get(name, {})

    def spec(self) -> LvcmSpec:
        return spec_from_sections(self.sections)

    def hardware(self) -> HardwareParams:
        return hardware_from_sections(self.sections)


def resolve_run_config(sections: dict) -> RunConfig:
    """Fill in every default so the resolved config is self-contained."""
    out = {}
    out["run"] = {**RUN_DEFAULTS, **sections.get("run", {})}
    backend = out["run"]["backend"]
    if backend not in BACKENDS:
        raise ConfigError(f"unknown backend {backend!r}", key="backend")
    if "model" not in sections and backend != "estimate":
        raise ConfigError("missing [model] section")
    for name in ("model", "modes", "drive", "hardware"):
        if name in sections:
            out[name] = dict(sections[name])
    if backend == "exact":
        out["exact"] = {**EXACT_DEFAULTS, **sections.get("exact", {})}
    elif backend == "ehrenfest":
        out["ehrenfest"] = {**EHRENFEST_DEFAULTS, **sections.get("ehrenfest", {})}
    elif backend in ("ion-ideal", "ion-noisy", "compile"):
        out["ion"] = {**ION_DEFAULTS, **sections.get("ion", {})}
    elif backend == "estimate":
        out["estimate"] = {**ESTIMATE_DEFAULTS, **sections.get("estimate", {})}
    return RunConfig(out)


def load_run_config(path) -> RunConfig:
    p = _parser()
    try:
        if not p.read(path):
            raise ConfigError(f"cannot read config file {path}")
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"config parse error: {exc.message.splitlines()[0]}", line=line) from exc
    sections = {s: dict(p[s]) for s in p.sections() if s != "meta"}
    return resolve_run_config(sections)


def write_sidecar(config: RunConfig, path, diagnostics: dict | None = None) -> None:
    """Write the resolved config (plus a [meta] block ignored on load)."""
    p = _parser()
    for name, kv in config.sections.items():
        p[name] = {k: str(v) for k, v in kv.items()}
    meta = {"ionvib_version": __version__}
    if diagnostics:
        meta.update({k: str(v) for k, v in diagnostics.items()})
    p["meta"] = meta
    with open(path, "w", encoding="utf-8") as fh:
        p.write(fh)
