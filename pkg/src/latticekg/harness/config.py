"""Experiment configuration: strict INI parsing with a canonical echo.

Sections are [model], [lattice], [run], [output].  Unknown keys are hard
errors (a typo in omega or lam would silently invalidate the physics), all
defaults are materialized into the canonical form, and emit/parse round-trip
exactly.  Cross-field constraints that would only surface mid-run (light
cone, Strichartz admissibility) are checked here and name the keys involved.
"""

import configparser
import math

from ..errors import ConfigError
from ..oscillatory import critical_velocity

_REQUIRED = object()

KINDS = (
    "spectrum",
    "rotation",
    "gaps",
    "evolve",
    "decay",
    "strichartz",
    "nonlinear",
    "combes-thomas",
    "balakrishnan",
    "vdc-probe",
)


class _Key:
    def __init__(self, kind, default=_REQUIRED, choices=None, minv=None, maxv=None):
        self.kind = kind
        self.default = default
        self.choices = choices
        self.minv = minv
        self.maxv = maxv


def _parse_floats(text):
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def _parse_complex_list(text):
    out = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        parts = item.split(",")
        if len(parts) == 1:
            out.append(complex(float(parts[0]), 0.0))
        elif len(parts) == 2:
            out.append(complex(float(parts[0]), float(parts[1])))
        else:
            raise ValueError("complex entries are 're' or 're,im'")
    if not out:
        raise ValueError("empty list")
    return tuple(out)


def _parse_coefficients(text):
    out = {}
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        kpart, _, vpart = item.partition(":")
        if not vpart:
            raise ValueError("coefficient entries are 'k:re,im'")
        k = tuple(int(tok) for tok in kpart.split())
        parts = vpart.split(",")
        if len(parts) == 1:
            out[k] = complex(float(parts[0]), 0.0)
        elif len(parts) == 2:
            out[k] = complex(float(parts[0]), float(parts[1]))
        else:
            raise ValueError("coefficient entries are 'k:re,im'")
    if not out:
        raise ValueError("empty coefficient list")
    return out


def _parse_formats(text):
    toks = tuple(sorted(set(text.replace(",", " ").split())))
    for tok in toks:
        if tok not in ("csv", "json", "bin"):
            raise ValueError("formats are a subset of {csv, json, bin}")
    if not toks:
        raise ValueError("at least one output format")
    return toks


_PARSERS = {
    "int": int,
    "float": float,
    "str": lambda s: s.strip(),
    "floats": _parse_floats,
    "complexes": _parse_complex_list,
    "coeffs": _parse_coefficients,
    "formats": _parse_formats,
}

_MODEL = {
    "d": _Key("int", default=1, minv=1),
    "potential": _Key("str", choices=("zero", "cos", "custom")),
    "lam": _Key("float", default=None),
    "coefficients": _Key("coeffs", default=None),
    "omega": _Key("floats", default=None),
    "eta": _Key("float", default=1.5),
    "k_max": _Key("int", default=30, minv=1),
    "theta": _Key("float", default=None),
    "theta_grid": _Key("int", default=None, minv=1),
    "m": _Key("float", default=1.0),
    "r": _Key("float", default=0.5),
}

_LATTICE = {
    "n": _Key("int", minv=1),
    "boundary": _Key("str", default="dirichlet", choices=("dirichlet",)),
}

_OUTPUT = {
    "directory": _Key("str", default="out"),
    "formats": _Key("formats", default=("csv", "json")),
}

_SITE_DATA = {
    "phi_site": _Key("int", default=0),
    "phi_amplitude": _Key("float", default=1.0),
    "psi_site": _Key("int", default=0),
    "psi_amplitude": _Key("float", default=0.0),
}

_RUN_COMMON = {
    "kind": _Key("str", choices=KINDS),
    "seed": _Key("int", minv=0, maxv=2**64 - 1),
}

_RUN_KINDS = {
    "spectrum": {},
    "rotation": {
        "e_min": _Key("float"),
        "e_max": _Key("float"),
        "e_points": _Key("int", minv=2),
        "n_iter": _Key("int", default=10**6, minv=1000),
    },
    "gaps": {
        "e_min": _Key("float"),
        "e_max": _Key("float"),
        "e_points": _Key("int", minv=2),
        "n_iter": _Key("int", default=10**6, minv=1000),
        "k_label": _Key("int", default=3, minv=1),
        "rho_tol": _Key("float", default=1e-3, minv=0.0),
    },
    "evolve": dict(
        _SITE_DATA,
        t_max=_Key("float", minv=0.0),
        t_min=_Key("float", default=0.0),
        samples=_Key("int", default=201, minv=1),
        grid=_Key("str", default="uniform", choices=("uniform", "geometric")),
        store=_Key("str", default="norms", choices=("norms", "full")),
    ),
    "decay": dict(
        _SITE_DATA,
        t_min=_Key("float", default=50.0),
        t_max=_Key("float", default=1500.0),
        samples=_Key("int", default=240, minv=200),
    ),
    "strichartz": dict(
        _SITE_DATA,
        tau=_Key("float"),
        r_list=_Key("floats", default=(6.0,)),
        t1=_Key("float", default=100.0),
        t2=_Key("float", default=400.0),
        dt=_Key("float", default=0.25),
        q=_Key("float", default=None),
        r=_Key("float", default=None),
    ),
    "nonlinear": dict(
        _SITE_DATA,
        p=_Key("float", default=9.0),
        sign=_Key("int", choices=(1, -1)),
        dt=_Key("float"),
        t_end=_Key("float"),
        record_every=_Key("int", default=0, minv=0),
        store=_Key("str", default="norms", choices=("norms", "full")),
    ),
    "combes-thomas": {
        "z": _Key("complexes"),
        "k_site": _Key("int", default=0),
    },
    "balakrishnan": {
        "n_nodes": _Key("int", default=128, minv=8),
    },
    "vdc-probe": {
        "t_min": _Key("float", default=100.0, minv=1.0),
        "t_max": _Key("float", default=10000.0),
        "t_points": _Key("int", default=12, minv=8),
        "which": _Key("str", default="cos", choices=("cos", "sinc")),
        "tol": _Key("float", default=1e-9),
    },
}


class ExperimentConfig:
    """Canonicalized experiment description; equality is field equality."""

    def __init__(self, data):
        self.data = data

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.data == other.data

    def section(self, name):
        return self.data[name]

    @property
    def kind(self):
        return self.data["run"]["kind"]

    @property
    def seed(self):
        return self.data["run"]["seed"]

    def thetas(self):
        """The theta sample(s): one value, or a uniform grid over [0, 2pi)."""
        model = self.data["model"]
        if model["theta_grid"] is not None:
            count = model["theta_grid"]
            return tuple(2.0 * math.pi * i / count for i in range(count))
        return (model["theta"],)


def _convert(section, key, spec, raw):
    try:
        value = _PARSERS[spec.kind](raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(
            "%s.%s: cannot parse %r as %s (%s)" % (section, key, raw, spec.kind, exc),
            keys=("%s.%s" % (section, key),),
        )
    if spec.choices is not None and value not in spec.choices:
        raise ConfigError(
            "%s.%s: %r is not one of %s" % (section, key, value, list(spec.choices)),
            keys=("%s.%s" % (section, key),),
        )
    if spec.minv is not None and value < spec.minv:
        raise ConfigError(
            "%s.%s: %s is below the minimum %s" % (section, key, value, spec.minv),
            keys=("%s.%s" % (section, key),),
        )
    if spec.maxv is not None and value > spec.maxv:
        raise ConfigError(
            "%s.%s: %s exceeds the maximum %s" % (section, key, value, spec.maxv),
            keys=("%s.%s" % (section, key),),
        )
    return value


def _read_section(cp, name, schema):
    raw = dict(cp[name]) if cp.has_section(name) else {}
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(
            "unknown key(s) in [%s]: %s" % (name, ", ".join(unknown)),
            keys=tuple("%s.%s" % (name, k) for k in unknown),
        )
    out = {}
    for key, spec in schema.items():
        if key in raw:
            out[key] = _convert(name, key, spec, raw[key])
        elif spec.default is _REQUIRED:
            raise ConfigError(
                "missing required key %s.%s" % (name, key),
                keys=("%s.%s" % (name, key),),
            )
        else:
            out[key] = spec.default
    return out


def _cross_validate(data):
    model, lattice, run = data["model"], data["lattice"], data["run"]

    if model["m"] <= 0.0:
        raise ConfigError("model.m must be positive", keys=("model.m",))
    if model["r"] <= 0.0:
        raise ConfigError("model.r must be positive", keys=("model.r",))
    if model["eta"] <= model["d"] - 1:
        raise ConfigError(
            "model.eta must exceed d-1 = %d" % (model["d"] - 1),
            keys=("model.eta", "model.d"),
        )
    if model["theta"] is not None and model["theta_grid"] is not None:
        raise ConfigError(
            "model.theta and model.theta_grid are mutually exclusive",
            keys=("model.theta", "model.theta_grid"),
        )
    if model["theta"] is None and model["theta_grid"] is None:
        model["theta"] = 0.0

    if model["potential"] == "cos":
        if model["lam"] is None:
            raise ConfigError("potential=cos requires model.lam", keys=("model.lam",))
        if model["coefficients"] is not None:
            raise ConfigError(
                "model.coefficients only applies to potential=custom",
                keys=("model.coefficients", "model.potential"),
            )
    elif model["potential"] == "custom":
        if model["coefficients"] is None:
            raise ConfigError(
                "potential=custom requires model.coefficients",
                keys=("model.coefficients",),
            )
        for k in model["coefficients"]:
            if len(k) != model["d"]:
                raise ConfigError(
                    "coefficient index %s has length %d, expected d=%d"
                    % (k, len(k), model["d"]),
                    keys=("model.coefficients", "model.d"),
                )
    else:  # zero
        if model["lam"] is not None:
            raise ConfigError(
                "model.lam has no effect with potential=zero",
                keys=("model.lam", "model.potential"),
            )

    if model["potential"] == "zero":
        if model["omega"] is None:
            model["omega"] = (0.0,) * model["d"]
    else:
        if model["omega"] is None:
            raise ConfigError(
                "a non-zero potential requires model.omega", keys=("model.omega",)
            )
        if len(model["omega"]) != model["d"]:
            raise ConfigError(
                "model.omega has %d components, expected d=%d"
                % (len(model["omega"]), model["d"]),
                keys=("model.omega", "model.d"),
            )
        for comp in model["omega"]:
            if not 0.0 < comp < 2.0 * math.pi:
                raise ConfigError(
                    "model.omega components must lie in (0, 2pi)", keys=("model.omega",)
                )

    kind = run["kind"]
    if kind in ("rotation", "gaps") and run["e_max"] <= run["e_min"]:
        raise ConfigError("run.e_max must exceed run.e_min", keys=("run.e_min", "run.e_max"))

    if kind == "vdc-probe" and run["t_max"] <= run["t_min"]:
        raise ConfigError("run.t_max must exceed run.t_min", keys=("run.t_min", "run.t_max"))

    if kind == "evolve":
        if run["grid"] == "geometric" and run["t_min"] <= 0.0:
            raise ConfigError(
                "geometric grids need run.t_min > 0", keys=("run.t_min", "run.grid")
            )
        if run["t_max"] <= run["t_min"] and run["samples"] > 1:
            raise ConfigError("run.t_max must exceed run.t_min", keys=("run.t_min", "run.t_max"))

    if kind == "decay":
        if run["t_max"] < 100.0:
            raise ConfigError("decay fits need run.t_max >= 100", keys=("run.t_max",))
        if run["t_min"] <= 0.0 or run["t_max"] <= run["t_min"]:
            raise ConfigError(
                "decay needs 0 < t_min < t_max", keys=("run.t_min", "run.t_max")
            )

    if kind == "strichartz":
        if not 0.0 < run["tau"] < 1.0 / 3.0:
            raise ConfigError("run.tau must lie in (0, 1/3)", keys=("run.tau",))
        if run["t2"] <= run["t1"]:
            raise ConfigError("run.t2 must exceed run.t1", keys=("run.t1", "run.t2"))
        if (run["q"] is None) != (run["r"] is None):
            raise ConfigError(
                "run.q and run.r must be given together", keys=("run.q", "run.r")
            )
        if run["q"] is not None:
            q, r, tau = run["q"], run["r"], run["tau"]
            if r < 2.0 or q < 2.0:
                raise ConfigError("q and r must be >= 2", keys=("run.q", "run.r"))
            lhs = 0.0 if math.isinf(q) else 2.0 / q
            rhs = tau * (1.0 - (0.0 if math.isinf(r) else 2.0 / r))
            if abs(lhs - rhs) > 1e-12:
                raise ConfigError(
                    "pair (q=%g, r=%g) is not admissible for tau=%g: 2/q=%g but "
                    "tau(1-2/r)=%g" % (q, r, tau, lhs, rhs),
                    keys=("run.q", "run.r"),
                )
        for r in run["r_list"]:
            if r < 2.0:
                raise ConfigError("run.r_list entries must be >= 2", keys=("run.r_list",))

    if kind == "nonlinear":
        if run["p"] <= 1.0:
            raise ConfigError("run.p must exceed 1", keys=("run.p",))
        if run["dt"] <= 0.0 or run["t_end"] <= 0.0:
            raise ConfigError(
                "run.dt and run.t_end must be positive", keys=("run.dt", "run.t_end")
            )

    if kind == "balakrishnan" and 2 * lattice["n"] + 1 > 512:
        raise ConfigError(
            "balakrishnan emits a dense matrix; window M = 2n+1 must stay <= 512",
            keys=("lattice.n",),
        )

    horizon_key = {"evolve": "t_max", "decay": "t_max", "strichartz": "t2", "nonlinear": "t_end"}
    if kind in horizon_key:
        t_hor = run[horizon_key[kind]]
        v_max, _ = critical_velocity(model["m"])
        support = max(abs(run["phi_site"]), abs(run["psi_site"]))
        required = support + 1.05 * v_max * t_hor + 10.0
        if lattice["n"] < required:
            raise ConfigError(
                "lattice.n=%d cannot certify the light cone for run.%s=%g: "
                "need n >= %.1f" % (lattice["n"], horizon_key[kind], t_hor, required),
                keys=("lattice.n", "run." + horizon_key[kind]),
            )


def parse_config(text):
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("malformed config: %s" % exc)
    known = {"model", "lattice", "run", "output"}
    extra = sorted(set(cp.sections()) - known)
    if extra:
        raise ConfigError("unknown section(s): %s" % ", ".join(extra))
    for name in ("model", "lattice", "run"):
        if not cp.has_section(name):
            raise ConfigError("missing required section [%s]" % name)
    if cp.defaults():
        raise ConfigError("top-level keys outside a section are not allowed")

    run_raw = dict(cp["run"])
    if "kind" not in run_raw:
        raise ConfigError("missing required key run.kind", keys=("run.kind",))
    kind = _convert("run", "kind", _RUN_COMMON["kind"], run_raw["kind"])
    run_schema = dict(_RUN_COMMON)
    run_schema.update(_RUN_KINDS[kind])

    data = {
        "model": _read_section(cp, "model", _MODEL),
        "lattice": _read_section(cp, "lattice", _LATTICE),
        "run": _read_section(cp, "run", run_schema),
        "output": _read_section(cp, "output", _OUTPUT),
    }
    _cross_validate(data)
    return ExperimentConfig(data)


def parse_config_file(path):
    with open(path, "r") as fh:
        return parse_config(fh.read())


def _fmt_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return value
    if isinstance(value, complex):
        return "%s,%s" % (repr(value.real), repr(value.imag))
    if isinstance(value, dict):  # potential coefficients
        items = sorted(value.items())
        return ";".join(
            "%s:%s,%s" % (" ".join(str(c) for c in k), repr(v.real), repr(v.imag))
            for k, v in items
        )
    if isinstance(value, tuple):
        if value and isinstance(value[0], complex):
            return ";".join(_fmt_value(v) for v in value)
        return " ".join(_fmt_value(v) for v in value)
    raise TypeError("cannot format %r" % (value,))


def emit_config(config):
    """Canonical text form; parse(emit(config)) == config."""
    lines = []
    for section in sorted(config.data):
        lines.append("[%s]" % section)
        for key in sorted(config.data[section]):
            value = config.data[section][key]
            if value is None:
                continue
            lines.append("%s = %s" % (key, _fmt_value(value)))
        lines.append("")
    return "\n".join(lines)
