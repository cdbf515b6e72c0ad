"""Experiment configuration files.

One experiment per file, INI syntax::

    [experiment]
    kind = overline
    n_paths = 100000
    master_seed = 2024

    [circuit]
    L = 1
    R = 1
    V = fdr          ; sqrt(2 kB_tau R)
    kB_tau = 1

    [grid]
    dt = 0.002
    horizon = 20

    [schedule]
    N = 2
    lambda = 0.5     ; or exp:<rate>
    mu = 0.5

    [observables]
    energy = 20
    power = 10, 20

Unknown sections or keys are rejected, and every validation error names the
file line of the offending key.
"""

from __future__ import annotations

import configparser
import hashlib
import math
import os
import re
from dataclasses import dataclass, field

from . import bsde, circuit, mc
from .randpath import CircuitParams, TimeGrid

__all__ = ["ConfigError", "ExperimentConfig", "SEED_ENV"]

SEED_ENV = "FDRLAB_SEED"

_KINDS = ("physical", "overline", "underline", "bsde", "alpha")

_SECTIONS = {
    "experiment": {"kind", "id", "n_paths", "master_seed", "scheme"},
    "circuit": {"L", "R", "V", "kB_tau"},
    "initial": {"E0"},
    "grid": {"dt", "horizon"},
    "schedule": {"N", "lambda", "mu"},
    "particle": {"gamma", "kB_tau", "T"},
    "psi": {"kind", "normalization"},
    "alpha": {"alpha", "V", "L", "I0"},
    "observables": None,  # free keys: observable names
    "check": {"kind", "observable", "target", "bound", "k", "min_fraction"},
    "output": {"trajectories", "plot", "plot_points"},
}

_REQUIRED = {
    "physical": ("circuit", "grid"),
    "overline": ("circuit", "grid", "schedule"),
    "underline": ("circuit", "grid", "schedule"),
    "bsde": ("particle", "grid"),
    "alpha": ("grid",),
}


class ConfigError(ValueError):
    def __init__(self, message: str, source: str = "<config>", line: int | None = None):
        self.source = source
        self.line = line
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")


def _key_lines(text: str) -> dict:
    """Map ``(section, key)`` and ``(section, None)`` to 1-based line numbers."""
    lines = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", stripped)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, None), no)
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", stripped)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip()), no)
    return lines


@dataclass
class ExperimentConfig:
    raw: dict
    source: str = "<config>"
    lines: dict = field(default_factory=dict, repr=False)

    # ------------------------------------------------------------------ load
    @classmethod
    def from_text(cls, text: str, source: str = "<config>", env: dict | None = None):
        parser = configparser.ConfigParser(
            inline_comment_prefixes=(";", "#"), interpolation=None, strict=True
        )
        parser.optionxform = str
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            line = getattr(exc, "lineno", None)
            raise ConfigError(f"syntax error: {exc.message.splitlines()[0]}", source, line) from exc
        raw = {s: dict(parser[s]) for s in parser.sections()}
        cfg = cls(raw, source, _key_lines(text))
        cfg._apply_env(os.environ if env is None else env)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path, env: dict | None = None):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read(), str(path), env)

    @classmethod
    def from_dict(cls, raw: dict, source: str = "<embedded>"):
        cfg = cls({s: {k: str(v) for k, v in kv.items()} for s, kv in raw.items()}, source)
        cfg.validate()
        return cfg

    def _apply_env(self, env) -> None:
        seed = env.get(SEED_ENV)
        if seed is not None and seed != "":
            try:
                int(seed)
            except ValueError:
                raise ConfigError(f"{SEED_ENV}={seed!r} is not an integer", self.source) from None
            self.raw.setdefault("experiment", {})["master_seed"] = str(int(seed))

    # ----------------------------------------------------------- accessors
    def _fail(self, section, key, message):
        line = self.lines.get((section, key)) or self.lines.get((section, None))
        label = f"[{section}] {key}" if key else f"[{section}]"
        raise ConfigError(f"{label}: {message}", self.source, line)

    def _get(self, section, key, default=None):
        return self.raw.get(section, {}).get(key, default)

    def _number(self, section, key, default=None, positive=False, nonneg=False):
        text = self._get(section, key)
        if text is None:
            if default is None:
                self._fail(section, key, "missing required value")
            return default
        try:
            value = float(text)
        except ValueError:
            self._fail(section, key, f"expected a number, got {text!r}")
        if not math.isfinite(value):
            self._fail(section, key, f"must be finite, got {text!r}")
        if positive and not value > 0:
            self._fail(section, key, f"must be positive (got {text})")
        if nonneg and value < 0:
            self._fail(section, key, f"must be non-negative (got {text})")
        return value

    def _integer(self, section, key, default=None, minimum=None):
        text = self._get(section, key)
        if text is None:
            if default is None:
                self._fail(section, key, "missing required value")
            return default
        try:
            value = int(text)
        except ValueError:
            self._fail(section, key, f"expected an integer, got {text!r}")
        if minimum is not None and value < minimum:
            self._fail(section, key, f"must be >= {minimum} (got {text})")
        return value

    @property
    def kind(self) -> str:
        return self._get("experiment", "kind")

    @property
    def experiment_id(self) -> str:
        return self._get("experiment", "id") or self.kind

    @property
    def n_paths(self) -> int:
        return self._integer("experiment", "n_paths", minimum=1)

    @property
    def master_seed(self) -> int:
        return self._integer("experiment", "master_seed", default=0)

    # ------------------------------------------------------------ validate
    def validate(self) -> None:
        for section, keys in self.raw.items():
            if section not in _SECTIONS:
                self._fail(section, None, f"unknown section (allowed: {', '.join(_SECTIONS)})")
            allowed = _SECTIONS[section]
            if allowed is None:
                continue
            for key in keys:
                if key not in allowed:
                    self._fail(section, key, f"unknown key (allowed: {', '.join(sorted(allowed))})")
        if "experiment" not in self.raw:
            raise ConfigError("missing [experiment] section", self.source)
        kind = self.kind
        if kind not in _KINDS:
            self._fail("experiment", "kind", f"must be one of {', '.join(_KINDS)}, got {kind!r}")
        for section in _REQUIRED[kind]:
            if section not in self.raw:
                self._fail("experiment", "kind", f"a {kind} experiment needs a [{section}] section")
        self.n_paths
        self.master_seed
        experiment = self.build_experiment()
        obs = self.observables()
        if not obs:
            self._fail("observables", None, "at least one observable is required")
        for name, t in obs:
            if name not in experiment.observables:
                self._fail(
                    "observables",
                    name,
                    f"unknown observable for {kind} (choose from {', '.join(experiment.observables)})",
                )
            try:
                experiment.grid.index_of(t)
            except ValueError:
                self._fail("observables", name, f"time {t:g} is not a node of the grid")
        self.check_spec()
        self.output_spec()

    # -------------------------------------------------------------- build
    def grid(self) -> TimeGrid:
        dt = self._number("grid", "dt", positive=True)
        if self.kind == "bsde":
            horizon = self._number("particle", "T", positive=True)
        else:
            horizon = self._number("grid", "horizon", positive=True)
        try:
            return TimeGrid.from_horizon(dt, horizon)
        except ValueError as exc:
            self._fail("grid", "horizon", str(exc))

    def circuit_params(self) -> CircuitParams:
        L = self._number("circuit", "L", positive=True)
        R = self._number("circuit", "R", positive=True)
        kB_tau = self._number("circuit", "kB_tau", default=1.0, positive=True)
        v_text = self._get("circuit", "V")
        if v_text is None:
            self._fail("circuit", "V", "missing required value")
        if v_text.strip().lower() == "fdr":
            V = circuit.fdr_voltage(kB_tau, R)
        else:
            V = self._number("circuit", "V", nonneg=True)
        return CircuitParams(L=L, R=R, V=V, kB_tau=kB_tau)

    def initial_energy(self):
        text = self._get("initial", "E0", "0")
        if text.strip() == "equilibrium":
            return "equilibrium"
        return self._number("initial", "E0", default=0.0, nonneg=True)

    def schedule(self) -> circuit.ScheduleSpec:
        N = self._integer("schedule", "N", minimum=0)
        durations = {}
        for key in ("lambda", "mu"):
            text = self._get("schedule", key)
            if text is None:
                self._fail("schedule", key, "missing required value")
            try:
                durations[key] = circuit.Duration.parse(text)
            except ValueError as exc:
                self._fail("schedule", key, str(exc))
        if durations["lambda"].value is not None and not durations["lambda"].value > 0:
            self._fail("schedule", "lambda", "waiting times must be positive")
        if self.kind == "overline" and N < 1:
            self._fail("schedule", "N", "the overline family needs N >= 1")
        return circuit.ScheduleSpec(N, durations["lambda"], durations["mu"], self.kind)

    def build_experiment(self):
        kind = self.kind
        if kind in ("physical", "overline", "underline"):
            params = self.circuit_params()
            grid = self.grid()
            E0 = self.initial_energy()
            if kind == "physical":
                scheme = self._get("experiment", "scheme", "explicit")
                try:
                    return mc.PhysicalCircuit(params, grid, E0, scheme)
                except ValueError as exc:
                    self._fail("experiment", "scheme", str(exc))
            return mc.SpuriousCircuit(params, grid, self.schedule(), E0)
        if kind == "bsde":
            particle = bsde.ParticleParams(
                gamma=self._number("particle", "gamma", positive=True),
                kB_tau=self._number("particle", "kB_tau", default=1.0, positive=True),
                T=self._number("particle", "T", positive=True),
            )
            try:
                psi = bsde.PsiSpec(
                    kind=self._get("psi", "kind", "ou_form"),
                    normalization=self._get("psi", "normalization"),
                )
            except ValueError as exc:
                self._fail("psi", "kind", str(exc))
            dt = self._number("grid", "dt", positive=True)
            try:
                TimeGrid.from_horizon(dt, particle.T)
            except ValueError as exc:
                self._fail("grid", "dt", str(exc))
            return mc.BsdeExperiment(particle, psi, dt)
        alpha = self._number("alpha", "alpha", default=0.0)
        if not 0.0 <= alpha <= 1.0:
            self._fail("alpha", "alpha", f"must lie in [0, 1] (got {alpha:g})")
        return mc.AlphaExperiment(
            alpha,
            self.grid(),
            V=self._number("alpha", "V", default=1.0, positive=True),
            L=self._number("alpha", "L", default=1.0, positive=True),
            I0=self._number("alpha", "I0", default=0.0),
        )

    def observables(self) -> list:
        out = []
        for name, text in self.raw.get("observables", {}).items():
            for part in text.split(","):
                part = part.strip()
                if not part:
                    continue
                try:
                    t = float(part)
                except ValueError:
                    self._fail("observables", name, f"expected comma-separated times, got {text!r}")
                out.append((name, t))
        return out

    def check_spec(self) -> dict | None:
        if "check" not in self.raw:
            return None
        kind = self._get("check", "kind", "none")
        if kind == "none":
            return None
        kinds = ("equipartition", "target", "upper_bound", "zero_fraction")
        if kind not in kinds:
            self._fail("check", "kind", f"must be one of none, {', '.join(kinds)}")
        observable = self._get("check", "observable")
        if observable is None:
            self._fail("check", "observable", "missing required value (e.g. energy@10)")
        name, _, t = observable.partition("@")
        try:
            t = float(t)
        except ValueError:
            self._fail("check", "observable", f"expected name@time, got {observable!r}")
        if (name.strip(), t) not in self.observables():
            self._fail("check", "observable", f"{observable} is not listed in [observables]")
        spec = {"kind": kind, "name": name.strip(), "t": t, "k": self._number("check", "k", 3.0, positive=True)}
        if kind == "target":
            spec["target"] = self._number("check", "target")
        elif kind == "upper_bound":
            spec["bound"] = self._number("check", "bound")
        elif kind == "zero_fraction":
            if self.kind != "underline":
                self._fail("check", "kind", "zero_fraction applies to underline experiments")
            spec["min_fraction"] = self._number("check", "min_fraction", default=0.99, nonneg=True)
        elif kind == "equipartition" and self.kind not in ("physical", "overline", "underline"):
            self._fail("check", "kind", "equipartition applies to circuit experiments")
        return spec

    def output_spec(self) -> dict:
        plot = self._get("output", "plot", "none").strip()
        if plot != "none" and plot not in self.build_experiment().observables:
            self._fail("output", "plot", f"unknown observable {plot!r}")
        return {
            "trajectories": self._integer("output", "trajectories", default=0, minimum=0),
            "plot": None if plot == "none" else plot,
            "plot_points": self._integer("output", "plot_points", default=41, minimum=2),
        }

    # ------------------------------------------------------------ identity
    def canonical_text(self) -> str:
        lines = []
        for section in sorted(self.raw):
            for key in sorted(self.raw[section]):
                value = " ".join(str(self.raw[section][key]).split())
                lines.append(f"{section}.{key}={value}")
        return "\n".join(lines) + "\n"

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {s: dict(sorted(kv.items())) for s, kv in sorted(self.raw.items())}
