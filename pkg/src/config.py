""" Run configuration: a flat INI file validated against a published schema.

Example::

    [model]
    n = 10
    d = 2
    confinement = mixture
    interaction = quadratic
    epsilon = 0.01

    [integrator]
    duration = 1.0
    steps = 10

Every key is addressed as ``section.key``; unknown keys, missing required
keys and unparsable values raise ConfigurationError naming the key and its
line.
"""

import configparser
import hashlib
import json
import logging
import math
import re
from collections import OrderedDict

from src.coupling import CouplingParams
from src.experiments import ExperimentConfig
from src.integrator import IntegratorConfig
from src.model import GaussianMixture, MeanFieldModel, Quadratic, QuadraticInteraction, Rosenbrock, ZeroInteraction
from src.rng import MODEL_CONSTRUCTION, BatchStreams
from src.sampler import parse_observable
from src.theory import RegularityParams, derive_constants

logger = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    """Invalid run configuration; ``key`` is the offending ``section.key``."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = ""
        if key is not None:
            where = " [%s%s]" % (key, "" if line is None else ", line %d" % line)
        super(ConfigurationError, self).__init__("%s%s" % (message, where))


def _int(low=None):
    def parse(text):
        value = int(text)
        if low is not None and value < low:
            raise ValueError("must be >= %d" % low)
        return value
    return parse


def _float(low=None, strict=False, high=None):
    def parse(text):
        value = float(text)
        if math.isnan(value):
            raise ValueError("must not be nan")
        if low is not None and (value <= low if strict else value < low):
            raise ValueError("must be %s %s" % (">" if strict else ">=", low))
        if high is not None and value > high:
            raise ValueError("must be <= %s" % high)
        return value
    return parse


def _choice(*options):
    def parse(text):
        value = text.strip().lower()
        if value not in options:
            raise ValueError("must be one of %s" % ", ".join(options))
        return value
    return parse


def _sign(text):
    value = int(text)
    if value not in (1, -1):
        raise ValueError("must be +1 or -1")
    return value


def _bool(text):
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError("must be a boolean")


def _list(item):
    def parse(text):
        values = [item(part) for part in text.split(",") if part.strip()]
        if not values:
            raise ValueError("must list at least one value")
        return tuple(values)
    return parse


def _means(text):
    rows = []
    for row in text.split(";"):
        if row.strip():
            rows.append(tuple(float(v) for v in row.split(",")))
    if not rows or len(set(len(r) for r in rows)) != 1:
        raise ValueError("means must be rows 'x,y; x,y' of equal length")
    return tuple(rows)


def _str(text):
    return text.strip()


# section.key -> (parser, default, required)
SCHEMA = OrderedDict([
    ("model.n", (_int(1), None, True)),
    ("model.d", (_int(1), None, True)),
    ("model.confinement", (_choice("quadratic", "mixture", "rosenbrock"), "quadratic", False)),
    ("model.stiffness", (_float(0.0, strict=True), 1.0, False)),
    ("model.means", (_means, None, False)),
    ("model.mixture_components", (_int(1), 20, False)),
    ("model.mixture_low", (_float(), 0.0, False)),
    ("model.mixture_high", (_float(), 10.0, False)),
    ("model.rosenbrock_a", (_float(), 1.0, False)),
    ("model.rosenbrock_b", (_float(0.0, strict=True), 10.0, False)),
    ("model.interaction", (_choice("zero", "quadratic"), "quadratic", False)),
    ("model.interaction_sign", (_sign, 1, False)),
    ("model.epsilon", (_float(), 0.0, False)),
    ("model.pair_mode", (_choice("sequential", "vectorized"), "sequential", False)),
    ("integrator.duration", (_float(0.0, strict=True), None, True)),
    ("integrator.steps", (_int(0), None, True)),
    ("coupling.gamma", (_float(0.0, strict=True), None, False)),
    ("coupling.r_tilde", (_float(0.0), math.inf, False)),
    ("coupling.tol", (_float(0.0, strict=True), 1e-5, False)),
    ("coupling.max_steps", (_int(0), 500, False)),
    ("theory.K", (_float(0.0, strict=True), None, False)),
    ("theory.L", (_float(0.0, strict=True), None, False)),
    ("theory.L_tilde", (_float(0.0), 0.0, False)),
    ("theory.R", (_float(0.0), 0.0, False)),
    ("theory.epsilon", (_float(0.0), None, False)),
    ("theory.h1", (_float(0.0), None, False)),
    ("theory.L_H", (_float(0.0), None, False)),
    ("theory.L_H_tilde", (_float(0.0), None, False)),
    ("theory.delta0", (_float(0.0, strict=True), None, False)),
    ("theory.eps_tilde", (_float(0.0, strict=True), None, False)),
    ("study.replicas", (_int(1), 100, False)),
    ("study.steps", (_int(0), 1000, False)),
    ("study.thin", (_int(1), 1, False)),
    ("study.burn_in", (_int(0), 0, False)),
    ("study.window", (_int(1), None, False)),
    ("study.observable", (_str, "mean:0", False)),
    ("study.initializer", (_choice("auto", "box", "gaussian"), "auto", False)),
    ("study.init_scale", (_float(0.0, strict=True), 5.0, False)),
    ("study.step_ladder", (_list(_int(1)), None, False)),
    ("study.reference_factor", (_int(2), 64, False)),
    ("study.n_list", (_list(_int(1)), None, False)),
    ("study.replica_list", (_list(_int(1)), None, False)),
    ("study.epsilon_list", (_list(_float(0.0)), None, False)),
    ("study.sign_list", (_list(_sign), None, False)),
    ("study.record_positions", (_bool, False, False)),
    ("study.x_separation", (_float(0.0, strict=True), 0.1, False)),
    ("study.draws", (_int(1), 100000, False)),
    ("study.inside_fraction", (_float(0.0, high=1.0), 0.5, False)),
])

SECTIONS = tuple(OrderedDict((key.split(".")[0], None) for key in SCHEMA))

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s\[][^=:]*?)\s*[=:]")


def _line_index(text):
    """Map section.key (and bare sections) to the 1-based line that defines them."""
    index = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        match = _SECTION_RE.match(line)
        if match:
            section = match.group(1).strip()
            index.setdefault(section, lineno)
            continue
        match = _KEY_RE.match(line)
        if match and section is not None:
            index.setdefault("%s.%s" % (section, match.group(1).strip()), lineno)
    return index


class RunConfig(object):
    """Validated configuration values keyed by ``section.key``, defaults filled in."""

    def __init__(self, values, given, lines=None, source=None):
        self.values = values
        self.given = given
        self.lines = lines or {}
        self.source = source

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        value = self.values.get(key)
        return default if value is None else value

    def has(self, key):
        return key in self.given

    def has_section(self, section):
        return any(key.startswith(section + ".") for key in self.given)

    def line(self, key):
        return self.lines.get(key)

    def error(self, message, key):
        return ConfigurationError(message, key=key, line=self.line(key))

    def to_dict(self):
        return OrderedDict((key, self.values[key]) for key in SCHEMA)

    def to_json_string(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self):
        """SHA-256 of the canonical JSON form of the validated values."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def parse_config(text, source=None):
    lines = _line_index(text)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source or "<config>")
    except configparser.DuplicateOptionError as e:
        raise ConfigurationError("duplicate key", key="%s.%s" % (e.section, e.option), line=e.lineno)
    except configparser.DuplicateSectionError as e:
        raise ConfigurationError("duplicate section", key=e.section, line=e.lineno)
    except configparser.Error as e:
        raise ConfigurationError("unparsable configuration: %s" % e.message.splitlines()[0])

    values, given = OrderedDict(), set()
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigurationError("unknown section", key=section, line=lines.get(section))
        for option, raw in parser.items(section):
            key = "%s.%s" % (section, option)
            if key not in SCHEMA:
                raise ConfigurationError("unknown key", key=key, line=lines.get(key))
            try:
                values[key] = SCHEMA[key][0](raw)
            except ValueError as e:
                raise ConfigurationError("invalid value %r: %s" % (raw, e), key=key, line=lines.get(key))
            given.add(key)

    for key, (_, default, required) in SCHEMA.items():
        if key in values:
            continue
        if required:
            raise ConfigurationError("missing required key", key=key)
        values[key] = default
    return RunConfig(values, given, lines, source)


def load_config(path):
    try:
        with open(path, "r") as f:
            text = f.read()
    except OSError as e:
        raise ConfigurationError("cannot read config file %s: %s" % (path, e.strerror))
    return parse_config(text, source=path)


def draw_mixture_means(components, d, low, high, seed):
    """Mixture means uniform on [low, high]^d from the model-construction stream."""
    return BatchStreams(seed, stream=0, batch=1, purpose=MODEL_CONSTRUCTION).uniform_box((components, d), low, high)


def build_model(rc, seed):
    n, d = rc["model.n"], rc["model.d"]
    kind = rc["model.confinement"]
    try:
        if kind == "quadratic":
            confinement = Quadratic(rc["model.stiffness"])
        elif kind == "rosenbrock":
            confinement = Rosenbrock(rc["model.rosenbrock_a"], rc["model.rosenbrock_b"])
            confinement.check_dimension(d)
        else:
            if rc.has("model.means"):
                means = rc["model.means"]
            else:
                if rc["model.mixture_high"] <= rc["model.mixture_low"]:
                    raise rc.error("mixture_high must exceed mixture_low", "model.mixture_high")
                means = draw_mixture_means(rc["model.mixture_components"], d, rc["model.mixture_low"],
                                           rc["model.mixture_high"], seed)
            confinement = GaussianMixture(means)
            confinement.check_dimension(d)
    except ConfigurationError:
        raise
    except ValueError as e:
        raise rc.error(str(e), "model.d" if rc.has("model.d") else "model.confinement")

    if rc["model.interaction"] == "quadratic":
        interaction = QuadraticInteraction(rc["model.interaction_sign"])
    else:
        interaction = ZeroInteraction()
    return MeanFieldModel(confinement, interaction, rc["model.epsilon"], n, d, rc["model.pair_mode"])


def build_integrator(rc):
    return IntegratorConfig(rc["integrator.duration"], rc["integrator.steps"])


def build_regularity(rc):
    """RegularityParams from [theory], or None when K and L are not given."""
    if not rc.has("theory.K") and not rc.has("theory.L"):
        return None
    for key in ("theory.K", "theory.L"):
        if not rc.has(key):
            raise rc.error("theory section needs both K and L", key)
    epsilon = rc.get("theory.epsilon", abs(rc["model.epsilon"]))
    try:
        return RegularityParams(
            K=rc["theory.K"], L=rc["theory.L"], L_tilde=rc["theory.L_tilde"], R=rc["theory.R"], epsilon=epsilon,
            L_H=rc["theory.L_H"], L_H_tilde=rc["theory.L_H_tilde"])
    except ValueError as e:
        raise rc.error(str(e), "theory.K")


def theory_h1(rc):
    """h1 for the condition checks: explicit, else the integrator step size."""
    if rc.has("theory.h1"):
        return rc["theory.h1"]
    return build_integrator(rc).step_size


def build_coupling(rc, regularity=None):
    """CouplingParams; gamma and r_tilde default to the derived constants when regularity is known."""
    gamma = rc.get("coupling.gamma", 1.0)
    r_tilde = rc["coupling.r_tilde"]
    if regularity is not None:
        consts = derive_constants(regularity, rc["integrator.duration"])
        if not rc.has("coupling.gamma"):
            gamma = consts.gamma
        if not rc.has("coupling.r_tilde"):
            r_tilde = consts.R_tilde
    return CouplingParams(gamma, r_tilde, rc["coupling.tol"], rc["coupling.max_steps"])


def build_experiment(rc, seed, threads=1, progress=False):
    """ExperimentConfig for the studies, from the [model], [integrator], [coupling], [theory] and [study] sections."""
    regularity = build_regularity(rc)
    model = build_model(rc, seed)
    try:
        parse_observable(rc["study.observable"]).check(model.d)
    except ValueError as e:
        raise rc.error(str(e), "study.observable")
    try:
        integrator = build_integrator(rc)
    except ValueError as e:
        raise rc.error(str(e), "integrator.steps")
    try:
        coupling = build_coupling(rc, regularity)
    except ValueError as e:
        raise rc.error(str(e), "coupling.gamma")
    try:
        return ExperimentConfig(
            model=model, integrator=integrator, coupling=coupling, seed=seed,
            replicas=rc["study.replicas"], steps=rc["study.steps"], thin=rc["study.thin"],
            burn_in=rc["study.burn_in"], window=rc["study.window"], observable=rc["study.observable"],
            initializer=rc["study.initializer"], init_scale=rc["study.init_scale"],
            step_ladder=rc["study.step_ladder"], reference_factor=rc["study.reference_factor"],
            n_list=rc["study.n_list"], replica_list=rc["study.replica_list"],
            epsilon_list=rc["study.epsilon_list"], sign_list=rc["study.sign_list"],
            record_positions=rc["study.record_positions"], x_separation=rc["study.x_separation"],
            draws=rc["study.draws"], inside_fraction=rc["study.inside_fraction"],
            regularity=regularity, threads=threads, progress=progress)
    except ValueError as e:
        key = "study.replicas"
        if "ladder" in str(e):
            key = "study.step_ladder"
        elif "replica_list" in str(e):
            key = "study.replica_list"
        raise rc.error(str(e), key)
