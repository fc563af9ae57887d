"""Run configuration: a flat ``key = value`` text format with dotted keys.

Example::

    # 40% symmetric noise, exponential EDF
    seed = 1
    data.source = synthetic
    synthetic.separation = 2.0
    corruption.kind = symmetric
    corruption.r = 0.4
    scheme = Unified
    edf.lambda = 0
    edf.beta = -0.33
    optimizer.kind = Momentum
    optimizer.lr = 0.01
    schedule.kind = Inv
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Optional, Tuple

from .. import core_math, edf
from ..core_math import LossKind
from ..data import SyntheticSpec
from ..edf import EdfFamily
from ..errors import ConfigError, InvalidInputError
from ..optim import LrSchedule, OptimizerSpec

# notes copied into run_meta.txt so results carry their assumptions
INTERPRETATION_NOTES = (
    "adam_delta is the denominator stabilizer added to sqrt(v_hat)",
    "adam beta1/beta2 default to 0.9/0.999",
    "weight decay is L2 coupled into the gradient",
    "GCE q defaults to 0.7 when not set",
    "DM monitoring loss is CCE; DM defines gradients only",
)


@dataclass(frozen=True)
class WeightScheme:
    """How per-example logit gradients are produced.

    mode "loss": plain loss gradient; "dn": loss gradient times 1/Z of that
    loss's weighting function; "dm": synthesized from an EDF family.
    """

    mode: str
    loss: Optional[LossKind] = None
    family: Optional[EdfFamily] = None

    def describe(self) -> str:
        if self.mode == "loss":
            return str(self.loss)
        if self.mode == "dn":
            return f"{self.loss}-DN"
        return f"DM[{self.family.describe()}]"

    @property
    def emphasis_mode(self) -> float:
        if self.mode in ("loss", "dn"):
            return core_math.emphasis_mode(self.loss)
        if self.family.tag == "Unified":
            return edf.emphasis_mode_analytic(self.family.param("lambda"))
        return edf.emphasis_mode_numeric(self.family)


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str = "none"
    r: float = 0.0
    pairs: Tuple[Tuple[int, int], ...] = ()

    def validate(self):
        if self.kind not in ("none", "symmetric", "asymmetric"):
            raise ConfigError(f"unknown corruption kind {self.kind!r}")
        if not 0.0 <= self.r <= 1.0:
            raise ConfigError(f"noise rate must be in [0, 1], got {self.r}")
        if self.kind == "asymmetric" and not self.pairs:
            raise ConfigError("asymmetric corruption needs corruption.pairs")
        return self


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    data_source: str = "synthetic"
    data_path: Optional[str] = None
    data_format: Optional[str] = None
    class_count: Optional[int] = None
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    synthetic_seed: Optional[int] = None
    corruption: CorruptionSpec = field(default_factory=CorruptionSpec)
    imbalance: Optional[Tuple[int, ...]] = None
    train_fraction: float = 0.8
    scheme: WeightScheme = field(default_factory=lambda: WeightScheme("loss", core_math.CCE))
    hidden: Tuple[int, ...] = (8,)
    activation: str = "relu"
    dropout: float = 0.0
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    schedule: LrSchedule = field(default_factory=LrSchedule)
    batch_size: int = 128
    iterations: int = 2000
    eval_every: int = 100
    output_dir: Optional[str] = None
    quad_points: int = edf.DEFAULT_QUAD_POINTS

    def validate(self):
        if self.data_source not in ("synthetic", "file"):
            raise ConfigError(f"data.source must be synthetic or file, got {self.data_source!r}")
        if self.data_source == "file" and not self.data_path:
            raise ConfigError("data.path is required when data.source = file")
        if self.data_source == "synthetic":
            self.synthetic.validate()
        self.corruption.validate()
        self.optimizer.validate()
        self.schedule.validate()
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("split.train_fraction must be in (0, 1)")
        if self.batch_size < 1 or self.iterations < 1 or self.eval_every < 1:
            raise ConfigError("batch_size, iterations and eval_every must be positive")
        if any(h < 1 for h in self.hidden):
            raise ConfigError(f"hidden sizes must be positive, got {self.hidden}")
        if self.activation not in ("relu", "tanh"):
            raise ConfigError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("net.dropout must be in [0, 1)")
        return self

    def with_scheme(self, scheme: WeightScheme) -> "RunConfig":
        return replace(self, scheme=scheme)


def parse_scheme(name: str, q=None, params=None) -> WeightScheme:
    """Build a scheme from a name such as CCE, GCE-DN, ED or Unified."""
    params = params or {}
    key = name.strip()
    upper = key.upper()
    dn = upper.endswith("-DN")
    base = upper[:-3] if dn else upper
    if base in core_math.LOSS_TAGS:
        loss = core_math.loss_from_name(base, q)
        return WeightScheme("dn" if dn else "loss", loss)
    tags = {t.upper(): t for t in edf.FAMILY_PARAMS}
    if upper not in tags:
        raise ConfigError(f"unknown weighting scheme {name!r}")
    tag = tags[upper]
    values = []
    for pname in edf.FAMILY_PARAMS[tag]:
        if pname not in params:
            raise ConfigError(f"{tag} needs edf.{pname}")
        values.append(float(params[pname]))
    try:
        return WeightScheme("dm", family=EdfFamily(tag, tuple(values)))
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from None


def parse_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _ints(value: str) -> Tuple[int, ...]:
    return tuple(int(v) for v in value.replace(" ", "").split(",") if v)


def _pairs(value: str):
    pairs = []
    for item in value.replace(" ", "").split(","):
        if item:
            a, b = item.split("-")
            pairs.append((int(a), int(b)))
    return tuple(pairs)


_OPT_KINDS = {k.lower(): k for k in ("SGD", "Momentum", "Nesterov", "Adam")}
_SCHED_KINDS = {"constant": "Constant", "step": "StepDecay", "stepdecay": "StepDecay", "inv": "Inv"}


def config_from_dict(kv: dict) -> RunConfig:
    """Turn parsed key/values into a validated RunConfig."""
    kv = dict(kv)
    used = set()

    def take(key, conv=str, default=None):
        if key not in kv:
            return default
        used.add(key)
        try:
            return conv(kv[key])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {key}: {kv[key]!r} ({exc})") from None

    base = RunConfig()
    syn_defaults = SyntheticSpec()
    synthetic = SyntheticSpec(
        class_count=take("synthetic.class_count", int, syn_defaults.class_count),
        per_class_count=take("synthetic.per_class_count", int, syn_defaults.per_class_count),
        feature_dim=take("synthetic.feature_dim", int, syn_defaults.feature_dim),
        class_center_separation=take("synthetic.separation", float, syn_defaults.class_center_separation),
        noise_sigma=take("synthetic.sigma", float, syn_defaults.noise_sigma),
    )
    corruption = CorruptionSpec(
        kind=take("corruption.kind", str.lower, "none"),
        r=take("corruption.r", float, 0.0),
        pairs=take("corruption.pairs", _pairs, ()),
    )
    od = OptimizerSpec()
    opt_kind = take("optimizer.kind", str.lower, od.kind.lower())
    if opt_kind not in _OPT_KINDS:
        raise ConfigError(f"unknown optimizer.kind {opt_kind!r}")
    optimizer = OptimizerSpec(
        kind=_OPT_KINDS[opt_kind],
        lr=take("optimizer.lr", float, od.lr),
        momentum=take("optimizer.momentum", float, od.momentum),
        adam_beta1=take("optimizer.beta1", float, od.adam_beta1),
        adam_beta2=take("optimizer.beta2", float, od.adam_beta2),
        adam_delta=take("optimizer.delta", float, od.adam_delta),
        weight_decay=take("optimizer.weight_decay", float, od.weight_decay),
    )
    sd = LrSchedule()
    sched_kind = take("schedule.kind", str.lower, "constant")
    if sched_kind not in _SCHED_KINDS:
        raise ConfigError(f"unknown schedule.kind {sched_kind!r}")
    schedule = LrSchedule(
        kind=_SCHED_KINDS[sched_kind],
        milestones=take("schedule.milestones", _ints, ()),
        factor=take("schedule.factor", float, sd.factor),
        gamma=take("schedule.gamma", float, sd.gamma),
        power=take("schedule.power", float, sd.power),
    )
    edf_params = {}
    for pname in ("psi", "beta", "alpha", "eta", "lambda"):
        v = take(f"edf.{pname}", float)
        if v is not None:
            edf_params[pname] = v
    scheme = parse_scheme(take("scheme", str, "CCE"), take("scheme.q", float), edf_params)

    cfg = RunConfig(
        seed=take("seed", int, base.seed),
        data_source=take("data.source", str.lower, base.data_source),
        data_path=take("data.path", str),
        data_format=take("data.format", str.lower),
        class_count=take("data.class_count", int),
        synthetic=synthetic,
        synthetic_seed=take("synthetic.seed", int),
        corruption=corruption,
        imbalance=take("imbalance.keep", _ints),
        train_fraction=take("split.train_fraction", float, base.train_fraction),
        scheme=scheme,
        hidden=take("net.hidden", _ints, base.hidden),
        activation=take("net.activation", str.lower, base.activation),
        dropout=take("net.dropout", float, base.dropout),
        optimizer=optimizer,
        schedule=schedule,
        batch_size=take("train.batch_size", int, base.batch_size),
        iterations=take("train.iterations", int, base.iterations),
        eval_every=take("train.eval_every", int, base.eval_every),
        output_dir=take("output_dir", str),
        quad_points=take("edf.quad_points", int, base.quad_points),
    )
    unknown = sorted(set(kv) - used)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return cfg.validate()


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(parse_text(fh.read(), str(path)))


def resolved_lines(cfg: RunConfig) -> list:
    """Every resolved setting, defaults included, as ``key = value`` lines."""
    lines = []

    def walk(prefix, obj):
        for f in fields(obj):
            v = getattr(obj, f.name)
            if hasattr(v, "__dataclass_fields__") and not isinstance(v, (WeightScheme,)):
                walk(f"{prefix}{f.name}.", v)
            else:
                lines.append(f"{prefix}{f.name} = {v}")

    walk("", cfg)
    lines.append(f"scheme.description = {cfg.scheme.describe()}")
    lines.append(f"scheme.emphasis_mode = {cfg.scheme.emphasis_mode!r}")
    for note in INTERPRETATION_NOTES:
        lines.append(f"note = {note}")
    return lines
