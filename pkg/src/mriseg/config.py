"""Pipeline configuration, the key-value config format and the reference parameter table.

Config files hold one ``key = value`` per line; ``#`` starts a comment.
Keys are the :class:`PipelineConfig` field names. Suite files are a
sequence of ``[case NAME]`` sections in the same format; an optional
``[defaults]`` section applies to every case, and a ``preset`` key pulls
in one row of :data:`PARAMETER_ROWS` before the section's own keys.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

from .core import BlurSpec, NoiseSpec
from .diffusion import DiffusionCoefficient, PicardSettings
from .segment import JenksSettings, StructuringElement


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    approach: str = "basic"
    # diffusion coefficient
    coefficient: str = "elastic_net"
    K: float = 0.1
    d_p: float = 1.2
    eps: float = 1e-4
    eta: float = 1e4
    rho: float | None = None
    spacing: str | float = "unit"
    # segmentation / enhancement
    n_cl: int = 2
    tau: float = 0.999
    n_b: int = 1
    sigma_f: float = 1.0
    region_grow: bool = True
    seeds: list | None = None
    rg_threshold: float = 0.1
    closing: bool = True
    equalization: str = "off"
    eq_tiles: tuple[int, int] = (8, 8)
    eq_clip: float = 0.01
    # outer iterations
    admm_steps: int = 1
    presegment_iters: int = 1
    # linear and Picard solver
    solver: str = "dpcg"
    precond: str = "jacobi"
    lin_tol: float = 1e-6
    lin_max_iter: int = 5000
    deflation_tiles: tuple[int, int] = (4, 4)
    picard_tol: float = 1e-3
    max_picard: int = 50
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.approach not in ("basic", "modified"):
            raise ConfigError(f"approach must be basic or modified, got {self.approach!r}")
        if self.equalization not in ("off", "global", "adaptive"):
            raise ConfigError(f"equalization must be off, global or adaptive, got {self.equalization!r}")
        if self.solver not in ("cg", "pcg", "dpcg"):
            raise ConfigError(f"unknown solver {self.solver!r}")
        if self.coefficient == "elastic_net":
            if not 0 < self.d_p < 2:
                raise ConfigError("elastic net needs 0 < d_p < 2")
            if not 0 < self.K <= 0.1:
                raise ConfigError("elastic net needs 0 < K <= 0.1")
        if self.eta <= 0 or (self.rho is not None and self.rho <= 0):
            raise ConfigError("eta and rho must be positive")
        if self.admm_steps < 1 or self.presegment_iters < 1:
            raise ConfigError("admm_steps and presegment_iters must be >= 1")
        if self.sigma_f <= 0:
            raise ConfigError("sigma_f must be positive")
        if not (self.spacing == "unit" or (isinstance(self.spacing, (int, float)) and self.spacing > 0)):
            raise ConfigError("spacing must be 'unit' or a positive number")
        try:
            self.diffusion_coefficient()
            self.jenks()
            self.structuring_element()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def diffusion_coefficient(self) -> DiffusionCoefficient:
        return DiffusionCoefficient(kind=self.coefficient, K=self.K, d_p=self.d_p, eps=self.eps)

    def jenks(self) -> JenksSettings:
        return JenksSettings(n_cl=self.n_cl, tau=self.tau)

    def structuring_element(self) -> StructuringElement:
        return StructuringElement(self.n_b)

    @property
    def penalty(self) -> float:
        return self.eta if self.rho is None else self.rho

    def grid_spacing(self, shape) -> float:
        """Pixel size; ``unit`` maps the longer image side onto [0, 1]."""
        if self.spacing == "unit":
            return 1.0 / (max(shape) - 1)
        return float(self.spacing)

    def picard(self, shape) -> PicardSettings:
        return PicardSettings(
            eta=self.penalty,
            max_picard=self.max_picard,
            picard_tol=self.picard_tol,
            solver=self.solver,
            precond=self.precond,
            lin_tol=self.lin_tol,
            lin_max_iter=self.lin_max_iter,
            tiles=tuple(self.deflation_tiles),
            spacing=self.grid_spacing(shape),
        )

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


# Reference parameter rows: (test image, approach) -> K, d_p, eta, n_cl, n_b
PARAMETER_ROWS = {
    ("noise0.1", "basic"): dict(K=0.1, d_p=1.2, eta=1e4, n_cl=2, n_b=1),
    ("noise0.1", "modified"): dict(K=0.1, d_p=1.9, eta=1e5, n_cl=2, n_b=2),
    ("noise0.3", "basic"): dict(K=0.1, d_p=1.8, eta=1e4, n_cl=2, n_b=1),
    ("noise0.3", "modified"): dict(K=0.1, d_p=1.9, eta=1e5, n_cl=2, n_b=1),
    ("noise0.5", "basic"): dict(K=0.1, d_p=1.8, eta=1e4, n_cl=2, n_b=1),
    ("noise0.5", "modified"): dict(K=0.1, d_p=1.9, eta=1e5, n_cl=2, n_b=1),
    ("blur-gaussian", "basic"): dict(K=0.1, d_p=1.0, eta=1e4, n_cl=2, n_b=0),
    ("blur-gaussian", "modified"): dict(K=0.1, d_p=1.8, eta=1e6, n_cl=2, n_b=2),
    ("blur-average", "basic"): dict(K=0.1, d_p=1.0, eta=1e4, n_cl=2, n_b=0),
    ("blur-average", "modified"): dict(K=0.1, d_p=1.5, eta=1e6, n_cl=2, n_b=2),
    ("blur-motion", "basic"): dict(K=0.1, d_p=1.0, eta=1e5, n_cl=2, n_b=0),
    ("blur-motion", "modified"): dict(K=0.1, d_p=1.5, eta=1e6, n_cl=2, n_b=1),
    ("papaya", "basic"): dict(K=0.1, d_p=1.9, eta=1e3, n_cl=3, n_b=1),
    ("papaya", "modified"): dict(K=0.1, d_p=1.0, eta=1e5, n_cl=3, n_b=1),
}

SYNTHETIC_IMAGES = ("noise0.1", "noise0.3", "noise0.5", "blur-gaussian", "blur-average", "blur-motion")

# Published scores in percent (JS, DSC, SA) for the synthetic images.
REFERENCE_SCORES = {
    ("noise0.1", "basic"): (98.52, 99.25, 99.66),
    ("noise0.3", "basic"): (97.80, 98.89, 99.49),
    ("noise0.5", "basic"): (97.51, 98.74, 99.42),
    ("blur-gaussian", "basic"): (97.69, 98.43, 99.46),
    ("blur-average", "basic"): (97.74, 98.86, 99.47),
    ("blur-motion", "basic"): (97.48, 98.73, 99.41),
    ("noise0.1", "modified"): (98.55, 99.27, 99.66),
    ("noise0.3", "modified"): (97.96, 98.97, 99.53),
    ("noise0.5", "modified"): (97.51, 98.74, 99.42),
    ("blur-gaussian", "modified"): (97.38, 98.67, 99.39),
    ("blur-average", "modified"): (97.62, 98.80, 99.44),
    ("blur-motion", "modified"): (98.11, 99.04, 99.56),
}

# Two-step (thresholding + k-means) baseline scores, transcribed for comparison.
TSIS_SCORES = {
    "noise0.1": (98.9, 99.4, 99.7),
    "noise0.3": (97.6, 98.9, 99.4),
    "noise0.5": (96.53, 98.2, 99.2),
    "blur-gaussian": (98.9, 98.9, 99.5),
    "blur-average": (98.3, 97.7, 98.9),
    "blur-motion": (99.4, 99.5, 99.9),
}


def preset(image: str, approach: str) -> PipelineConfig:
    try:
        row = PARAMETER_ROWS[(image, approach)]
    except KeyError:
        raise ConfigError(f"no preset for image {image!r} with approach {approach!r}") from None
    return PipelineConfig(approach=approach, **row)


def parse_degradation(text: str, seed: int = 0):
    """``none``, ``noise:VAR`` or ``blur:KIND``; ``noiseVAR``/``blur-KIND`` also accepted."""
    t = text.strip().lower().replace(" ", ":")
    if t in ("", "none"):
        return None
    if t.startswith("noise"):
        rest = t[5:].lstrip(":")
        return NoiseSpec(variance=float(rest), seed=seed)
    if t.startswith("blur"):
        rest = t[4:].lstrip(":-")
        return BlurSpec(kind=rest)
    raise ConfigError(f"cannot parse degradation {text!r}")


def format_degradation(d) -> str:
    if d is None:
        return "none"
    if isinstance(d, NoiseSpec):
        return f"noise:{d.variance:g}"
    return f"blur:{d.kind}"


_FIELDS = {f.name: f for f in fields(PipelineConfig)}


def _convert(name: str, raw: str):
    raw = raw.strip()
    default = _FIELDS[name].default
    if name == "seeds":
        if raw.lower() in ("", "none", "corners"):
            return None
        pairs = []
        for item in raw.split(";"):
            r, c = item.split(",")
            pairs.append((int(r), int(c)))
        return pairs
    if name == "rho":
        return None if raw.lower() in ("", "none") else float(raw)
    if name == "spacing":
        return "unit" if raw.lower() == "unit" else float(raw)
    if name in ("eq_tiles", "deflation_tiles"):
        a, b = raw.lower().replace("x", ",").split(",")
        return (int(a), int(b))
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(float(raw))
    if isinstance(default, float):
        return float(raw)
    return raw


def _parse_lines(lines):
    """Yield ``(section, key, value)``; section is None before any header."""
    section = None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            yield section, None, None
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        yield section, key, value


EXTRA_KEYS = ("preset", "degradation", "input", "truth")


def build_config(pairs: dict, base: PipelineConfig | None = None):
    """Apply ``pairs`` to ``base`` (or to a preset row). Returns ``(config, extras)``."""
    extras = {k: pairs[k] for k in EXTRA_KEYS if k in pairs}
    values = dataclasses.asdict(base) if base is not None else {}
    if "preset" in pairs:
        image, _, approach = pairs["preset"].partition("/")
        approach = pairs.get("approach", approach or "basic")
        values.update(dataclasses.asdict(preset(image.strip(), approach.strip())))
        extras.setdefault("degradation", image.strip())
    for key, raw in pairs.items():
        if key in EXTRA_KEYS:
            continue
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            values[key] = _convert(key, raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: {exc}") from exc
    return PipelineConfig(**values), extras


def load_config(path):
    pairs = {}
    for section, key, value in _parse_lines(Path(path).read_text().splitlines()):
        if key is None:
            raise ConfigError(f"{path}: sections are only allowed in suite files")
        pairs[key] = value
    return build_config(pairs)


@dataclass
class ExperimentCase:
    name: str
    degradation: object
    config: PipelineConfig
    image: str = ""
    expected: tuple | None = None
    extras: dict = field(default_factory=dict)


def load_suite(path) -> list[ExperimentCase]:
    sections: dict[str, dict] = {}
    order = []
    for section, key, value in _parse_lines(Path(path).read_text().splitlines()):
        if section is None:
            raise ConfigError(f"{path}: key {key!r} outside a section")
        if key is None:
            if section in sections:
                raise ConfigError(f"{path}: duplicate section [{section}]")
            sections[section] = {}
            order.append(section)
            continue
        sections[section][key] = value
    defaults = sections.get("defaults", {})
    cases = []
    for sec in order:
        if sec == "defaults":
            continue
        kind, _, name = sec.partition(" ")
        if kind != "case" or not name.strip():
            raise ConfigError(f"{path}: section headers must be [case NAME] or [defaults], got [{sec}]")
        pairs = {**defaults, **sections[sec]}
        cases.append(case_from_pairs(name.strip(), pairs))
    return cases


def case_from_pairs(name: str, pairs: dict) -> ExperimentCase:
    cfg, extras = build_config(pairs)
    image = extras.get("degradation", "none")
    degradation = parse_degradation(image, seed=cfg.seed)
    image_key = image.strip().lower().replace(":", "")
    if image_key.startswith("blur") and not image_key.startswith("blur-"):
        image_key = "blur-" + image_key[4:]
    return ExperimentCase(name=name, degradation=degradation, config=cfg, image=image_key,
                          expected=REFERENCE_SCORES.get((image_key, cfg.approach)), extras=extras)


def reference_suite(approaches=("basic", "modified"), images=SYNTHETIC_IMAGES, **overrides) -> list[ExperimentCase]:
    """The synthetic experiment grid with the reference parameter rows."""
    cases = []
    for approach in approaches:
        for image in images:
            cfg = preset(image, approach).replace(**overrides)
            cases.append(ExperimentCase(
                name=f"{image}-{approach}",
                degradation=parse_degradation(image, seed=cfg.seed),
                config=cfg,
                image=image,
                expected=REFERENCE_SCORES.get((image, approach)),
            ))
    return cases
