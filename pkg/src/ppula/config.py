"""INI-style run configuration with documented defaults.

Sections and keys (defaults reproduce the 128x128 two-class "simu1-mini"
experiment)::

    [meta]
    version = 1                  ; required, the only mandatory key

    [phantom]
    width = 128
    height = 128
    background = 1
    shapes = disk 64 64 32 2     ; ';'-separated: "disk ROW COL RADIUS LABEL" or
                                 ; "rect ROW0 ROW1 COL0 COL1 LABEL"
    alpha = 1.5, 0.6             ; one GGD shape per class
    beta = 1.0, 1.0              ; one GGD scale per class
    sigma2 = 0.013               ; noise variance
    psf_fc = 0.25                ; axial carrier, cycles per pixel
    psf_sigma_axial = 1.5
    psf_sigma_lateral = 2.5
    psf_size = 15
    seed = 0

    [sampler]
    gamma = 0.09                 ; PP-ULA step
    lam = 0.1                    ; preconditioner floor
    mh_step = 0.1                ; shape random-walk std
    theta = 1.0                  ; initial Potts granularity
    theta_target = 0.05          ; isolated-point target, 'none' disables tuning
    theta_every = 50
    theta_factor = 1.05
    seed = 0
    mm_iters = 5
    dfb_max_iter = 200
    dfb_tol = 1e-6
    dfb_eta_fraction = 0.95      ; eta = fraction * 2 / ||Q||
    eps_v = 1e-10
    literal_zero_rule = false
    sweep = checkerboard         ; or raster
    freeze_q_sigma2 = false      ; keep the initial sigma2 inside Q

    [chain]
    burn_in = 1500
    total_iters = 3000
    n_classes = 2
    trf_sampler = ppula          ; or pula
    record_stride = 10
    store_samples = false

    [metrics]
    cnr_window_1 = 54 74 54 74   ; ROW0 ROW1 COL0 COL1, half-open
    cnr_window_2 = 4 24 4 24
    bmode_dynamic_range_db = 40

Unknown sections or keys are rejected so that typos do not silently fall
back to defaults.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field

from .baselines import BmodeParams
from .gibbs import ChainConfig
from .metrics import CnrWindows
from .phantom import Disk, PhantomSpec, Rectangle
from .prox import DfbConfig
from .samplers import SamplerConfig

CONFIG_VERSION = 1


class ConfigError(ValueError):
    """Invalid, incomplete or unsupported configuration."""


DEFAULTS = {
    "phantom": {
        "width": "128", "height": "128", "background": "1",
        "shapes": "disk 64 64 32 2",
        "alpha": "1.5, 0.6", "beta": "1.0, 1.0", "sigma2": "0.013",
        "psf_fc": "0.25", "psf_sigma_axial": "1.5", "psf_sigma_lateral": "2.5",
        "psf_size": "15", "seed": "0",
    },
    "sampler": {
        "gamma": "0.09", "lam": "0.1", "mh_step": "0.1", "theta": "1.0",
        "theta_target": "0.05", "theta_every": "50", "theta_factor": "1.05",
        "seed": "0", "mm_iters": "5", "dfb_max_iter": "200", "dfb_tol": "1e-6",
        "dfb_eta_fraction": "0.95", "eps_v": "1e-10", "literal_zero_rule": "false",
        "sweep": "checkerboard", "freeze_q_sigma2": "false",
    },
    "chain": {
        "burn_in": "1500", "total_iters": "3000", "n_classes": "2",
        "trf_sampler": "ppula", "record_stride": "10", "store_samples": "false",
    },
    "metrics": {
        "cnr_window_1": "54 74 54 74", "cnr_window_2": "4 24 4 24",
        "bmode_dynamic_range_db": "40",
    },
}
REQUIRED = {"meta": ("version",)}


@dataclass
class RunConfig:
    phantom: PhantomSpec
    phantom_seed: int
    chain: ChainConfig
    cnr_windows: CnrWindows
    bmode: BmodeParams
    text: str = field(default="", repr=False)

    @property
    def digest(self):
        """SHA-256 of the resolved configuration text."""
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()


def default_config_text():
    lines = ["[meta]", f"version = {CONFIG_VERSION}", ""]
    for section, keys in DEFAULTS.items():
        lines.append(f"[{section}]")
        lines += [f"{k} = {v}" for k, v in keys.items()]
        lines.append("")
    return "\n".join(lines)


def _floats(text, key):
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"{key}: expected a list of numbers, got {text!r}") from None


def _parse_shapes(text):
    shapes = []
    for item in filter(None, (s.strip() for s in text.split(";"))):
        kind, *nums = item.split()
        vals = _floats(" ".join(nums), "phantom.shapes")
        if kind == "disk" and len(vals) == 4:
            shapes.append(Disk(vals[0], vals[1], vals[2], int(vals[3])))
        elif kind == "rect" and len(vals) == 5:
            shapes.append(Rectangle(*(int(v) for v in vals)))
        else:
            raise ConfigError(f"phantom.shapes: cannot parse {item!r}")
    return shapes


class _Reader:
    def __init__(self, cp):
        self.cp = cp

    def raw(self, section, key):
        return self.cp.get(section, key, fallback=DEFAULTS[section][key])

    def get(self, section, key, conv):
        text = self.raw(section, key)
        try:
            return conv(text)
        except ValueError:
            raise ConfigError(f"{section}.{key}: invalid value {text!r}") from None

    def bool(self, section, key):
        text = self.raw(section, key).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{section}.{key}: expected a boolean, got {text!r}")


def parse_config(text, seed=None, sampler=None):
    """Build a :class:`RunConfig` from INI text.

    ``seed`` overrides both the phantom and the sampler seed; ``sampler``
    overrides ``chain.trf_sampler``.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    for section, keys in REQUIRED.items():
        for key in keys:
            if not cp.has_option(section, key):
                raise ConfigError(f"missing required key {section}.{key}")
    for section in cp.sections():
        allowed = set(DEFAULTS.get(section, {})) | set(REQUIRED.get(section, ()))
        if not allowed:
            raise ConfigError(f"unknown section [{section}]")
        for key in cp.options(section):
            if key not in allowed:
                raise ConfigError(f"unknown key {section}.{key}")
    version = cp.get("meta", "version").strip()
    if version != str(CONFIG_VERSION):
        raise ConfigError(f"meta.version: unsupported configuration version {version!r}")

    if seed is not None:
        for section in ("phantom", "sampler"):
            if not cp.has_section(section):
                cp.add_section(section)
            cp.set(section, "seed", str(int(seed)))
    if sampler is not None:
        if not cp.has_section("chain"):
            cp.add_section("chain")
        cp.set("chain", "trf_sampler", sampler)

    r = _Reader(cp)
    try:
        spec = PhantomSpec(
            width=r.get("phantom", "width", int),
            height=r.get("phantom", "height", int),
            shapes=_parse_shapes(r.raw("phantom", "shapes")),
            background=r.get("phantom", "background", int),
            alpha=tuple(_floats(r.raw("phantom", "alpha"), "phantom.alpha")),
            beta=tuple(_floats(r.raw("phantom", "beta"), "phantom.beta")),
            sigma2=r.get("phantom", "sigma2", float),
            psf_fc=r.get("phantom", "psf_fc", float),
            psf_sigma_axial=r.get("phantom", "psf_sigma_axial", float),
            psf_sigma_lateral=r.get("phantom", "psf_sigma_lateral", float),
            psf_size=r.get("phantom", "psf_size", int),
        )
        spec.ggd  # validates alpha/beta
        target = r.raw("sampler", "theta_target").strip().lower()
        dfb = DfbConfig(max_iter=r.get("sampler", "dfb_max_iter", int),
                        tol=r.get("sampler", "dfb_tol", float),
                        eta_fraction=r.get("sampler", "dfb_eta_fraction", float))
        scfg = SamplerConfig(
            gamma=r.get("sampler", "gamma", float),
            lam=r.get("sampler", "lam", float),
            mh_step=r.get("sampler", "mh_step", float),
            theta=r.get("sampler", "theta", float),
            theta_target=None if target in ("none", "") else r.get("sampler", "theta_target", float),
            theta_every=r.get("sampler", "theta_every", int),
            theta_factor=r.get("sampler", "theta_factor", float),
            rng_seed=r.get("sampler", "seed", int),
            mm_iters=r.get("sampler", "mm_iters", int),
            dfb=dfb,
            eps_v=r.get("sampler", "eps_v", float),
            literal_zero_rule=r.bool("sampler", "literal_zero_rule"),
            sweep=r.raw("sampler", "sweep").strip(),
            freeze_q_sigma2=r.bool("sampler", "freeze_q_sigma2"),
        )
        chain = ChainConfig(
            burn_in=r.get("chain", "burn_in", int),
            total_iters=r.get("chain", "total_iters", int),
            n_classes=r.get("chain", "n_classes", int),
            sampler=scfg,
            trf_sampler=r.raw("chain", "trf_sampler").strip(),
            record_stride=r.get("chain", "record_stride", int),
            store_samples=r.bool("chain", "store_samples"),
        )
        w1 = _floats(r.raw("metrics", "cnr_window_1"), "metrics.cnr_window_1")
        w2 = _floats(r.raw("metrics", "cnr_window_2"), "metrics.cnr_window_2")
        if len(w1) != 4 or len(w2) != 4:
            raise ConfigError("CNR windows need four integers: ROW0 ROW1 COL0 COL1")
        windows = CnrWindows(tuple(int(v) for v in w1), tuple(int(v) for v in w2))
        bm = BmodeParams(r.get("metrics", "bmode_dynamic_range_db", float))
        phantom_seed = r.get("phantom", "seed", int)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    if spec.n_classes != chain.n_classes:
        raise ConfigError("phantom alpha/beta length must equal chain.n_classes")
    if phantom_seed < 0 or scfg.rng_seed < 0:
        raise ConfigError("seeds must be non-negative")
    return RunConfig(spec, phantom_seed, chain, windows, bm, text=_resolved_text(cp))


def _resolved_text(cp):
    lines = ["[meta]", f"version = {CONFIG_VERSION}"]
    for section, keys in DEFAULTS.items():
        lines.append(f"[{section}]")
        for key in keys:
            lines.append(f"{key} = {cp.get(section, key, fallback=keys[key]).strip()}")
    return "\n".join(lines) + "\n"


def load_config(path=None, seed=None, sampler=None):
    """Read a configuration file; ``None`` gives the defaults."""
    if path is None:
        text = default_config_text()
    else:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    return parse_config(text, seed=seed, sampler=sampler)
