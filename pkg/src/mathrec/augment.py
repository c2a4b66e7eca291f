"""Training-time image corruptions for formula images.

Images are ``uint8`` arrays of shape ``(H, W, 3)``; every function returns a
new array of the same shape and dtype.  Randomness comes only from the
``numpy.random.Generator`` passed in.

Each weather corruption is a pointwise blend ``x + a * (target - x)``, where
the target field is drawn independently of severity and the weight ``a``
grows with severity.  The change in every pixel therefore never shrinks as
severity goes up.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import cv2
import numpy as np

from mathrec.errors import ConfigError, InvalidKernel, UnknownKind

MORPHOLOGY = ("dilate", "erode")
WEATHER = ("fog", "frost", "rain", "snow", "shadow")
KINDS = MORPHOLOGY + WEATHER + ("blur", "jpeg", "perspective")
# pipeline order; dilate/erode share one exclusive draw
ORDER = ("perspective", "morphology", "fog", "frost", "rain", "snow", "shadow", "blur", "jpeg")

MORPH_KERNEL = (3, 3, 5, 5, 7)
FOG_STRENGTH = (0.25, 0.5, 0.8, 1.2, 1.8)
FROST_WEIGHT = (0.15, 0.25, 0.35, 0.45, 0.55)
RAIN_DENSITY = (0.2, 0.4, 0.6, 0.8, 1.0)
SNOW_DENSITY = (0.2, 0.4, 0.6, 0.8, 1.0)
SHADOW_DARKNESS = (0.15, 0.25, 0.35, 0.45, 0.55)
BLUR_SIGMA = (0.4, 0.6, 0.8, 1.0, 1.3)
JPEG_QUALITY = (80, 65, 50, 35, 20)
PERSPECTIVE_JITTER = (0.01, 0.02, 0.03, 0.04, 0.05)


def _check_image(image: np.ndarray) -> None:
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError(f"expected uint8 image of shape (H, W, 3), got {image.dtype} {image.shape}")


def _check_severity(severity: int) -> None:
    if not 1 <= severity <= 5:
        raise ValueError(f"severity must be in 1..5, got {severity}")


def _to_uint8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(x), 0, 255).astype(np.uint8)


def morphological(image: np.ndarray, kind: str, kernel: int) -> np.ndarray:
    """Grow (``dilate``) or thin (``erode``) dark ink on a light background.

    ``dilate`` is a per-channel minimum filter, ``erode`` a maximum filter,
    both over a ``kernel x kernel`` square.
    """
    _check_image(image)
    if kind not in MORPHOLOGY:
        raise UnknownKind(f"unknown morphology {kind!r}")
    if not isinstance(kernel, (int, np.integer)) or kernel < 1 or kernel % 2 == 0:
        raise InvalidKernel(f"kernel must be an odd integer >= 1, got {kernel!r}")
    if kernel == 1:
        return image.copy()
    element = np.ones((kernel, kernel), np.uint8)
    # cv2 names the min filter "erode"; border pixels are replicated away
    op = cv2.erode if kind == "dilate" else cv2.dilate
    return op(image, element, borderType=cv2.BORDER_REPLICATE)


def _blend(image: np.ndarray, target: np.ndarray, weight: np.ndarray) -> np.ndarray:
    x = image.astype(np.float32)
    if weight.ndim == 2:
        weight = weight[..., None]
    if target.ndim == 2:
        target = target[..., None]
    return _to_uint8(x + weight * (target - x))


def _smooth_field(shape: tuple[int, int], rng: np.random.Generator, cells: int = 4) -> np.ndarray:
    """Low-frequency field in [0, 1] from a bicubically upsampled random grid."""
    h, w = shape
    gh = max(2, cells)
    gw = max(2, int(round(cells * w / max(h, 1))))
    grid = rng.random((gh, gw)).astype(np.float32)
    up = cv2.resize(grid, (w, h), interpolation=cv2.INTER_CUBIC)
    lo, hi = float(up.min()), float(up.max())
    return (up - lo) / (hi - lo) if hi > lo else np.zeros_like(up)


def _fog(image, severity, rng):
    strength = FOG_STRENGTH[severity - 1]
    target = 255.0 * (0.55 + 0.45 * _smooth_field(image.shape[:2], rng))
    # (x + s * F) / (1 + s): additive brightness then renormalization
    return _blend(image, target, np.full(image.shape[:2], strength / (1 + strength), np.float32))


def _frost(image, severity, rng):
    h, w = image.shape[:2]
    texture = 0.6 * _smooth_field((h, w), rng, cells=8) + 0.4 * rng.random((h, w)).astype(np.float32)
    crystals = np.zeros((h, w), np.float32)
    for _ in range(max(3, (h * w) // 400)):
        x0, y0 = rng.integers(0, w), rng.integers(0, h)
        angle = rng.uniform(0, np.pi)
        length = rng.uniform(3, 12)
        x1, y1 = int(x0 + length * np.cos(angle)), int(y0 + length * np.sin(angle))
        cv2.line(crystals, (int(x0), int(y0)), (x1, y1), 1.0, 1, cv2.LINE_AA)
    texture = np.clip(texture + 0.5 * crystals, 0, 1)
    target = 170.0 + 85.0 * texture
    weight = FROST_WEIGHT[severity - 1] * (0.6 + 0.4 * _smooth_field((h, w), rng, cells=6))
    return _blend(image, target, weight)


def _streak_mask(shape, rng, count, density, draw):
    mask = np.zeros(shape, np.float32)
    active = int(round(count * density))
    for k in range(count):
        params = draw(rng)
        if k < active:
            params(mask)
    return mask


def _rain(image, severity, rng):
    h, w = image.shape[:2]
    angle = np.deg2rad(rng.uniform(-20, 20))
    count = max(4, (h * w) // 150)

    def draw(r):
        x0, y0 = r.uniform(-0.1 * w, 1.1 * w), r.uniform(-0.1 * h, h)
        length = r.uniform(0.15, 0.5) * h
        x1, y1 = x0 + length * np.sin(angle), y0 + length * np.cos(angle)
        return lambda m: cv2.line(m, (int(x0), int(y0)), (int(x1), int(y1)), 1.0, 1, cv2.LINE_AA)

    mask = _streak_mask((h, w), rng, count, RAIN_DENSITY[severity - 1], draw)
    return _blend(image, np.float32(150.0), 0.6 * np.clip(mask, 0, 1))


def _snow(image, severity, rng):
    h, w = image.shape[:2]
    count = max(4, (h * w) // 120)

    def draw(r):
        x, y = int(r.integers(0, w)), int(r.integers(0, h))
        radius = int(r.integers(1, 3))
        return lambda m: cv2.circle(m, (x, y), radius, 1.0, -1, cv2.LINE_AA)

    mask = _streak_mask((h, w), rng, count, SNOW_DENSITY[severity - 1], draw)
    mask = cv2.GaussianBlur(np.clip(mask, 0, 1), (3, 3), 0.7)
    return _blend(image, np.float32(205.0), 0.8 * mask)


def _shadow(image, severity, rng):
    h, w = image.shape[:2]
    n_vertices = int(rng.integers(3, 6))
    xs = rng.uniform(-0.2 * w, 1.2 * w, n_vertices)
    ys = rng.uniform(-0.2 * h, 1.2 * h, n_vertices)
    order = np.argsort(np.arctan2(ys - ys.mean(), xs - xs.mean()))
    polygon = np.stack([xs[order], ys[order]], 1).astype(np.int32)
    mask = np.zeros((h, w), np.float32)
    cv2.fillPoly(mask, [polygon], 1.0)
    soft = max(3, (min(h, w) // 8) | 1)
    mask = cv2.GaussianBlur(mask, (soft, soft), 0)
    # multiplicative darkening == blend toward black
    return _blend(image, np.float32(0.0), SHADOW_DARKNESS[severity - 1] * mask)


_WEATHER_FUNCS = {"fog": _fog, "frost": _frost, "rain": _rain, "snow": _snow, "shadow": _shadow}


def weather_noise(image: np.ndarray, kind: str, severity: int,
                  rng: np.random.Generator) -> np.ndarray:
    _check_image(image)
    if kind not in _WEATHER_FUNCS:
        raise UnknownKind(f"unknown weather kind {kind!r}; expected one of {WEATHER}")
    _check_severity(severity)
    return _WEATHER_FUNCS[kind](image, severity, rng)


def blur(image: np.ndarray, severity: int) -> np.ndarray:
    _check_image(image)
    _check_severity(severity)
    return cv2.GaussianBlur(image, (0, 0), BLUR_SIGMA[severity - 1])


def jpeg(image: np.ndarray, severity: int) -> np.ndarray:
    _check_image(image)
    _check_severity(severity)
    ok, buf = cv2.imencode(".jpg", image, [cv2.IMWRITE_JPEG_QUALITY, JPEG_QUALITY[severity - 1]])
    if not ok:
        raise RuntimeError("JPEG encoding failed")
    return cv2.imdecode(buf, cv2.IMREAD_COLOR)


def perspective(image: np.ndarray, severity: int, rng: np.random.Generator) -> np.ndarray:
    _check_image(image)
    _check_severity(severity)
    h, w = image.shape[:2]
    jitter = PERSPECTIVE_JITTER[severity - 1]
    src = np.float32([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]])
    offsets = rng.uniform(-jitter, jitter, (4, 2)) * np.float32([w, h])
    dst = (src + offsets).astype(np.float32)
    matrix = cv2.getPerspectiveTransform(src, dst)
    return cv2.warpPerspective(image, matrix, (w, h), flags=cv2.INTER_LINEAR,
                               borderMode=cv2.BORDER_CONSTANT, borderValue=(255, 255, 255))


def apply_kind(image: np.ndarray, kind: str, severity: int, rng: np.random.Generator) -> np.ndarray:
    """Apply one named corruption at ``severity``."""
    if kind in MORPHOLOGY:
        _check_severity(severity)
        return morphological(image, kind, MORPH_KERNEL[severity - 1])
    if kind in WEATHER:
        return weather_noise(image, kind, severity, rng)
    if kind == "blur":
        return blur(image, severity)
    if kind == "jpeg":
        return jpeg(image, severity)
    if kind == "perspective":
        return perspective(image, severity, rng)
    raise UnknownKind(f"unknown augmentation kind {kind!r}")


@dataclass
class KindConfig:
    probability: float = 0.15
    severity: tuple[int, int] = (1, 3)


@dataclass
class AugmentConfig:
    """Per-kind probability and severity range; kinds absent from ``kinds`` are off."""

    kinds: dict[str, KindConfig] = field(
        default_factory=lambda: {k: KindConfig() for k in KINDS})
    seed: int = 0

    def __post_init__(self):
        kinds = {}
        for name, cfg in self.kinds.items():
            if name not in KINDS:
                raise ConfigError(f"augment.kinds: unknown kind {name!r}")
            if isinstance(cfg, Mapping):
                cfg = KindConfig(**cfg)
            lo, hi = (int(v) for v in cfg.severity)
            if not 0.0 <= float(cfg.probability) <= 1.0:
                raise ConfigError(f"augment.kinds.{name}.probability must lie in [0, 1]")
            if not 1 <= lo <= hi <= 5:
                raise ConfigError(f"augment.kinds.{name}.severity must satisfy 1 <= lo <= hi <= 5")
            kinds[name] = KindConfig(float(cfg.probability), (lo, hi))
        morph = sum(kinds[k].probability for k in MORPHOLOGY if k in kinds)
        if morph > 1.0 + 1e-12:
            raise ConfigError("augment: dilate and erode probabilities must sum to <= 1")
        self.kinds = kinds

    @classmethod
    def disabled(cls) -> "AugmentConfig":
        return cls(kinds={})

    @classmethod
    def from_dict(cls, data: Optional[Mapping]) -> "AugmentConfig":
        if data is None:
            return cls()
        unknown = set(data) - {"kinds", "seed"}
        if unknown:
            raise ConfigError(f"augment: unknown fields {sorted(unknown)}")
        kinds = data.get("kinds")
        if kinds is None:
            return cls(seed=int(data.get("seed", 0)))
        return cls(kinds=dict(kinds), seed=int(data.get("seed", 0)))

    def to_dict(self) -> dict:
        return {"seed": self.seed,
                "kinds": {k: {"probability": v.probability, "severity": list(v.severity)}
                          for k, v in self.kinds.items()}}


def _probability(config: AugmentConfig, kind: str) -> float:
    cfg = config.kinds.get(kind)
    return cfg.probability if cfg else 0.0


def _severity(config: AugmentConfig, kind: str, rng: np.random.Generator) -> int:
    lo, hi = config.kinds[kind].severity
    return int(rng.integers(lo, hi + 1))


def augment_pipeline(image: np.ndarray, config: AugmentConfig,
                     rng: np.random.Generator) -> np.ndarray:
    """Apply each enabled kind with its probability, in :data:`ORDER`.

    One uniform draw is made per step whether or not the kind fires, so the
    random stream stays aligned across configurations.  Dilation and erosion
    share a single draw and never both fire.
    """
    _check_image(image)
    out = image
    for step in ORDER:
        u = rng.random()
        if step == "morphology":
            p_dilate = _probability(config, "dilate")
            p_erode = _probability(config, "erode")
            kind = "dilate" if u < p_dilate else "erode" if u < p_dilate + p_erode else None
        else:
            kind = step if u < _probability(config, step) else None
        if kind is None:
            continue
        out = apply_kind(out, kind, _severity(config, kind, rng), rng)
    return out if out is not image else image.copy()
