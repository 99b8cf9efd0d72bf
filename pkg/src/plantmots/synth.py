"""Synthetic farm-row sequences with ground-truth plant identities.

Plants sit in rows running along the image's vertical axis. Each plant is a
star-shaped region ``r(phi) = r0 * (1 + sum_m a_m cos(m phi + p_m))`` under an
area-preserving stretch along its own orientation. A camera window of the
configured size slides along the rows following a motion profile; moving
``forward`` pushes image content downward so that new plants enter at the
top. Plants that leave the view and come back keep their ground-truth id.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import cv2
import numpy as np

from .errors import InvalidConfig, ShapeFeatureError
from .mots_io import Annotation, FrameSeries
from .shape_features import extract_shape_feature

DIRECTIONS = ("forward", "backward")
LOBES = (2, 3, 4, 5)
NOISE_HARMONICS = (6, 7, 8, 9, 10)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    height: int = 1080
    width: int = 810
    rows: int = 2
    row_spacing: float = 320.0
    row_jitter: float = 6.0
    plant_spacing: float = 160.0
    plant_spacing_jitter: float = 25.0
    base_radius: float = 45.0
    radius_jitter: float = 8.0
    harmonic_max: float = 0.16
    first_harmonic_max: float = 0.06
    stretch_max: float = 1.5
    min_feature_distance: float = 0.05
    motion: tuple[tuple[str, int, float], ...] = (("forward", 60, 10.0), ("backward", 60, 10.0))
    shape_noise: float = 0.0
    position_noise: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "motion", tuple((str(d), int(n), float(v)) for d, n, v in self.motion))
        if self.height < 8 or self.width < 8:
            raise InvalidConfig("image must be at least 8x8")
        if self.rows < 1:
            raise InvalidConfig("rows must be >= 1")
        if self.base_radius <= 2 or self.radius_jitter < 0 or self.radius_jitter >= self.base_radius / 2:
            raise InvalidConfig("base_radius must exceed 2 and dominate radius_jitter")
        if self.harmonic_max < 0 or self.first_harmonic_max < 0:
            raise InvalidConfig("harmonic amplitudes must be >= 0")
        if self.first_harmonic_max + len(LOBES) * self.harmonic_max >= 0.9:
            raise InvalidConfig("harmonic amplitudes too large for a star-shaped outline")
        if self.stretch_max < 1:
            raise InvalidConfig("stretch_max must be >= 1")
        if self.plant_spacing <= 0 or self.plant_spacing_jitter < 0 or self.row_spacing <= 0:
            raise InvalidConfig("spacings must be positive")
        if self.shape_noise < 0 or self.position_noise < 0:
            raise InvalidConfig("noise levels must be >= 0")
        if not self.motion:
            raise InvalidConfig("motion profile is empty")
        for d, n, v in self.motion:
            if d not in DIRECTIONS or n < 0 or v < 0:
                raise InvalidConfig(f"bad motion segment {(d, n, v)}")
            if v >= self.height / 4:
                raise InvalidConfig("speed too high: plants would skip the view")
        if (self.rows - 1) * self.row_spacing + 2 * self.extent > self.width:
            raise InvalidConfig("rows do not fit in the image width")

    @property
    def extent(self) -> float:
        """Upper bound on a plant's distance from its center, in pixels."""
        amp = self.first_harmonic_max + len(LOBES) * self.harmonic_max + 3 * self.shape_noise
        return (self.base_radius + self.radius_jitter) * (1 + amp) * np.sqrt(self.stretch_max) + 2

    @property
    def frames(self) -> int:
        return sum(n for _, n, _ in self.motion)

    def camera_offsets(self) -> np.ndarray:
        """Downward shift of the scene in each frame, starting at 0."""
        steps = []
        for d, n, v in self.motion:
            steps += [v if d == "forward" else -v] * n
        return np.concatenate(([0.0], np.cumsum(steps)))[: self.frames]

    @classmethod
    def from_mapping(cls, values: dict) -> "SynthConfig":
        kw = dict(values)
        if isinstance(kw.get("motion"), str):
            kw["motion"] = parse_motion(kw["motion"])
        known = set(cls.__dataclass_fields__)
        unknown = set(kw) - known
        if unknown:
            raise InvalidConfig(f"unknown synth keys {sorted(unknown)}")
        try:
            for k, f in cls.__dataclass_fields__.items():
                if k in kw and f.type in ("int", "float"):
                    kw[k] = int(kw[k]) if f.type == "int" else float(kw[k])
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(str(exc)) from None

    @classmethod
    def from_file(cls, path) -> "SynthConfig":
        """JSON object, or ``key = value`` lines with ``motion = forward:60:8, backward:60:8``."""
        text = Path(path).read_text()
        if text.lstrip().startswith("{"):
            try:
                return cls.from_mapping(json.loads(text))
            except json.JSONDecodeError as exc:
                raise InvalidConfig(f"bad JSON: {exc}") from None
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        try:
            parser.read_string("[synth]\n" + text)
        except configparser.Error as exc:
            raise InvalidConfig(str(exc)) from None
        return cls.from_mapping(dict(parser["synth"]))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def parse_motion(text: str) -> tuple[tuple[str, int, float], ...]:
    segs = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        bits = part.split(":")
        if len(bits) != 3:
            raise InvalidConfig(f"motion segment must be direction:frames:speed, got {part!r}")
        try:
            segs.append((bits[0].strip(), int(bits[1]), float(bits[2])))
        except ValueError:
            raise InvalidConfig(f"bad motion segment {part!r}") from None
    return tuple(segs)


@dataclass(frozen=True)
class PlantSpec:
    gt_id: int
    row: int
    x: float  # image column of the center
    v: float  # position along the row; image row is v + camera offset
    radius: float
    amplitudes: tuple[float, ...]  # for harmonics 1, 2, 3, 4, 5
    phases: tuple[float, ...]
    stretch: float
    orientation: float


@dataclass
class SynthOutput:
    series: FrameSeries
    plants: list[PlantSpec]
    masks: dict[int, list[tuple[int, np.ndarray]]] = field(default_factory=dict)  # frame -> (gt id, mask)

    @property
    def plant_ids(self) -> list[int]:
        return [p.gt_id for p in self.plants]

    def sightings(self) -> dict[int, list[int]]:
        seen: dict[int, list[int]] = {}
        for frame_id, anns in self.series:
            for a in anns:
                seen.setdefault(a.object_id, []).append(frame_id)
        return seen

    def longest_gaps(self) -> dict[int, int]:
        """Longest run of missed frames between two sightings, per plant."""
        gaps = {}
        for pid, frames in self.sightings().items():
            d = np.diff(frames) - 1 if len(frames) > 1 else np.array([0])
            gaps[pid] = int(d.max())
        return gaps


# --------------------------------------------------------------------------


def _layout(cfg: SynthConfig, rng: np.random.Generator) -> list[PlantSpec]:
    offsets = cfg.camera_offsets()
    ext = cfg.extent
    v_lo = -offsets.max() - ext
    v_hi = cfg.height - offsets.min() + ext
    x0 = (cfg.width - (cfg.rows - 1) * cfg.row_spacing) / 2
    feats: list[np.ndarray] = []
    plants = []
    for row in range(cfg.rows):
        v = v_lo + rng.uniform(0, cfg.plant_spacing)
        prev_reach = None
        while True:
            shape = _distinct_shape(cfg, rng, feats)
            if prev_reach is not None:
                step = cfg.plant_spacing + rng.uniform(-cfg.plant_spacing_jitter, cfg.plant_spacing_jitter)
                v += max(step, prev_reach + _reach(shape) + 2)
            if v > v_hi:
                break
            x = x0 + row * cfg.row_spacing + rng.uniform(-cfg.row_jitter, cfg.row_jitter)
            x = float(np.clip(np.round(x), ext, cfg.width - 1 - ext))
            plants.append(replace(shape, row=row, x=x, v=float(np.round(v))))
            prev_reach = _reach(shape)
    # ids follow the order in which a forward pass meets the plants
    plants.sort(key=lambda p: (-p.v, p.x))
    return [replace(p, gt_id=i) for i, p in enumerate(plants)]


def _reach(p: PlantSpec) -> float:
    return p.radius * (1 + sum(p.amplitudes)) * np.sqrt(p.stretch)


def _distinct_shape(cfg: SynthConfig, rng, feats: list[np.ndarray]) -> PlantSpec:
    """Draw a plant whose noise-free shape feature keeps ``min_feature_distance``
    (cosine distance) from every plant drawn before."""
    for _ in range(1000):
        amps = np.concatenate(
            ([rng.uniform(0, cfg.first_harmonic_max)], rng.uniform(0, cfg.harmonic_max, len(LOBES)))
        )
        p = PlantSpec(
            gt_id=-1,
            row=0,
            x=0.0,
            v=0.0,
            radius=float(cfg.base_radius + rng.uniform(-cfg.radius_jitter, cfg.radius_jitter)),
            amplitudes=tuple(float(a) for a in amps),
            phases=tuple(float(a) for a in rng.uniform(0, 2 * np.pi, 1 + len(LOBES))),
            stretch=float(rng.uniform(1.0, cfg.stretch_max)),
            orientation=float(rng.uniform(0, np.pi)),
        )
        if cfg.min_feature_distance <= 0:
            return p
        c = int(np.ceil(_reach(p))) + 2
        crop, _, _ = rasterize_plant(p, c, c, 2 * c + 1, 2 * c + 1)
        try:
            f = extract_shape_feature(crop)
        except ShapeFeatureError:
            return p  # no feature to compare; the tracker falls back for it as well
        f = f / np.linalg.norm(f)
        if all(1.0 - f @ g >= cfg.min_feature_distance for g in feats):
            feats.append(f)
            return p
    raise InvalidConfig("cannot draw pairwise-distinct plant shapes; lower min_feature_distance")


def rasterize_plant(
    p: PlantSpec,
    cx: float,
    cy: float,
    height: int,
    width: int,
    amplitudes=None,
    phases=None,
    extra=(),
    radius=None,
):
    """Pixels (centers at integer coordinates) inside the plant outline.

    Returns ``(crop, x0, y0)`` with ``crop`` a bool array clipped to the image,
    or None when the plant is entirely outside.
    """
    amps = p.amplitudes if amplitudes is None else amplitudes
    phs = p.phases if phases is None else phases
    r0 = p.radius if radius is None else radius
    harm = list(zip(range(1, 1 + len(amps)), amps, phs)) + list(extra)
    reach = r0 * (1 + sum(abs(a) for _, a, _ in harm)) * np.sqrt(p.stretch) + 1
    x0 = max(int(np.floor(cx - reach)), 0)
    x1 = min(int(np.ceil(cx + reach)) + 1, width)
    y0 = max(int(np.floor(cy - reach)), 0)
    y1 = min(int(np.ceil(cy + reach)) + 1, height)
    if x0 >= x1 or y0 >= y1:
        return None
    dx = np.arange(x0, x1, dtype=np.float64) - cx
    dy = np.arange(y0, y1, dtype=np.float64)[:, None] - cy
    c, s = np.cos(p.orientation), np.sin(p.orientation)
    # into the plant frame, then undo the stretch
    u = (c * dx + s * dy) / np.sqrt(p.stretch)
    w = (-s * dx + c * dy) * np.sqrt(p.stretch)
    rho = np.hypot(u, w)
    z = np.divide(u + 1j * w, rho, out=np.ones_like(u, dtype=complex), where=rho > 0)
    # 1 + sum_m a_m cos(m phi + p_m) = 1 + Re(sum_m c_m z^m), by Horner's rule
    coef = np.zeros(max(m for m, _, _ in harm) + 1, dtype=complex)
    for m, a, ph in harm:
        coef[m] += a * np.exp(1j * ph)
    poly = np.full_like(z, coef[-1])
    for cm in coef[-2::-1]:
        poly *= z
        if cm:
            poly += cm
    inside = rho <= r0 * (1.0 + poly.real)
    if not inside.any():
        return None
    return inside, x0, y0


def _largest(crop: np.ndarray) -> np.ndarray:
    n, labels, stats, _ = cv2.connectedComponentsWithStats(crop.astype(np.uint8), connectivity=8)
    if n <= 2:
        return crop
    best = 1 + int(np.argmax(stats[1:, cv2.CC_STAT_AREA]))
    return labels == best


def generate(cfg: SynthConfig, keep_masks: bool = False) -> SynthOutput:
    """Render the sequence described by ``cfg``; identical configs give identical output."""
    rng = np.random.default_rng(cfg.seed)
    plants = _layout(cfg, rng)
    H, W = cfg.height, cfg.width
    offsets = cfg.camera_offsets()
    static = cfg.shape_noise == 0 and cfg.position_noise == 0
    cache: dict = {}
    frames = []
    kept: dict[int, list[tuple[int, np.ndarray]]] = {}
    ext = cfg.extent
    for t, off in enumerate(offsets):
        claimed = np.zeros((H, W), bool)
        anns = []
        for p in plants:
            cy = p.v + off
            if cy < -ext or cy > H + ext:
                continue
            cx = p.x
            if static:
                # rasterize once per sub-pixel phase, then shift and clip
                key = (p.gt_id, cy % 1.0)
                if key not in cache:
                    cache[key] = rasterize_plant(p, cx, cy % 1.0 + 10_000, 20_000 + H, W)
                full = cache[key]
                if full is None:
                    continue
                crop, x0, y0 = full
                y0 = y0 - 10_000 + int(np.floor(cy))
                top, bot = max(0, -y0), min(crop.shape[0], H - y0)
                if top >= bot:
                    continue
                crop = crop[top:bot]
                y0 += top
            else:
                nrng = np.random.default_rng([cfg.seed, t, p.gt_id])
                sn = cfg.shape_noise
                amps = np.clip(np.asarray(p.amplitudes) + nrng.normal(0, sn, len(p.amplitudes)), 0, None)
                phases = np.asarray(p.phases) + nrng.normal(0, 4 * sn, len(p.phases))
                extra = [(m, abs(nrng.normal(0, sn / 2)), nrng.uniform(0, 2 * np.pi)) for m in NOISE_HARMONICS]
                r0 = p.radius * (1 + nrng.normal(0, sn))
                jx, jy = nrng.normal(0, cfg.position_noise, 2) if cfg.position_noise else (0.0, 0.0)
                out = rasterize_plant(p, cx + jx, cy + jy, H, W, amps, phases, extra, r0)
                if out is None:
                    continue
                crop, x0, y0 = out
            region = claimed[y0 : y0 + crop.shape[0], x0 : x0 + crop.shape[1]]
            crop = crop & ~region
            if not crop.any():
                continue
            crop = _largest(crop)
            region |= crop
            anns.append(Annotation.from_crop(t, p.gt_id, crop, x0, y0, H, W))
            if keep_masks:
                mask = np.zeros((H, W), bool)
                mask[y0 : y0 + crop.shape[0], x0 : x0 + crop.shape[1]] = crop
                kept.setdefault(t, []).append((p.gt_id, mask))
        if anns:
            frames.append((t, anns))
    return SynthOutput(FrameSeries(frames), plants, kept)


def write_output(out: SynthOutput, directory, render_masks: bool = False) -> Path:
    """Write ``gt.txt`` (and per-instance ``masks/<frame>_<id>.png``) under ``directory``."""
    from .mots_io import save_mask_image, save_sequence_file

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "gt.txt"
    save_sequence_file(out.series, path)
    if render_masks:
        mdir = directory / "masks"
        mdir.mkdir(exist_ok=True)
        for frame_id, anns in out.series:
            for a in anns:
                save_mask_image(a.mask(), mdir / f"{frame_id:06d}_{a.object_id}.png")
    return path
