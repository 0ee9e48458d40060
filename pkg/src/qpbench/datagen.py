"""Synthetic labeled-image generators and external dataset ingestion.

Two generators mirror the experiments' data: a single-image three-class toy
scene whose classes are separable by small oriented filters, and multi-class
facade-like street scenes. Real datasets can be ingested from a directory of
PPM pairs through a color palette.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, ParameterError
from .ppm import read_netpbm, write_ppm

TOY_CLASSES = 3
FACADE_CLASSES = 9

# Toy texture constants: square-wave stripes over a dim background.
_STRIPE_PERIOD = 4
_STRIPE_AMPLITUDE = 0.8
_BACKGROUND_LEVEL = 0.1
_NOISE = 0.05
_CELL = 8


@dataclass
class LabeledImage:
    """image[C,H,W] in [0,1] plus an integer class map labels[H,W]."""

    image: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.image = np.ascontiguousarray(self.image, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.image.ndim != 3 or self.labels.ndim != 2:
            raise DataError(
                f"expected image[C,H,W] and labels[H,W], got {self.image.shape} "
                f"and {self.labels.shape}"
            )
        if self.image.shape[1:] != self.labels.shape:
            raise DataError(
                f"image spatial dims {self.image.shape[1:]} != labels {self.labels.shape}"
            )
        if self.image.min() < 0.0 or self.image.max() > 1.0:
            raise DataError("image values must lie in [0, 1]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataError(f"labels must lie in [0, {self.num_classes})")

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


@dataclass(frozen=True)
class ClassPalette:
    """Ordered (name, rgb) pairs; rgb triples double as the on-disk label
    encoding. ``background`` marks a class to exclude from metrics."""

    classes: tuple
    background: int | None = None

    def __post_init__(self):
        object.__setattr__(
            self,
            "classes",
            tuple((str(n), (int(r), int(g), int(b))) for n, (r, g, b) in self.classes),
        )
        rgbs = [rgb for _, rgb in self.classes]
        if len(set(rgbs)) != len(rgbs):
            raise DataError("palette colors must be unique")
        if self.background is not None and not 0 <= self.background < len(self.classes):
            raise DataError(f"background index {self.background} out of range")

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def colors(self) -> np.ndarray:
        return np.array([rgb for _, rgb in self.classes], dtype=np.uint8)

    def to_json(self) -> str:
        doc = {
            "classes": [{"name": n, "rgb": list(rgb)} for n, rgb in self.classes],
            "background": self.background,
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ClassPalette":
        doc = json.loads(text)
        classes = tuple((c["name"], tuple(c["rgb"])) for c in doc["classes"])
        return cls(classes, doc.get("background"))

    @classmethod
    def load(cls, path) -> "ClassPalette":
        return cls.from_json(Path(path).read_text(encoding="ascii"))


TOY_PALETTE = ClassPalette(
    (
        ("background", (0, 0, 0)),
        ("vertical_stripes", (200, 60, 40)),
        ("horizontal_stripes", (40, 90, 220)),
    )
)

FACADE_PALETTE = ClassPalette(
    (
        ("background", (0, 0, 0)),
        ("building", (128, 0, 0)),
        ("road", (128, 64, 128)),
        ("pavement", (192, 192, 192)),
        ("sky", (0, 128, 255)),
        ("vegetation", (0, 128, 0)),
        ("window", (0, 0, 128)),
        ("door", (128, 128, 0)),
        ("car", (255, 0, 0)),
    ),
    background=0,
)

# Facade class indices, matching FACADE_PALETTE order.
_BG, _BUILDING, _ROAD, _PAVEMENT, _SKY, _VEGETATION, _WINDOW, _DOOR, _CAR = range(9)

# Mean appearance per facade class (the textures and noise go on top).
_FACADE_BASE_COLORS = np.array(
    [
        [0.12, 0.12, 0.13],  # background
        [0.62, 0.46, 0.35],  # building
        [0.30, 0.30, 0.32],  # road
        [0.62, 0.62, 0.60],  # pavement
        [0.55, 0.70, 0.92],  # sky
        [0.18, 0.45, 0.20],  # vegetation
        [0.15, 0.20, 0.35],  # window
        [0.40, 0.26, 0.14],  # door
        [0.75, 0.15, 0.15],  # car
    ]
)


def _check_dims(width: int, height: int) -> None:
    if width < 32 or height < 32:
        raise ParameterError(f"image dims must be >= 32, got {width}x{height}")


def _cell_edges(extent: int, cells: int) -> np.ndarray:
    return np.floor(np.arange(cells + 1) * extent / cells).astype(int)


def gen_toy(seed: int, width: int, height: int) -> LabeledImage:
    """Single grayscale image with striped foreground patches.

    Class 1 regions carry vertical stripes, class 2 horizontal stripes,
    class 0 is near-uniform background; roughly half the cells are background
    and each foreground class gets a quarter, so every class covers well over
    10% of the pixels.
    """
    _check_dims(width, height)
    rng = np.random.default_rng(seed)
    gh, gw = height // _CELL, width // _CELL
    n = gh * gw
    quarter = n // 4
    cells = rng.permutation(np.repeat([0, 1, 2], [n - 2 * quarter, quarter, quarter]))
    cells = cells.reshape(gh, gw)
    rows = np.diff(_cell_edges(height, gh))
    cols = np.diff(_cell_edges(width, gw))
    labels = np.repeat(np.repeat(cells, rows, axis=0), cols, axis=1)

    stripe_cols = (np.arange(width) % _STRIPE_PERIOD) < _STRIPE_PERIOD // 2
    stripe_rows = (np.arange(height) % _STRIPE_PERIOD) < _STRIPE_PERIOD // 2
    img = np.full((height, width), _BACKGROUND_LEVEL)
    img += _STRIPE_AMPLITUDE * (stripe_cols[None, :] & (labels == 1))
    img += _STRIPE_AMPLITUDE * (stripe_rows[:, None] & (labels == 2))
    img += rng.uniform(-_NOISE, _NOISE, size=(height, width))
    return LabeledImage(img[None, :, :], labels, TOY_CLASSES)


def _paint_rect(labels, y0, y1, x0, x1, cls) -> None:
    labels[max(y0, 0) : max(y1, 0), max(x0, 0) : max(x1, 0)] = cls


def _gen_one_facade(rng: np.random.Generator, width: int, height: int) -> LabeledImage:
    h, w = height, width
    labels = np.zeros((h, w), dtype=np.int64)

    sky_h = int(round(h * rng.uniform(0.15, 0.30)))
    road_h = int(round(h * rng.uniform(0.10, 0.16)))
    pav_h = max(2, int(round(h * rng.uniform(0.06, 0.10))))
    ground = h - road_h - pav_h
    bx0 = int(round(w * rng.uniform(0.0, 0.12)))
    bx1 = w - int(round(w * rng.uniform(0.0, 0.12)))

    labels[:sky_h, :] = _SKY
    labels[ground : h - road_h, :] = _PAVEMENT
    labels[h - road_h :, :] = _ROAD
    labels[sky_h:ground, bx0:bx1] = _BUILDING

    door_top = ground
    if rng.uniform() < 0.9:  # door
        dw = max(3, int(round(w * rng.uniform(0.06, 0.10))))
        dh = max(4, int(round(h * rng.uniform(0.12, 0.18))))
        dx = int(rng.integers(bx0 + 1, max(bx0 + 2, bx1 - dw - 1)))
        door_top = max(sky_h, ground - dh)
        _paint_rect(labels, door_top, ground, dx, dx + dw, _DOOR)

    if rng.uniform() < 0.95:  # window grid
        win_w = max(3, int(round(w * rng.uniform(0.07, 0.10))))
        win_h = max(3, int(round(h * rng.uniform(0.07, 0.10))))
        gap_x = max(2, int(round(w * 0.05)))
        gap_y = max(2, int(round(h * 0.06)))
        y = sky_h + gap_y
        while y + win_h <= door_top - 1:
            x = bx0 + gap_x
            while x + win_w <= bx1 - gap_x:
                if not (labels[y : y + win_h, x : x + win_w] == _DOOR).any():
                    _paint_rect(labels, y, y + win_h, x, x + win_w, _WINDOW)
                x += win_w + gap_x
            y += win_h + gap_y

    if rng.uniform() < 0.9:  # vegetation blobs
        for _ in range(int(rng.integers(1, 3))):
            cy = int(rng.integers(sky_h + 2, max(sky_h + 3, ground - 2)))
            cx = int(rng.integers(0, w))
            ry = max(2, int(round(h * rng.uniform(0.05, 0.11))))
            rx = max(2, int(round(w * rng.uniform(0.05, 0.11))))
            yy, xx = np.ogrid[:h, :w]
            blob = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
            blob[h - road_h :, :] = False
            labels[blob] = _VEGETATION

    if rng.uniform() < 0.5:  # parked car on the road
        ch = max(3, int(round(road_h * 0.6)))
        cw = max(4, int(round(w * rng.uniform(0.10, 0.16))))
        cx = int(rng.integers(0, max(1, w - cw)))
        cy = h - road_h + max(0, (road_h - ch) // 2)
        _paint_rect(labels, cy, cy + ch, cx, cx + cw, _CAR)

    img = _FACADE_BASE_COLORS[labels]
    brick = ((np.arange(h) % 6) < 3).astype(float)[:, None] * 0.05
    img[labels == _BUILDING] += np.broadcast_to(brick[:, :, None], (h, w, 3))[
        labels == _BUILDING
    ]
    img += rng.uniform(-0.04, 0.04, size=(h, w, 3))
    veg = labels == _VEGETATION
    img[veg] += rng.uniform(-0.08, 0.08, size=(int(veg.sum()), 3))
    img = np.clip(img, 0.0, 1.0)
    return LabeledImage(img.transpose(2, 0, 1), labels, FACADE_CLASSES)


def gen_facade_like(seed: int, width: int, height: int, num_images: int) -> list[LabeledImage]:
    """Street-scene stand-ins: sky band, textured building with windows and a
    door, pavement and road strips, vegetation blobs, occasional cars."""
    _check_dims(width, height)
    if num_images < 1:
        raise ParameterError(f"num_images must be >= 1, got {num_images}")
    children = np.random.SeedSequence(seed).spawn(num_images)
    return [_gen_one_facade(np.random.default_rng(c), width, height) for c in children]


def sample_patch(img: LabeledImage, patch: int, rng: np.random.Generator):
    """Draw a patch at a uniform random valid center.

    Returns (tensor[C,patch,patch], class of the center pixel). ``patch``
    must be odd and fit inside the image.
    """
    if patch % 2 == 0:
        raise ParameterError(f"patch size must be odd, got {patch}")
    if patch > min(img.height, img.width):
        raise ParameterError(
            f"patch {patch} larger than image {img.height}x{img.width}"
        )
    half = patch // 2
    cy = int(rng.integers(half, img.height - half))
    cx = int(rng.integers(half, img.width - half))
    window = img.image[:, cy - half : cy + half + 1, cx - half : cx + half + 1]
    return np.ascontiguousarray(window), int(img.labels[cy, cx])


@dataclass
class LoadIssue:
    file: str
    rgb: tuple
    count: int


@dataclass
class LoadReport:
    files: list = field(default_factory=list)
    issues: list = field(default_factory=list)

    def unknown_pixels(self) -> int:
        return sum(i.count for i in self.issues)


def _labels_from_color(rgb: np.ndarray, palette: ClassPalette, name: str, report: LoadReport):
    enc = (
        rgb[:, :, 0].astype(np.int64) * 65536
        + rgb[:, :, 1].astype(np.int64) * 256
        + rgb[:, :, 2].astype(np.int64)
    )
    lookup = {r * 65536 + g * 256 + b: i for i, (_, (r, g, b)) in enumerate(palette.classes)}
    fallback = palette.background if palette.background is not None else 0
    labels = np.full(enc.shape, fallback, dtype=np.int64)
    for value in np.unique(enc):
        cls = lookup.get(int(value))
        where = enc == value
        if cls is None:
            color = (int(value) >> 16 & 255, int(value) >> 8 & 255, int(value) & 255)
            report.issues.append(LoadIssue(name, color, int(where.sum())))
        else:
            labels[where] = cls
    return labels


def load_labeled_dir(image_dir, palette: ClassPalette):
    """Load name.ppm / name_labels.{ppm,pgm} pairs from a directory.

    Returns (images, report). Label colors missing from the palette map to
    the palette's background class and are recorded in the report.
    """
    root = Path(image_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"not a directory: {root}")
    report = LoadReport()
    images = []
    for img_path in sorted(root.glob("*.ppm")):
        if img_path.stem.endswith("_labels"):
            continue
        raw = read_netpbm(img_path)
        if raw.ndim == 2:
            image = raw[None, :, :].astype(np.float64) / 255.0
        else:
            image = raw.transpose(2, 0, 1).astype(np.float64) / 255.0

        label_ppm = img_path.with_name(img_path.stem + "_labels.ppm")
        label_pgm = img_path.with_name(img_path.stem + "_labels.pgm")
        if label_ppm.exists():
            raw_labels = read_netpbm(label_ppm)
            if raw_labels.ndim != 3:
                raise DataError(f"{label_ppm} is grayscale; expected a color-coded map")
            labels = _labels_from_color(raw_labels, palette, img_path.name, report)
        elif label_pgm.exists():
            labels = read_netpbm(label_pgm).astype(np.int64)
            if labels.max(initial=0) >= palette.num_classes:
                raise DataError(
                    f"{label_pgm} holds class {labels.max()}, palette has "
                    f"{palette.num_classes} classes"
                )
        else:
            raise FileNotFoundError(
                f"no label file for {img_path.name}: expected "
                f"{label_ppm.name} or {label_pgm.name}"
            )
        if labels.shape != image.shape[1:]:
            raise DataError(
                f"{img_path.name}: image {image.shape[1:]} vs labels {labels.shape}"
            )
        images.append(LabeledImage(image, labels, palette.num_classes))
        report.files.append(img_path.name)
    return images, report


def save_labeled_dir(images, out_dir, palette: ClassPalette, prefix: str = "img") -> list:
    """Write images as P6 PPM pairs (image + color-coded labels) plus the
    palette JSON. Single-channel images are replicated to gray RGB."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    colors = palette.colors()
    written = []
    for i, img in enumerate(images):
        arr = img.image
        if arr.shape[0] == 1:
            arr = np.repeat(arr, 3, axis=0)
        rgb = np.clip(np.rint(arr.transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
        base = root / f"{prefix}_{i:04d}.ppm"
        write_ppm(base, rgb)
        write_ppm(base.with_name(base.stem + "_labels.ppm"), colors[img.labels])
        written.append(base)
    (root / "palette.json").write_text(palette.to_json(), encoding="ascii")
    return written
