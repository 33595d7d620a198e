"""Reading and writing masks, manifests, configs and checkpoints, plus the
synthetic scene generator used for planted-rank tests."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .masks import IGNORE_LABEL, VOC, BinaryMask, CategoryTaxonomy, DomainError, LabelMask, SaliencyMap
from .ranking import RankEntry, RankTable

# --------------------------------------------------------------------------
# images


def voc_palette(n: int = 256) -> list[int]:
    """The standard VOC colour map as a flat RGB list."""
    pal = []
    for i in range(n):
        r = g = b = 0
        c = i
        for j in range(8):
            r |= ((c >> 0) & 1) << (7 - j)
            g |= ((c >> 1) & 1) << (7 - j)
            b |= ((c >> 2) & 1) << (7 - j)
            c >>= 3
        pal += [r, g, b]
    return pal


def _open(path) -> Image.Image:
    try:
        img = Image.open(path)
        img.load()
    except (OSError, SyntaxError) as e:
        raise OSError(f"cannot read image {path}: {e}") from e
    return img


def load_semantic_mask(path, taxonomy: CategoryTaxonomy = VOC) -> LabelMask:
    """Palette-indexed ("P") or grey ("L") image of category indices.

    Index 255 (VOC void) becomes ``IGNORE_LABEL``; any other index beyond
    the taxonomy is an error.
    """
    img = _open(path)
    if img.mode not in ("P", "L"):
        raise DomainError(f"{path}: expected an indexed or greyscale image, got mode {img.mode}")
    labels = np.array(img, dtype=np.uint8)
    valid = (labels <= len(taxonomy)) | (labels == IGNORE_LABEL)
    if not valid.all():
        raise DomainError(f"{path}: unknown label indices {np.unique(labels[~valid]).tolist()}")
    return LabelMask(labels, len(taxonomy))


def save_semantic_mask(mask: LabelMask, path):
    img = Image.fromarray(np.ascontiguousarray(mask.labels), mode="P")
    img.putpalette(voc_palette())
    img.save(path)


def load_saliency_map(path) -> SaliencyMap:
    img = _open(path)
    if img.mode != "L":
        raise DomainError(f"{path}: saliency map must be single-channel 8-bit, got mode {img.mode}")
    return SaliencyMap(np.array(img, dtype=np.float64) / 255.0)


def save_saliency_map(sal: SaliencyMap, path):
    q = np.rint(sal.values * 255.0).astype(np.uint8)
    Image.fromarray(q, mode="L").save(path)


def load_image(path) -> np.ndarray:
    """RGB image as a (3, h, w) float array in [0, 1]."""
    img = _open(path).convert("RGB")
    return np.array(img, dtype=np.float64).transpose(2, 0, 1) / 255.0


def save_image(x: np.ndarray, path):
    q = np.rint(np.clip(x, 0, 1) * 255.0).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(np.ascontiguousarray(q), mode="RGB").save(path)


def binarize(sal: SaliencyMap, threshold: float = 0.5) -> BinaryMask:
    if not 0.0 <= threshold <= 1.0:
        raise DomainError(f"threshold must be in [0, 1], got {threshold}")
    return BinaryMask(sal.values > threshold)


# --------------------------------------------------------------------------
# manifests


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    semantic: Optional[str] = None
    saliency: Optional[str] = None
    image: Optional[str] = None
    split: Optional[str] = None


@dataclass
class DatasetManifest:
    records: list = field(default_factory=list)
    root: Path = Path(".")
    split_seed: Optional[int] = None

    def __post_init__(self):
        ids = [r.id for r in self.records]
        dup = sorted({i for i in ids if ids.count(i) > 1})
        if dup:
            raise DomainError(f"duplicate image ids in manifest: {dup}")

    def resolve(self, rel: Optional[str]) -> Optional[Path]:
        return None if rel is None else self.root / rel

    def get(self, image_id: str) -> ManifestRecord:
        for r in self.records:
            if r.id == image_id:
                return r
        raise DomainError(f"image id {image_id!r} not in manifest")

    def split(self, name: str) -> "DatasetManifest":
        return DatasetManifest([r for r in self.records if r.split == name], self.root, self.split_seed)

    def missing_files(self) -> list[str]:
        out = []
        for r in self.records:
            for kind in ("semantic", "saliency", "image"):
                p = self.resolve(getattr(r, kind))
                if p is not None and not p.exists():
                    out.append(f"{r.id}: {kind} file {p} not found")
        return out

    def to_json(self) -> dict:
        d = {"records": [{k: v for k, v in vars(r).items() if v is not None} for r in self.records]}
        if self.split_seed is not None:
            d["split_seed"] = self.split_seed
        return d

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DomainError(f"{path}: invalid JSON manifest: {e}") from e
    records = [ManifestRecord(**{k: r.get(k) for k in ("id", "semantic", "saliency", "image", "split")})
               for r in data["records"]]
    m = DatasetManifest(records, path.parent, data.get("split_seed"))
    if check_files:
        missing = m.missing_files()
        if missing:
            raise OSError("manifest references missing files:\n  " + "\n  ".join(missing))
    return m


def random_split(m: DatasetManifest, n_train: int, seed: int = 0) -> DatasetManifest:
    """Seeded shuffle into ``train``/``test``; the seed is kept in the manifest."""
    if not 0 <= n_train <= len(m.records):
        raise DomainError(f"cannot put {n_train} of {len(m.records)} records in train")
    order = np.random.default_rng(seed).permutation(len(m.records))
    train = set(order[:n_train].tolist())
    recs = [ManifestRecord(r.id, r.semantic, r.saliency, r.image, "train" if i in train else "test")
            for i, r in enumerate(m.records)]
    return DatasetManifest(recs, m.root, seed)


# --------------------------------------------------------------------------
# synthetic scenes


@dataclass(frozen=True)
class Region:
    category: int
    rect: tuple  # (top, left, height, width)
    level: float  # saliency in (0, 1]
    coverage: float = 1.0  # fraction of rows carrying saliency


@dataclass(frozen=True)
class SyntheticSceneSpec:
    height: int
    width: int
    regions: tuple = ()
    seed: int = 0
    num_categories: int = len(VOC)
    allow_ties: bool = False

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        occ = np.zeros((self.height, self.width), dtype=int)
        cats = [r.category for r in self.regions]
        if len(set(cats)) != len(cats):
            raise DomainError("each planted region needs its own category")
        for r in self.regions:
            t, l, h, w = r.rect
            if h <= 0 or w <= 0 or t < 0 or l < 0 or t + h > self.height or l + w > self.width:
                raise DomainError(f"region {r.rect} outside the {self.height}x{self.width} canvas")
            if not 0.0 < r.level <= 1.0:
                raise DomainError(f"saliency level {r.level} not in (0, 1]")
            if not 1 <= r.category <= self.num_categories:
                raise DomainError(f"category {r.category} out of range")
            occ[t:t + h, l:l + w] += 1
        if (occ > 1).any():
            raise DomainError("planted regions overlap")
        levels = [r.level for r in self.regions]
        if not self.allow_ties and len(set(levels)) != len(levels):
            raise DomainError("saliency levels must be distinct unless allow_ties is set")


def generate_synthetic(spec: SyntheticSceneSpec, tau: float = 0.5, image: str = ""):
    """Render a scene and the rank table it should produce.

    A region with ``coverage < 1`` only has saliency on its top
    ``floor(coverage * height)`` rows; it is expected absent when that
    realised coverage falls below ``tau``.
    """
    labels = np.zeros((spec.height, spec.width), dtype=np.uint8)
    values = np.zeros((spec.height, spec.width))
    kept, absent = [], []
    for r in spec.regions:
        t, l, h, w = r.rect
        labels[t:t + h, l:l + w] = r.category
        rows = int(np.floor(r.coverage * h + 1e-12))
        values[t:t + rows, l:l + w] = r.level
        cov = rows / h
        if cov >= tau and rows > 0:
            kept.append((r.category, r.level, cov))
        else:
            absent.append(RankEntry(r.category, 0.0, cov, None))
    kept.sort(key=lambda k: (-k[1], -k[2], k[0]))
    ranked = [RankEntry(c, v, cov, i + 1) for i, (c, v, cov) in enumerate(kept)]
    absent.sort(key=lambda e: e.category)
    table = RankTable(image, tuple(ranked + absent), 0)
    return LabelMask(labels, spec.num_categories), SaliencyMap(values), table


def random_scene_spec(rng: np.random.Generator, size: int = 32, min_regions: int = 2, max_regions: int = 6,
                      num_categories: int = len(VOC), quantize: bool = True) -> SyntheticSceneSpec:
    """Non-overlapping rectangles on a grid of cells, distinct saliency levels."""
    k = int(rng.integers(min_regions, max_regions + 1))
    cells_per_side = 3
    cell = size // cells_per_side
    cells = rng.choice(cells_per_side ** 2, size=k, replace=False)
    cats = rng.choice(np.arange(1, num_categories + 1), size=k, replace=False)
    if quantize:
        levels = rng.choice(np.arange(1, 256), size=k, replace=False) / 255.0
    else:
        levels = rng.uniform(0.01, 1.0, size=k)
    regions = []
    for c, cat, lev in zip(cells, cats, levels):
        ci, cj = divmod(int(c), cells_per_side)
        h = int(rng.integers(2, cell + 1))
        w = int(rng.integers(2, cell + 1))
        t = ci * cell + int(rng.integers(0, cell - h + 1))
        l = cj * cell + int(rng.integers(0, cell - w + 1))
        regions.append(Region(int(cat), (t, l, h, w), float(lev)))
    return SyntheticSceneSpec(size, size, tuple(regions), int(rng.integers(2**31)), num_categories)


def render_image(sem: LabelMask, seed: int = 0, noise: float = 0.05) -> np.ndarray:
    """RGB input for the networks: palette colour of each category plus noise."""
    pal = np.array(voc_palette(sem.num_categories + 1), dtype=np.float64).reshape(-1, 3) / 255.0
    pal[0] = (0.1, 0.1, 0.1)
    lab = np.where(sem.labels == IGNORE_LABEL, 0, sem.labels)
    x = pal[lab].transpose(2, 0, 1)
    rng = np.random.default_rng(seed)
    return np.clip(x + noise * rng.normal(size=x.shape), 0.0, 1.0)


def write_synthetic_dataset(out_dir, count: int, size: int = 32, seed: int = 0,
                            num_categories: int = len(VOC), tau: float = 0.5) -> DatasetManifest:
    """Write ``count`` random scenes plus ``manifest.json`` and expected rank tables."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records, expected = [], []
    for i in range(count):
        spec = random_scene_spec(rng, size, num_categories=num_categories)
        iid = f"img{i:03d}"
        sem, sal, table = generate_synthetic(spec, tau, iid)
        save_semantic_mask(sem, out / f"{iid}_sem.png")
        save_saliency_map(sal, out / f"{iid}_sal.png")
        save_image(render_image(sem, spec.seed), out / f"{iid}.png")
        records.append(ManifestRecord(iid, f"{iid}_sem.png", f"{iid}_sal.png", f"{iid}.png"))
        expected.append(table.to_json())
    m = DatasetManifest(records, out)
    m.save(out / "manifest.json")
    (out / "expected_ranks.json").write_text(json.dumps(expected, indent=2) + "\n")
    return m


def synthetic_training_scene(size=32, categories=3, seed=0):
    """One training image with up to four planted regions, one per quadrant.

    Saliency levels fall off with category index and are binarized at 0.5,
    so the first regions are salient and the rest are not.
    """
    if not 1 <= categories <= 4:
        raise DomainError("synthetic training scenes hold 1 to 4 categories")
    rng = np.random.default_rng(seed)
    cell = size // 2
    regions = []
    for i in range(categories):
        ci, cj = divmod(i, 2)
        h = int(rng.integers(cell // 2, cell - 1))
        w = int(rng.integers(cell // 2, cell - 1))
        regions.append(Region(i + 1, (ci * cell + 1, cj * cell + 1, h, w), (categories - i) / categories))
    spec = SyntheticSceneSpec(size, size, tuple(regions), seed, num_categories=categories)
    sem, sal, _ = generate_synthetic(spec)
    return render_image(sem, seed), sem, binarize(sal, 0.5)


# --------------------------------------------------------------------------
# key-value configs and checkpoints


def parse_config(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DomainError(f"config line {n}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def read_config(path) -> dict[str, str]:
    return parse_config(Path(path).read_text())


def save_checkpoint(params: dict, path, meta: Optional[dict] = None):
    """Parameters as one little-endian float64 blob (``path``) with a JSON
    manifest of names, shapes and offsets next to it (``path + '.json'``)."""
    path = Path(path)
    entries, offset = [], 0
    with open(path, "wb") as f:
        for name, arr in params.items():
            a = np.ascontiguousarray(arr, dtype="<f8")
            f.write(a.tobytes())
            entries.append({"name": name, "shape": list(a.shape), "offset": offset})
            offset += a.size
    manifest = {"dtype": "<f8", "params": entries, "meta": meta or {}}
    Path(str(path) + ".json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_checkpoint(path):
    """Returns ``(params, meta)``."""
    path = Path(path)
    manifest = json.loads(Path(str(path) + ".json").read_text())
    flat = np.fromfile(path, dtype=manifest["dtype"])
    params = {}
    for e in manifest["params"]:
        n = int(np.prod(e["shape"]))
        params[e["name"]] = flat[e["offset"]:e["offset"] + n].reshape(e["shape"]).astype(np.float64)
    return params, manifest.get("meta", {})


def write_loss_trace(trace, path):
    with open(path, "w") as f:
        f.write("step,loss\n")
        for i, v in enumerate(trace):
            f.write(f"{i},{v!r}\n")


def atomic_write_text(path, text: str):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
