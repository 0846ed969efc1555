"""Synthetic paired thermal/visible faces and the resampling pipeline.

Images live in [-1, 1]. On disk they are 8-bit PNGs with
``u8 = round((x + 1) * 127.5)`` and ``x = u8 / 127.5 - 1``.
Only the HR thermal image is stored; the LR generator input is derived at
load time by bicubic downsampling, exactly as training would see it.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .errors import ContractError, FormatError

HR_SIZE = 128
# keeps the face mostly representable at 16x16 (an 8x reduction)
FACE_SMOOTH = 3.0
SPLITS = ("train", "val", "test")


# -- MATLAB-style bicubic ------------------------------------------------

def cubic(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys cubic convolution kernel."""
    ax = np.abs(x)
    ax2, ax3 = ax * ax, ax * ax * ax
    near = (a + 2) * ax3 - (a + 3) * ax2 + 1
    far = a * ax3 - 5 * a * ax2 + 8 * a * ax - 4 * a
    return np.where(ax <= 1, near, np.where(ax < 2, far, 0.0))


def resize_weights(n_in: int, n_out: int, antialias: bool = True) -> np.ndarray:
    """(n_out, n_in) interpolation matrix, as computed by MATLAB's imresize.

    Output pixel i (1-based) samples input coordinate u = i/s + (1 - 1/s)/2.
    When shrinking, the kernel is stretched by 1/s and scaled by s. Taps that
    fall outside the image are mirrored (symmetric padding), then each row is
    normalised to sum to 1.
    """
    if n_in < 1 or n_out < 1:
        raise ContractError("resize extents must be >= 1")
    s = n_out / n_in
    shrink = antialias and s < 1
    width = 4.0 / s if shrink else 4.0
    i = np.arange(1, n_out + 1, dtype=np.float64)
    u = i / s + 0.5 * (1 - 1 / s)
    left = np.floor(u - width / 2)
    taps = int(math.ceil(width)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    dist = u[:, None] - idx
    w = s * cubic(s * dist) if shrink else cubic(dist)
    w /= w.sum(axis=1, keepdims=True)
    mirror = np.concatenate([np.arange(n_in), np.arange(n_in - 1, -1, -1)])
    cols = mirror[np.mod(idx.astype(np.int64) - 1, 2 * n_in)]
    out = np.zeros((n_out, n_in))
    np.add.at(out, (np.repeat(np.arange(n_out), taps), cols.ravel()), w.ravel())
    return out


def bicubic_resample(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bicubic resize of the last two axes (height first, like imresize)."""
    img = np.asarray(img)
    h, w = img.shape[-2:]
    if (h, w) == (out_h, out_w):
        return img.copy()
    dt = img.dtype if img.dtype.kind == "f" else np.float64
    wh = resize_weights(h, out_h)
    ww = resize_weights(w, out_w)
    out = np.einsum("ih,...hw->...iw", wh, img.astype(np.float64))
    out = np.einsum("...iw,jw->...ij", out, ww)
    return out.astype(dt)


def horizontal_flip(img: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(img)[..., ::-1])


# -- synthetic identities ------------------------------------------------


@dataclass
class IdentityParams:
    identity: int
    head_center: tuple[float, float]
    head_axes: tuple[float, float]
    eye_offset: tuple[float, float]        # (half separation, height)
    eye_size: float
    mouth_offset: float
    mouth_width: float
    hairline: float
    skin: tuple[float, float, float]
    hair: tuple[float, float, float]
    background: float
    texture: np.ndarray = field(repr=False)  # (k, 4): amplitude, fx, fy, phase


def sample_identity(identity: int, seed: int) -> IdentityParams:
    rng = np.random.default_rng([seed, 101, identity])
    skin = rng.uniform(-0.1, 0.6) + np.array([0.15, 0.0, -0.12]) + rng.uniform(-0.06, 0.06, 3)
    n_tex = 4
    texture = np.column_stack([rng.uniform(0.04, 0.10, n_tex), rng.uniform(1.0, 3.5, n_tex),
                               rng.uniform(1.0, 3.5, n_tex), rng.uniform(0, 2 * np.pi, n_tex)])
    return IdentityParams(
        identity=identity,
        head_center=(rng.uniform(-0.06, 0.06), rng.uniform(-0.02, 0.1)),
        head_axes=(rng.uniform(0.5, 0.72), rng.uniform(0.68, 0.88)),
        eye_offset=(rng.uniform(0.2, 0.34), rng.uniform(-0.22, -0.06)),
        eye_size=rng.uniform(0.06, 0.11),
        mouth_offset=rng.uniform(0.3, 0.48),
        mouth_width=rng.uniform(0.14, 0.3),
        hairline=rng.uniform(-0.62, -0.32),
        skin=tuple(np.clip(skin, -0.4, 0.8)),
        hair=tuple(rng.uniform(-0.9, -0.2) + rng.uniform(-0.1, 0.1, 3)),
        background=rng.uniform(-0.95, -0.55),
        texture=texture,
    )


def _soft(inside: np.ndarray, softness: float = 0.04) -> np.ndarray:
    # inside > 0 within the shape; logistic edge about a pixel wide
    return 0.5 * (1 + np.tanh(inside / softness))


def _ellipse(x, y, cx, cy, ax, ay):
    return 1.0 - np.sqrt(((x - cx) / ax) ** 2 + ((y - cy) / ay) ** 2)


def render_identity(params: IdentityParams, variant: int, size: int = HR_SIZE, seed: int = 0,
                    smooth: float = FACE_SMOOTH) -> np.ndarray:
    """(3, size, size) face in [-1, 1]; the variant jitters brightness, position and expression.

    ``smooth`` is a Gaussian sigma in pixels at 128x128 (scaled with ``size``).
    """
    rng = np.random.default_rng([seed, 202, params.identity, variant])
    shift = rng.uniform(-0.03, 0.03, 2)
    brightness = rng.uniform(-0.05, 0.05)
    mouth_open = rng.uniform(0.02, 0.07)
    eye_open = rng.uniform(0.7, 1.0)

    coords = (np.arange(size) + 0.5) / size * 2 - 1
    y, x = np.meshgrid(coords, coords, indexing="ij")
    x = x - shift[0]
    y = y - shift[1]
    cx, cy = params.head_center
    ax, ay = params.head_axes

    img = np.empty((3, size, size))
    img[:] = params.background
    head = _soft(_ellipse(x, y, cx, cy, ax, ay))
    tex = sum(a * np.sin(np.pi * (fx * x + fy * y) + ph) for a, fx, fy, ph in params.texture)
    shade = 0.12 * (1 - ((x - cx) / ax) ** 2).clip(0, 1)  # rounder cheeks, darker rim
    skin = np.asarray(params.skin)[:, None, None] + tex + shade
    img = img * (1 - head) + skin * head

    hair = head * _soft(params.hairline + cy - y, 0.03)
    img = img * (1 - hair) + np.asarray(params.hair)[:, None, None] * hair

    ex, ey = params.eye_offset
    for side in (-1, 1):
        eye = _soft(_ellipse(x, y, cx + side * ex, cy + ey, params.eye_size * 1.4, params.eye_size * eye_open), 0.08)
        img = img * (1 - eye) + 0.85 * eye
        pupil = _soft(_ellipse(x, y, cx + side * ex, cy + ey, params.eye_size * 0.6, params.eye_size * 0.6 * eye_open),
                      0.08)
        img = img * (1 - pupil) - 0.9 * pupil
        brow = _soft(_ellipse(x, y, cx + side * ex, cy + ey - 2.2 * params.eye_size, params.eye_size * 1.6, 0.025), 0.1)
        img = img * (1 - brow) + np.asarray(params.hair)[:, None, None] * brow

    nose = _soft(_ellipse(x, y, cx, cy + 0.5 * (ey + params.mouth_offset), 0.05, 0.14), 0.1)
    img = img - 0.15 * nose
    mouth = _soft(_ellipse(x, y, cx, cy + params.mouth_offset, params.mouth_width, mouth_open), 0.1)
    img = img * (1 - mouth) + np.array([0.3, -0.5, -0.5])[:, None, None] * mouth

    if smooth > 0:
        sigma = smooth * size / HR_SIZE
        img = gaussian_filter(img, (0, sigma, sigma), mode="nearest")
    return np.clip(img + brightness, -1, 1).astype(np.float32)


def derive_thermal(visible: np.ndarray, seed: int = 0, channels: int = 1, noise_std: float = 0.02,
                   blur_sigma: float = 1.0) -> np.ndarray:
    """Simulated thermal view of a visible face: (channels, H, W) in [-1, 1].

    Luma collapse, monotone remap 2*sigmoid(2.5 * l) - 1, Gaussian blur and
    seeded noise. With 3 channels the extra two are further monotone remaps
    of the same signal (a stand-in for Stokes images), each with its own noise.
    """
    rng = np.random.default_rng([seed, 303])
    v = np.asarray(visible, dtype=np.float64)
    luma = 0.299 * v[0] + 0.587 * v[1] + 0.114 * v[2]
    base = 2.0 / (1.0 + np.exp(-2.5 * luma)) - 1.0
    chans = [base]
    if channels == 3:
        chans += [0.6 * base + 0.2 * np.tanh(2 * base), 0.4 * base ** 3 + 0.3 * base]
    elif channels != 1:
        raise ContractError("thermal images have 1 or 3 channels")
    out = np.stack([gaussian_filter(c, blur_sigma, mode="reflect") for c in chans])
    out += rng.normal(0.0, noise_std, out.shape)
    return np.clip(out, -1, 1).astype(np.float32)


# -- PNG io ----------------------------------------------------------------

def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round((np.asarray(img, np.float64) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def from_uint8(u8: np.ndarray) -> np.ndarray:
    return (u8.astype(np.float32) / np.float32(127.5) - np.float32(1.0)).astype(np.float32)


def save_png(path, img: np.ndarray) -> None:
    """(C, H, W) in [-1, 1] -> 8-bit PNG (grey for C=1, RGB for C=3)."""
    u8 = to_uint8(img)
    arr = u8[0] if u8.shape[0] == 1 else u8.transpose(1, 2, 0)
    Image.fromarray(arr).save(path, format="PNG", optimize=False, compress_level=6)


def load_png(path) -> np.ndarray:
    arr = np.asarray(Image.open(path))
    arr = arr[None] if arr.ndim == 2 else arr.transpose(2, 0, 1)
    return from_uint8(arr)


# -- dataset -----------------------------------------------------------------


def split_identities(n_identities: int, seed: int, fractions=(0.7, 0.15, 0.15)) -> dict[str, list[int]]:
    """Identity-disjoint train/val/test split; val and test get ceil(fraction * n) ids each."""
    if n_identities < 3:
        raise ContractError("need at least 3 identities for train/val/test splits")
    order = np.random.default_rng([seed, 404]).permutation(n_identities)
    n_val = math.ceil(fractions[1] * n_identities - 1e-9)
    n_test = math.ceil(fractions[2] * n_identities - 1e-9)
    n_train = n_identities - n_val - n_test
    if n_train < 1:
        raise ContractError(f"{n_identities} identities leave no training split")
    return {"train": sorted(order[:n_train].tolist()),
            "val": sorted(order[n_train:n_train + n_val].tolist()),
            "test": sorted(order[n_train + n_val:].tolist())}


def make_sample(identity: int, variant: int, seed: int, channels: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """(visible HR, thermal HR) for one (identity, variant), both quantised to 8 bits."""
    params = sample_identity(identity, seed)
    vis = render_identity(params, variant, seed=seed)
    sample_seed = int(np.random.default_rng([seed, 505, identity, variant]).integers(2**63))
    th = derive_thermal(vis, seed=sample_seed, channels=channels)
    return from_uint8(to_uint8(vis)), from_uint8(to_uint8(th))


@dataclass
class Manifest:
    seed: int
    channels: int
    rows: list[dict]
    gallery: dict[str, dict[int, int]]   # split -> identity -> variant
    root: Path | None = None


def build_dataset(n_identities: int, variants_per_identity: int, seed: int, out_dir=None,
                  channels: int = 1) -> Manifest:
    """Generate a dataset; with ``out_dir`` also write PNGs, manifest.tsv and gallery.tsv."""
    if n_identities < 3 or variants_per_identity < 2:
        raise ContractError("need >= 3 identities and >= 2 variants (one gallery, one probe)")
    splits = split_identities(n_identities, seed)
    split_of = {i: s for s, ids in splits.items() for i in ids}
    grng = np.random.default_rng([seed, 606])
    gallery = {s: {i: int(grng.integers(variants_per_identity)) for i in ids} for s, ids in splits.items()}
    root = Path(out_dir) if out_dir is not None else None
    if root is not None:
        (root / "visible").mkdir(parents=True, exist_ok=True)
        (root / "thermal").mkdir(parents=True, exist_ok=True)
    rows = []
    for identity in range(n_identities):
        for variant in range(variants_per_identity):
            name = f"id{identity:04d}_v{variant:03d}.png"
            row = {"split": split_of[identity], "identity": identity, "variant": variant,
                   "visible": f"visible/{name}", "thermal": f"thermal/{name}"}
            if root is not None:
                vis, th = make_sample(identity, variant, seed, channels)
                save_png(root / row["visible"], vis)
                save_png(root / row["thermal"], th)
            rows.append(row)
    man = Manifest(seed, channels, rows, gallery, root)
    if root is not None:
        write_manifest(man, root)
    return man


def write_manifest(man: Manifest, root) -> None:
    root = Path(root)
    with open(root / "manifest.tsv", "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# seed={man.seed} channels={man.channels}\n")
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["split", "identity", "variant", "visible-path", "thermal-path"])
        for r in man.rows:
            w.writerow([r["split"], r["identity"], r["variant"], r["visible"], r["thermal"]])
    with open(root / "gallery.tsv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["split", "identity", "gallery-variant"])
        for s in SPLITS:
            for i, v in sorted(man.gallery[s].items()):
                w.writerow([s, i, v])


def read_manifest(root) -> Manifest:
    root = Path(root)
    path = root / "manifest.tsv"
    if not path.exists():
        raise FormatError(f"no manifest.tsv in {root}")
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("# "):
            raise FormatError("manifest header line missing")
        meta = dict(kv.split("=", 1) for kv in header[2:].split())
        reader = csv.DictReader(fh, delimiter="\t")
        rows = [{"split": r["split"], "identity": int(r["identity"]), "variant": int(r["variant"]),
                 "visible": r["visible-path"], "thermal": r["thermal-path"]} for r in reader]
    gallery = {s: {} for s in SPLITS}
    with open(root / "gallery.tsv", encoding="utf-8") as fh:
        for r in csv.DictReader(fh, delimiter="\t"):
            gallery[r["split"]][int(r["identity"])] = int(r["gallery-variant"])
    return Manifest(int(meta["seed"]), int(meta.get("channels", 1)), rows, gallery, root)


@dataclass
class PairedSplit:
    """In-memory arrays for one split.

    visible (N, 3, 8r, 8r); thermal_lr (N, c, r, r); thermal_up (N, c, 8r, 8r)
    is the bicubic upsampled LR input used by the discriminator and the baseline.
    """

    name: str
    visible: np.ndarray
    thermal_lr: np.ndarray
    thermal_up: np.ndarray
    identity: np.ndarray
    variant: np.ndarray
    gallery: dict[int, int]

    def __len__(self) -> int:
        return len(self.identity)

    def subset(self, idx) -> "PairedSplit":
        idx = np.asarray(idx)
        return PairedSplit(self.name, self.visible[idx], self.thermal_lr[idx], self.thermal_up[idx],
                           self.identity[idx], self.variant[idx], self.gallery)

    def gallery_mask(self) -> np.ndarray:
        return np.array([self.gallery.get(int(i)) == int(v) for i, v in zip(self.identity, self.variant)])


def prepare_pair(visible_hr: np.ndarray, thermal_hr: np.ndarray, resolution: int = 16):
    """HR arrays -> (visible at 8r, LR thermal at r, LR thermal upsampled to 8r)."""
    out = 8 * resolution
    vis = visible_hr if visible_hr.shape[-1] == out else bicubic_resample(visible_hr, out, out)
    lr = bicubic_resample(thermal_hr, resolution, resolution)
    up = bicubic_resample(lr, out, out)
    return vis.astype(np.float32), lr.astype(np.float32), up.astype(np.float32)


def load_split(source, split: str, resolution: int = 16) -> PairedSplit:
    """Load one split from a dataset directory (or an in-memory Manifest without files)."""
    man = source if isinstance(source, Manifest) else read_manifest(source)
    rows = [r for r in man.rows if r["split"] == split]
    if not rows:
        raise ContractError(f"dataset has no {split!r} split")
    vis, lr, up = [], [], []
    for r in rows:
        if man.root is not None:
            v_hr, t_hr = load_png(man.root / r["visible"]), load_png(man.root / r["thermal"])
        else:
            v_hr, t_hr = make_sample(r["identity"], r["variant"], man.seed, man.channels)
        a, b, c = prepare_pair(v_hr, t_hr, resolution)
        vis.append(a)
        lr.append(b)
        up.append(c)
    return PairedSplit(split, np.stack(vis), np.stack(lr), np.stack(up),
                       np.array([r["identity"] for r in rows]), np.array([r["variant"] for r in rows]),
                       dict(man.gallery[split]))


def sample_batch(data: PairedSplit, batch_size: int, rng: np.random.Generator, flip: bool = True):
    """Random batch with joint horizontal flips (p = 0.5) of every image in a pair."""
    n = len(data)
    idx = rng.choice(n, size=batch_size, replace=n < batch_size)
    vis, lr, up = data.visible[idx].copy(), data.thermal_lr[idx].copy(), data.thermal_up[idx].copy()
    if flip:
        f = rng.random(batch_size) < 0.5
        vis[f], lr[f], up[f] = vis[f][..., ::-1], lr[f][..., ::-1], up[f][..., ::-1]
    return vis, lr, up, idx


__all__ = ["cubic", "resize_weights", "bicubic_resample", "horizontal_flip", "IdentityParams", "sample_identity",
           "render_identity", "derive_thermal", "build_dataset", "read_manifest", "load_split", "PairedSplit",
           "Manifest", "split_identities", "sample_batch", "prepare_pair", "save_png", "load_png", "make_sample"]
