"""Dataset types, annotation formats, and the augmentation pipeline.

Coordinate conventions used throughout:

* Landmarks live in continuous pixel coordinates where integer
  positions coincide with pixel centers; a WxH image spans
  [0, W-1] x [0, H-1].
* A face box is (x0, y0, w, h) in the same units; it is valid when it
  lies inside the image and is expected to contain every landmark.
* Crop-normalized targets are ((x - x0)/w, (y - y0)/h) in [0, 1]^2, and
  the inter-ocular distance d is measured in that normalized frame.
* Rotation by t degrees about a center c maps p to c + R(t) (p - c)
  with R = [[cos, -sin], [sin, cos]]; with y pointing down this turns
  (1, 0) into (0, 1) for t = 90.

Annotation formats:

* points file::

      version: 1
      n_points: 20
      {
      x y
      ...
      }

* CSV: one sample per line, ``relative/image/path,x1,y1,x2,y2,...``.

Images are stored as .npy files holding (H, W, 3) uint8 arrays, which
keeps the toolchain free of image-codec dependencies.
"""

import csv
import json
import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError, UsageError

log = logging.getLogger("cftalign.data")


class SampleSkipped(Exception):
    """An augmentation could not keep its containment guarantees."""

    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


# ---------------------------------------------------------------------------
# landmark schemes


@dataclass(frozen=True)
class PartitionScheme:
    """Landmark bookkeeping for one annotation convention.

    principal lists the coarse shape-defining points; flip_map is the
    index permutation under horizontal mirroring (None when the scheme
    does not define one, which disables flip augmentation); interocular
    names the (left, right) eye-corner pair used for d.
    """

    name: str
    n_landmarks: int
    principal: tuple
    interocular: tuple
    flip_map: tuple = None
    notes: str = ""

    def __post_init__(self):
        if self.n_landmarks < 2:
            raise ConfigurationError("scheme %s: need at least 2 landmarks" % self.name)
        pri = tuple(sorted(int(i) for i in self.principal))
        if len(set(pri)) != len(pri) or not pri:
            raise ConfigurationError("scheme %s: principal indices must be unique and "
                                     "non-empty" % self.name)
        if pri[0] < 0 or pri[-1] >= self.n_landmarks:
            raise ConfigurationError("scheme %s: principal indices out of range" % self.name)
        object.__setattr__(self, "principal", pri)
        li, ri = self.interocular
        if not (0 <= li < self.n_landmarks and 0 <= ri < self.n_landmarks and li != ri):
            raise ConfigurationError("scheme %s: interocular pair %r invalid"
                                     % (self.name, self.interocular))
        object.__setattr__(self, "interocular", (int(li), int(ri)))
        if self.flip_map is not None:
            fm = tuple(int(i) for i in self.flip_map)
            if sorted(fm) != list(range(self.n_landmarks)):
                raise ConfigurationError("scheme %s: flip_map is not a permutation of 0..%d"
                                         % (self.name, self.n_landmarks - 1))
            if any(fm[fm[i]] != i for i in range(self.n_landmarks)):
                raise ConfigurationError("scheme %s: flip_map is not an involution" % self.name)
            pset = set(pri)
            if any((fm[i] in pset) != (i in pset) for i in range(self.n_landmarks)):
                raise ConfigurationError("scheme %s: flip_map does not preserve the principal "
                                         "subset" % self.name)
            object.__setattr__(self, "flip_map", fm)

    @property
    def elaborate(self):
        pset = set(self.principal)
        return tuple(i for i in range(self.n_landmarks) if i not in pset)

    def to_dict(self):
        d = {
            "name": self.name,
            "n_landmarks": self.n_landmarks,
            "principal": list(self.principal),
            "interocular": list(self.interocular),
            "flip_map": list(self.flip_map) if self.flip_map is not None else None,
        }
        if self.notes:
            d["notes"] = self.notes
        return d


_SCHEME_KEYS = {"name", "n_landmarks", "principal", "interocular", "flip_map", "notes"}


def scheme_from_dict(raw, origin="<dict>"):
    if not isinstance(raw, dict):
        raise ConfigurationError("partition config %s must be a JSON object" % origin)
    unknown = set(raw) - _SCHEME_KEYS
    if unknown:
        raise ConfigurationError("partition config %s has unknown keys: %s"
                                 % (origin, ", ".join(sorted(unknown))))
    missing = {"name", "n_landmarks", "principal", "interocular"} - set(raw)
    if missing:
        raise ConfigurationError("partition config %s missing keys: %s"
                                 % (origin, ", ".join(sorted(missing))))
    return PartitionScheme(
        name=raw["name"],
        n_landmarks=int(raw["n_landmarks"]),
        principal=tuple(raw["principal"]),
        interocular=tuple(raw["interocular"]),
        flip_map=tuple(raw["flip_map"]) if raw.get("flip_map") is not None else None,
        notes=raw.get("notes", ""),
    )


def load_scheme(path):
    try:
        with open(path) as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError("cannot read partition config %s: %s" % (path, exc))
    return scheme_from_dict(raw, origin=str(path))


def save_scheme(scheme, path):
    with open(path, "w") as f:
        json.dump(scheme.to_dict(), f, indent=2)
        f.write("\n")


def builtin_scheme(name):
    """Load one of the partition tables shipped with the package."""
    from importlib import resources

    ref = resources.files("cftalign").joinpath("partitions/%s.json" % name)
    if not ref.is_file():
        raise ConfigurationError("no builtin partition scheme named %r" % name)
    return scheme_from_dict(json.loads(ref.read_text()), origin="builtin:%s" % name)


# ---------------------------------------------------------------------------
# samples


class LandmarkSet:
    """Ordered (x, y) landmark coordinates tied to a PartitionScheme."""

    def __init__(self, points, scheme):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DataError("landmark points must be (L, 2), got %s" % (pts.shape,))
        if pts.shape[0] != scheme.n_landmarks:
            raise DataError("expected %d landmarks for scheme %s, got %d"
                            % (scheme.n_landmarks, scheme.name, pts.shape[0]))
        self.points = pts
        self.scheme = scheme

    def copy(self):
        return LandmarkSet(self.points.copy(), self.scheme)

    def principal_points(self):
        return self.points[list(self.scheme.principal)]

    def elaborate_points(self):
        return self.points[list(self.scheme.elaborate)]

    def interocular_distance(self):
        li, ri = self.scheme.interocular
        return float(np.hypot(*(self.points[li] - self.points[ri])))

    def in_bounds(self, width, height):
        return bool(np.all(self.points[:, 0] >= 0) and np.all(self.points[:, 0] <= width - 1)
                    and np.all(self.points[:, 1] >= 0) and np.all(self.points[:, 1] <= height - 1))

    def flipped(self, width):
        """Mirror across the vertical axis and permute by flip_map."""
        if self.scheme.flip_map is None:
            raise ConfigurationError("scheme %s has no flip_map; cannot flip" % self.scheme.name)
        out = np.empty_like(self.points)
        for i, j in enumerate(self.scheme.flip_map):
            out[j, 0] = (width - 1) - self.points[i, 0]
            out[j, 1] = self.points[i, 1]
        return LandmarkSet(out, self.scheme)


@dataclass
class AnnotatedImage:
    image: np.ndarray  # (H, W, 3) uint8
    landmarks: LandmarkSet
    face_box: tuple  # (x0, y0, w, h) floats
    name: str = ""

    def validate(self):
        img = self.image
        if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
            raise DataError("sample %s: image must be (H, W, 3) uint8" % self.name)
        h, w = img.shape[:2]
        if not self.landmarks.in_bounds(w, h):
            raise DataError("sample %s: landmarks outside the image" % self.name)
        x0, y0, bw, bh = self.face_box
        if bw <= 0 or bh <= 0:
            raise DataError("sample %s: degenerate face box %r" % (self.name, self.face_box))
        if x0 < 0 or y0 < 0 or x0 + bw > w - 1 or y0 + bh > h - 1:
            raise DataError("sample %s: face box %r leaves the image" % (self.name, self.face_box))
        if self.landmarks.interocular_distance() <= 0:
            raise DataError("sample %s: degenerate inter-ocular distance" % self.name)
        return self

    def box_contains_landmarks(self):
        x0, y0, bw, bh = self.face_box
        p = self.landmarks.points
        return bool(np.all(p[:, 0] >= x0) and np.all(p[:, 0] <= x0 + bw)
                    and np.all(p[:, 1] >= y0) and np.all(p[:, 1] <= y0 + bh))


@dataclass(frozen=True)
class AugmentationSpec:
    """Knobs for the augmentation sweep; defaults follow the usual
    small-perturbation regime so containment rarely fails."""

    rotation_angles: tuple = (-15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0)
    translation_offsets: tuple = ((0.0, 0.0), (0.05, 0.0), (-0.05, 0.0),
                                  (0.0, 0.05), (0.0, -0.05))
    do_flip: bool = True
    compression_qualities: tuple = (90, 70, 50)
    rotation_box_margin: float = 0.10
    resample: str = "bilinear"

    def __post_init__(self):
        if self.resample != "bilinear":
            raise ConfigurationError("only bilinear resampling is supported, got %r"
                                     % (self.resample,))
        for q in self.compression_qualities:
            if not 1 <= int(q) <= 100:
                raise ConfigurationError("compression quality %r outside [1, 100]" % (q,))
        if self.rotation_box_margin < 0:
            raise ConfigurationError("rotation_box_margin must be >= 0")


# ---------------------------------------------------------------------------
# resampling helpers


def bilinear_sample(image, xs, ys, fill=None):
    """Sample (H, W, C) image at float coordinates; clamp at edges, or
    write `fill` wherever (xs, ys) falls outside the image."""
    h, w = image.shape[:2]
    xc = np.clip(xs, 0.0, w - 1.0)
    yc = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xc - x0)[..., None]
    fy = (yc - y0)[..., None]
    img = image.astype(np.float64)
    out = (img[y0, x0] * (1 - fx) * (1 - fy) + img[y0, x1] * fx * (1 - fy)
           + img[y1, x0] * (1 - fx) * fy + img[y1, x1] * fx * fy)
    if fill is not None:
        outside = (xs < 0) | (xs > w - 1) | (ys < 0) | (ys > h - 1)
        out[outside] = fill
    return out


def _rotation_matrix(angle_degrees):
    t = math.radians(angle_degrees)
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


# ---------------------------------------------------------------------------
# augmentation operations


def rotate_sample(sample, angle_degrees, box_margin=0.10):
    """Rotate image and landmarks about the face-box center.

    The new face box is the rotated landmarks' bounding box padded by
    box_margin per side.  Raises SampleSkipped when the rotated
    landmarks leave the image, the new box does, or the box would cover
    pixels that do not come from the original image.
    """
    img = sample.image
    h, w = img.shape[:2]
    x0, y0, bw, bh = sample.face_box
    c = np.array([x0 + bw / 2.0, y0 + bh / 2.0])

    if angle_degrees % 360.0 == 0.0:
        pts = sample.landmarks.points.copy()
        rot_img = img.copy()
    else:
        rot = _rotation_matrix(angle_degrees)
        pts = (sample.landmarks.points - c) @ rot.T + c
        if (pts[:, 0].min() < 0 or pts[:, 0].max() > w - 1
                or pts[:, 1].min() < 0 or pts[:, 1].max() > h - 1):
            raise SampleSkipped("rotation by %g deg pushes landmarks out of the image"
                                % angle_degrees)
        # inverse-map the output grid back onto the source image
        ys_g, xs_g = np.mgrid[0:h, 0:w].astype(np.float64)
        inv = _rotation_matrix(-angle_degrees)
        dx = xs_g - c[0]
        dy = ys_g - c[1]
        src_x = inv[0, 0] * dx + inv[0, 1] * dy + c[0]
        src_y = inv[1, 0] * dx + inv[1, 1] * dy + c[1]
        rot_img = np.clip(np.rint(bilinear_sample(img, src_x, src_y, fill=0.0)),
                          0, 255).astype(np.uint8)

    bx0, by0 = pts.min(axis=0)
    bx1, by1 = pts.max(axis=0)
    mw = (bx1 - bx0) * box_margin
    mh = (by1 - by0) * box_margin
    box = (bx0 - mw, by0 - mh, (bx1 - bx0) + 2 * mw, (by1 - by0) + 2 * mh)
    if box[2] <= 1 or box[3] <= 1:
        raise SampleSkipped("rotated landmark bounding box is degenerate")
    if box[0] < 0 or box[1] < 0 or box[0] + box[2] > w - 1 or box[1] + box[3] > h - 1:
        raise SampleSkipped("rotated face box leaves the image")
    if angle_degrees % 360.0 != 0.0:
        # every box pixel must originate from the source image, never fill
        inv = _rotation_matrix(-angle_degrees)
        corners = np.array([[box[0], box[1]], [box[0] + box[2], box[1]],
                            [box[0], box[1] + box[3]], [box[0] + box[2], box[1] + box[3]]])
        src = (corners - c) @ inv.T + c
        if (src[:, 0].min() < 0 or src[:, 0].max() > w - 1
                or src[:, 1].min() < 0 or src[:, 1].max() > h - 1):
            raise SampleSkipped("rotated face box would contain out-of-image fill")
    return AnnotatedImage(rot_img, LandmarkSet(pts, sample.landmarks.scheme), box,
                          name=sample.name)


def translate_box(sample, offset_fraction):
    """Shift the face box by (fx * w, fy * h); landmarks stay put."""
    fx, fy = offset_fraction
    x0, y0, bw, bh = sample.face_box
    nx0, ny0 = x0 + fx * bw, y0 + fy * bh
    h, w = sample.image.shape[:2]
    if nx0 < 0 or ny0 < 0 or nx0 + bw > w - 1 or ny0 + bh > h - 1:
        raise SampleSkipped("translated box leaves the image")
    moved = AnnotatedImage(sample.image, sample.landmarks, (nx0, ny0, bw, bh),
                           name=sample.name)
    if not moved.box_contains_landmarks():
        raise SampleSkipped("translated box no longer contains all landmarks")
    return moved


def flip_sample(sample):
    """Horizontal mirror: image, box and landmarks, indices remapped so
    semantic labels stay correct (left eye <-> right eye)."""
    h, w = sample.image.shape[:2]
    x0, y0, bw, bh = sample.face_box
    return AnnotatedImage(
        np.ascontiguousarray(sample.image[:, ::-1]),
        sample.landmarks.flipped(w),
        ((w - 1) - x0 - bw, y0, bw, bh),
        name=sample.name,
    )


# standard 8x8 luminance quantization table (quality scaling as in
# libjpeg); applied per RGB channel since this degradation exists for
# training robustness, not format interchange
_QUANT_BASE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


def _dct8_matrix():
    k = np.arange(8)[:, None]
    m = np.arange(8)[None, :]
    d = np.cos((2 * m + 1) * k * np.pi / 16.0) * np.sqrt(2.0 / 8.0)
    d[0] = np.sqrt(1.0 / 8.0)
    return d


_DCT8 = _dct8_matrix()


def _quant_table(quality):
    q = int(quality)
    if not 1 <= q <= 100:
        raise UsageError("compression quality must be in [1, 100], got %r" % (quality,))
    s = 5000 // q if q < 50 else 200 - 2 * q
    return np.clip(np.floor((_QUANT_BASE * s + 50) / 100.0), 1, 255)


def degrade_quality(sample, quality):
    """Block-DCT quantization degradation at a 1..100 quality setting.

    8x8 DCT per channel, coefficients quantized against the scaled
    table, reconstructed, re-rounded to uint8.  Landmarks and the face
    box are untouched.
    """
    qt = _quant_table(quality)
    img = sample.image
    h, w = img.shape[:2]
    ph = (-h) % 8
    pw = (-w) % 8
    padded = np.pad(img, ((0, ph), (0, pw), (0, 0)), mode="edge").astype(np.float64) - 128.0
    hh, ww = padded.shape[:2]
    out = np.empty_like(padded)
    for ch in range(3):
        blocks = padded[:, :, ch].reshape(hh // 8, 8, ww // 8, 8)
        coeffs = np.einsum("ki,hiwj,lj->hkwl", _DCT8, blocks, _DCT8, optimize=True)
        coeffs = np.round(coeffs / qt[None, :, None, :]) * qt[None, :, None, :]
        rec = np.einsum("ki,hkwl,lj->hiwj", _DCT8, coeffs, _DCT8, optimize=True)
        out[:, :, ch] = rec.reshape(hh, ww)
    out = np.clip(np.rint(out + 128.0), 0, 255).astype(np.uint8)[:h, :w]
    return AnnotatedImage(out, sample.landmarks.copy(), sample.face_box, name=sample.name)


def augment_dataset(samples, spec=None):
    """Run the rotate -> translate -> flip -> compress sweep.

    Returns (emitted, manifest_rows, skip_rows).  Manifest rows are
    (index, source, angle, tx, ty, flip, quality); skip rows carry the
    failed stage's parameters and the reason.  Emitted count per source
    is at most angles * translations * 2 * qualities.
    """
    spec = spec or AugmentationSpec()
    emitted = []
    manifest = []
    skips = []
    for si, sample in enumerate(samples):
        src = sample.name or str(si)
        for angle in spec.rotation_angles:
            try:
                rotated = rotate_sample(sample, angle, box_margin=spec.rotation_box_margin)
            except SampleSkipped as skip:
                log.info("skip %s angle=%g: %s", src, angle, skip.reason)
                skips.append((src, angle, "*", "*", "*", skip.reason))
                continue
            for tx, ty in spec.translation_offsets:
                try:
                    moved = translate_box(rotated, (tx, ty))
                except SampleSkipped as skip:
                    log.info("skip %s angle=%g t=(%g,%g): %s", src, angle, tx, ty, skip.reason)
                    skips.append((src, angle, tx, ty, "*", skip.reason))
                    continue
                variants = [(moved, 0)]
                if spec.do_flip:
                    variants.append((flip_sample(moved), 1))
                for variant, flipped in variants:
                    for q in spec.compression_qualities:
                        out = degrade_quality(variant, q)
                        out.name = "aug_%06d" % len(emitted)
                        manifest.append((len(emitted), src, angle, tx, ty, flipped, int(q)))
                        emitted.append(out)
    return emitted, manifest, skips


# ---------------------------------------------------------------------------
# encoding for the network


def crop_and_encode(sample, input_size=(50, 50)):
    """Resample the face box to the network input and build targets.

    Returns (image_chw, f_b, f_r, d): float32 (3, H, W) pixels in
    [0, 1], flattened crop-normalized principal/elaborate coordinate
    vectors, and the normalized-frame inter-ocular distance.
    """
    x0, y0, bw, bh = sample.face_box
    if bw <= 1 or bh <= 1:
        raise DataError("sample %s: face box %r is degenerate" % (sample.name, sample.face_box))
    if not sample.box_contains_landmarks():
        raise DataError("sample %s: face box does not contain all landmarks" % sample.name)
    oh, ow = input_size
    xs = x0 + (np.arange(ow) + 0.5) * (bw / ow)
    ys = y0 + (np.arange(oh) + 0.5) * (bh / oh)
    patch = bilinear_sample(sample.image, xs[None, :].repeat(oh, 0), ys[:, None].repeat(ow, 1))
    image_chw = np.ascontiguousarray((patch / 255.0).transpose(2, 0, 1).astype(np.float32))

    scheme = sample.landmarks.scheme
    norm = normalize_points(sample.landmarks.points, sample.face_box)
    f_b = norm[list(scheme.principal)].reshape(-1)
    f_r = norm[list(scheme.elaborate)].reshape(-1)
    li, ri = scheme.interocular
    d = float(np.hypot(*(norm[li] - norm[ri])))
    if d <= 0:
        raise DataError("sample %s: degenerate inter-ocular distance" % sample.name)
    return image_chw, f_b, f_r, d


def normalize_points(points, box):
    x0, y0, bw, bh = box
    out = np.empty_like(np.asarray(points, dtype=np.float64))
    out[:, 0] = (points[:, 0] - x0) / bw
    out[:, 1] = (points[:, 1] - y0) / bh
    return out


def denormalize_points(norm_points, box):
    x0, y0, bw, bh = box
    out = np.empty_like(np.asarray(norm_points, dtype=np.float64))
    out[:, 0] = x0 + norm_points[:, 0] * bw
    out[:, 1] = y0 + norm_points[:, 1] * bh
    return out


def assemble_points(pred_b, pred_e, scheme):
    """Merge flattened subset predictions back into (L, 2) order."""
    pred_b = np.asarray(pred_b, dtype=np.float64).reshape(-1, 2)
    pred_e = np.asarray(pred_e, dtype=np.float64).reshape(-1, 2)
    if pred_b.shape[0] != len(scheme.principal) or pred_e.shape[0] != len(scheme.elaborate):
        raise ConfigurationError("subset predictions do not match scheme %s" % scheme.name)
    out = np.empty((scheme.n_landmarks, 2), dtype=np.float64)
    out[list(scheme.principal)] = pred_b
    if len(scheme.elaborate):
        out[list(scheme.elaborate)] = pred_e
    return out


@dataclass
class EncodedDataset:
    """Stacked network-ready arrays plus per-sample metadata."""

    x: np.ndarray  # (N, 3, H, W) float32
    f_b: np.ndarray  # (N, 2|P|) float64
    f_r: np.ndarray  # (N, 2|E|) float64
    d: np.ndarray  # (N,) float64
    names: list
    boxes: list
    truth_points: list  # original pixel-frame landmark arrays
    scheme: PartitionScheme

    @property
    def n(self):
        return self.x.shape[0]

    def subset(self, indices):
        idx = list(indices)
        return EncodedDataset(
            x=self.x[idx], f_b=self.f_b[idx], f_r=self.f_r[idx], d=self.d[idx],
            names=[self.names[i] for i in idx], boxes=[self.boxes[i] for i in idx],
            truth_points=[self.truth_points[i] for i in idx], scheme=self.scheme)


def encode_dataset(samples, input_size=(50, 50)):
    if not samples:
        raise DataError("cannot encode an empty dataset")
    scheme = samples[0].landmarks.scheme
    xs, fbs, frs, ds = [], [], [], []
    for s in samples:
        img, f_b, f_r, d = crop_and_encode(s, input_size)
        xs.append(img)
        fbs.append(f_b)
        frs.append(f_r)
        ds.append(d)
    return EncodedDataset(
        x=np.stack(xs), f_b=np.stack(fbs), f_r=np.stack(frs), d=np.asarray(ds),
        names=[s.name for s in samples], boxes=[s.face_box for s in samples],
        truth_points=[s.landmarks.points.copy() for s in samples], scheme=scheme)


# ---------------------------------------------------------------------------
# annotation I/O


def parse_pts(path):
    """Read a points file; raises DataError naming the file and line."""
    def fail(lineno, msg):
        raise DataError("%s:%d: %s" % (path, lineno, msg))

    with open(path) as f:
        lines = [ln.strip() for ln in f]
    if not lines or not lines[0].startswith("version:"):
        fail(1, "expected 'version:' header")
    if len(lines) < 2 or not lines[1].startswith("n_points:"):
        fail(2, "expected 'n_points:' header")
    try:
        count = int(lines[1].split(":", 1)[1])
    except ValueError:
        fail(2, "bad n_points value %r" % lines[1])
    if len(lines) < 3 or lines[2] != "{":
        fail(3, "expected '{'")
    pts = []
    ln = 3
    for ln, line in enumerate(lines[3:], start=4):
        if line == "}":
            break
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            fail(ln, "expected 'x y', got %r" % line)
        try:
            pts.append((float(parts[0]), float(parts[1])))
        except ValueError:
            fail(ln, "bad coordinates %r" % line)
    else:
        fail(ln, "missing closing '}'")
    if len(pts) != count:
        fail(ln, "header says %d points but file has %d" % (count, len(pts)))
    return np.asarray(pts, dtype=np.float64)


def write_pts(points, path):
    with open(path, "w") as f:
        f.write("version: 1\n")
        f.write("n_points: %d\n" % len(points))
        f.write("{\n")
        for x, y in np.asarray(points, dtype=np.float64):
            f.write("%.6f %.6f\n" % (x, y))
        f.write("}\n")


def save_dataset(samples, out_dir, scheme, extra_manifest=None):
    """Materialize a dataset directory: partition.json, images/*.npy,
    annotations/*.pts, boxes.csv, and optionally a manifest."""
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "annotations"), exist_ok=True)
    save_scheme(scheme, os.path.join(out_dir, "partition.json"))
    with open(os.path.join(out_dir, "boxes.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["name", "x0", "y0", "w", "h"])
        for s in samples:
            if not s.name:
                raise UsageError("samples must be named before saving")
            np.save(os.path.join(out_dir, "images", s.name + ".npy"), s.image)
            write_pts(s.landmarks.points, os.path.join(out_dir, "annotations", s.name + ".pts"))
            writer.writerow([s.name] + ["%.6f" % v for v in s.face_box])
    if extra_manifest is not None:
        header, rows = extra_manifest
        with open(os.path.join(out_dir, "manifest.csv"), "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            writer.writerows(rows)


def _default_box(points, width, height, margin=0.15):
    bx0, by0 = points.min(axis=0)
    bx1, by1 = points.max(axis=0)
    mw = (bx1 - bx0) * margin
    mh = (by1 - by0) * margin
    x0 = max(0.0, bx0 - mw)
    y0 = max(0.0, by0 - mh)
    x1 = min(width - 1.0, bx1 + mw)
    y1 = min(height - 1.0, by1 + mh)
    return (x0, y0, x1 - x0, y1 - y0)


def load_dataset(annotation_path, image_root=None, scheme=None):
    """Load a dataset directory or a CSV annotation file.

    A directory must contain annotations/*.pts, images/*.npy and a
    partition.json (unless a scheme is passed); boxes.csv supplies the
    face boxes, falling back to padded landmark bounding boxes when it
    is absent.  A CSV file holds path,x1,y1,... rows with image paths
    relative to image_root (default: the CSV's directory).
    """
    if os.path.isdir(annotation_path):
        return _load_dataset_dir(annotation_path, scheme)
    if str(annotation_path).endswith(".csv"):
        return _load_dataset_csv(annotation_path, image_root, scheme)
    raise UsageError("annotation path must be a dataset directory or a .csv file, got %r"
                     % (annotation_path,))


def _load_dataset_dir(root, scheme):
    if scheme is None:
        part = os.path.join(root, "partition.json")
        if not os.path.exists(part):
            raise ConfigurationError("dataset %s has no partition.json and no scheme was given"
                                     % root)
        scheme = load_scheme(part)
    ann_dir = os.path.join(root, "annotations")
    if not os.path.isdir(ann_dir):
        raise DataError("dataset %s has no annotations/ directory" % root)
    boxes = {}
    boxes_path = os.path.join(root, "boxes.csv")
    if os.path.exists(boxes_path):
        with open(boxes_path, newline="") as f:
            for i, row in enumerate(csv.reader(f)):
                if i == 0 and row and row[0] == "name":
                    continue
                if len(row) != 5:
                    raise DataError("%s:%d: expected name,x0,y0,w,h" % (boxes_path, i + 1))
                boxes[row[0]] = tuple(float(v) for v in row[1:])
    names = sorted(fn[:-4] for fn in os.listdir(ann_dir) if fn.endswith(".pts"))
    if not names:
        log.warning("dataset %s contains no annotations", root)
        return []
    samples = []
    for name in names:
        pts = parse_pts(os.path.join(ann_dir, name + ".pts"))
        if pts.shape[0] != scheme.n_landmarks:
            raise DataError("%s: %d landmarks but scheme %s expects %d"
                            % (name, pts.shape[0], scheme.name, scheme.n_landmarks))
        img_path = os.path.join(root, "images", name + ".npy")
        if not os.path.exists(img_path):
            raise DataError("%s: missing image file %s" % (name, img_path))
        image = np.load(img_path)
        h, w = image.shape[:2]
        box = boxes.get(name) or _default_box(pts, w, h)
        sample = AnnotatedImage(image, LandmarkSet(pts, scheme), box, name=name)
        sample.validate()
        samples.append(sample)
    return samples


def _load_dataset_csv(path, image_root, scheme):
    if scheme is None:
        part = os.path.join(os.path.dirname(path) or ".", "partition.json")
        if not os.path.exists(part):
            raise ConfigurationError("CSV dataset %s needs a partition.json sibling or an "
                                     "explicit scheme" % path)
        scheme = load_scheme(part)
    root = image_root or os.path.dirname(path) or "."
    samples = []
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        log.warning("annotation file %s is empty", path)
        return []
    for i, row in enumerate(rows, start=1):
        if not row:
            continue
        expected = 1 + 2 * scheme.n_landmarks
        if len(row) != expected:
            raise DataError("%s:%d: expected %d fields (path + %d coordinates), got %d"
                            % (path, i, expected, 2 * scheme.n_landmarks, len(row)))
        img_path = os.path.join(root, row[0])
        if not os.path.exists(img_path):
            raise DataError("%s:%d: missing image file %s" % (path, i, img_path))
        try:
            coords = np.asarray([float(v) for v in row[1:]], dtype=np.float64).reshape(-1, 2)
        except ValueError:
            raise DataError("%s:%d: bad coordinate values" % (path, i))
        image = np.load(img_path)
        h, w = image.shape[:2]
        name = os.path.splitext(os.path.basename(row[0]))[0]
        sample = AnnotatedImage(image, LandmarkSet(coords, scheme),
                                _default_box(coords, w, h), name=name)
        sample.validate()
        samples.append(sample)
    return samples
