"""Parametric synthetic faces with exact landmark ground truth.

A face is an ellipse head with brows, eyes (sclera + iris), a nose
line, a mouth and a chin point, drawn analytically in a face-local
frame and rotated by a roll angle, so every landmark coordinate is
known exactly.  Appearance varies by seed: position, scale, roll,
left/right asymmetries, intensity, background and noise.

Landmark layout (principal 0-11, elaborate 12+):

     0 L brow outer   1 L brow inner   2 R brow inner   3 R brow outer
     4 L eye outer    5 L eye inner    6 R eye inner    7 R eye outer
     8 nose tip       9 mouth L corner 10 mouth R corner 11 chin tip
    12 L brow mid    13 R brow mid    14 L lower-lid mid 15 R lower-lid mid
    16 nose bridge   17 upper lip mid 18 lower lip mid   19 philtrum
    20+ symmetric jaw-contour pairs (optional extras)

"L"/"R" are image-left/image-right.  The synthetic scheme's flip map
swaps the L/R pairs and fixes the midline points.
"""

import math
from dataclasses import dataclass

import numpy as np

from .data import AnnotatedImage, LandmarkSet, PartitionScheme
from .errors import ConfigurationError

_N_PRINCIPAL = 12
_N_NAMED_ELABORATE = 8

# Coordinates are snapped to this binary grid (~1e-6 px).  Values on the
# grid mirror exactly under (w-1) - x in double precision, which makes
# flip augmentation a bit-exact involution.
_GRID = 2.0 ** 20


def _snap(values):
    return np.round(np.asarray(values, dtype=np.float64) * _GRID) / _GRID


def make_synthetic_scheme(n_elaborate=8):
    """Partition scheme for generated faces; n_elaborate is 0 or an
    even count >= 8 (extras beyond 8 are jaw-contour pairs)."""
    if n_elaborate != 0 and (n_elaborate < _N_NAMED_ELABORATE or n_elaborate % 2):
        raise ConfigurationError("n_elaborate must be 0 or an even count >= %d, got %r"
                                 % (_N_NAMED_ELABORATE, n_elaborate))
    n = _N_PRINCIPAL + n_elaborate
    flip = list(range(n))
    pairs = [(0, 3), (1, 2), (4, 7), (5, 6), (9, 10)]
    if n_elaborate:
        pairs += [(12, 13), (14, 15)]
        for k in range(_N_PRINCIPAL + _N_NAMED_ELABORATE, n, 2):
            pairs.append((k, k + 1))
    for a, b in pairs:
        flip[a], flip[b] = b, a
    return PartitionScheme(
        name="synthetic_%d" % n,
        n_landmarks=n,
        principal=tuple(range(_N_PRINCIPAL)),
        interocular=(4, 7),
        flip_map=tuple(flip),
        notes="Generated faces; exact analytic landmarks.",
    )


@dataclass(frozen=True)
class SyntheticFaceParams:
    canvas: int = 112
    n_elaborate: int = 8
    symmetric: bool = False  # exact mirror symmetry, zero roll, centered
    max_roll_deg: float = 12.0
    center_jitter: float = 6.0
    box_margin: tuple = (0.08, 0.16)
    box_jitter: float = 0.03
    noise_sigma: tuple = (1.0, 3.5)


def _capsule_mask(u, v, p0, p1, radius):
    """Soft membership of grid points in a thick segment."""
    d = np.array(p1) - np.array(p0)
    len2 = float(d @ d)
    if len2 == 0:
        dist = np.hypot(u - p0[0], v - p0[1])
    else:
        t = np.clip(((u - p0[0]) * d[0] + (v - p0[1]) * d[1]) / len2, 0.0, 1.0)
        dist = np.hypot(u - (p0[0] + t * d[0]), v - (p0[1] + t * d[1]))
    return np.clip(radius + 0.5 - dist, 0.0, 1.0)


def _ellipse_mask(u, v, center, rx, ry):
    r = np.hypot((u - center[0]) / rx, (v - center[1]) / ry)
    # ~1px anti-aliased edge in the tighter axis
    return np.clip((1.0 - r) * min(rx, ry) + 0.5, 0.0, 1.0)


def generate_synthetic_face(seed, params=None):
    """Render one face; deterministic in (seed, params)."""
    params = params or SyntheticFaceParams()
    rng = np.random.default_rng(seed)
    size = params.canvas
    sym = params.symmetric

    def u(lo, hi):
        return float(rng.uniform(lo, hi))

    def asym():
        return 0.0 if sym else u(-0.05, 0.05)

    # face geometry (face-local frame, y down)
    a = u(26.0, 32.0)
    b = a * u(1.15, 1.30)
    roll = 0.0 if sym else u(-params.max_roll_deg, params.max_roll_deg)
    if sym:
        cx = (size - 1) / 2.0
        cy = (size - 1) / 2.0
    else:
        cx = (size - 1) / 2.0 + u(-params.center_jitter, params.center_jitter)
        cy = (size - 1) / 2.0 + u(-params.center_jitter, params.center_jitter)
    c = np.array([cx, cy])

    ex = u(0.40, 0.50) * a
    ey = u(0.22, 0.30) * b
    ew = u(0.16, 0.21) * a
    eh = 0.45 * ew
    exl, exr = ex * (1 + asym()), ex * (1 + asym())
    ewl, ewr = ew * (1 + asym()), ew * (1 + asym())
    eyl, eyr = ey * (1 + 0.5 * asym()), ey * (1 + 0.5 * asym())

    brow_dy = u(0.14, 0.20) * b
    brow_hw = ew * u(1.05, 1.25)
    ybl = -(eyl + brow_dy * (1 + asym()))
    ybr = -(eyr + brow_dy * (1 + asym()))

    bridge_y = -ey + u(0.04, 0.10) * b
    nose_y = u(0.10, 0.20) * b
    mouth_y = u(0.45, 0.56) * b
    mw = u(0.30, 0.40) * a
    mh = u(0.05, 0.09) * b
    mcl, mcr = mouth_y + mh * asym(), mouth_y + mh * asym()
    chin_y = u(0.93, 0.97) * b

    local = [
        (-exl - brow_hw, ybl), (-exl + brow_hw, ybl),     # 0, 1  L brow corners
        (exr - brow_hw, ybr), (exr + brow_hw, ybr),       # 2, 3  R brow corners
        (-exl - ewl, -eyl), (-exl + ewl, -eyl),           # 4, 5  L eye corners
        (exr - ewr, -eyr), (exr + ewr, -eyr),             # 6, 7  R eye corners
        (0.0, nose_y),                                    # 8     nose tip
        (-mw, mcl), (mw, mcr),                            # 9, 10 mouth corners
        (0.0, chin_y),                                    # 11    chin tip
    ]
    if params.n_elaborate:
        local += [
            (-exl, ybl), (exr, ybr),                      # 12, 13 brow mids
            (-exl, -eyl + eh), (exr, -eyr + eh),          # 14, 15 lower-lid mids
            (0.0, bridge_y),                              # 16     nose bridge
            (0.0, mouth_y - mh), (0.0, mouth_y + mh),     # 17, 18 lip mids
            (0.0, (nose_y + mouth_y - mh) / 2.0),         # 19     philtrum
        ]
        n_extra = params.n_elaborate - _N_NAMED_ELABORATE
        for k in range(n_extra // 2):
            phi = math.radians(35.0 + 12.0 * k)
            local += [(-a * math.sin(phi), b * math.cos(phi)),
                      (a * math.sin(phi), b * math.cos(phi))]
    local = np.asarray(local, dtype=np.float64)

    rot = np.array([[math.cos(math.radians(roll)), -math.sin(math.radians(roll))],
                    [math.sin(math.radians(roll)), math.cos(math.radians(roll))]])
    points = _snap(local @ rot.T + c)

    # appearance
    skin = u(150.0, 200.0)
    bg = u(30.0, 80.0)
    feat_dark = u(30.0, 60.0)
    iris = u(20.0, 70.0)
    sigma = u(*params.noise_sigma)

    ys_g, xs_g = np.mgrid[0:size, 0:size].astype(np.float64)
    du = xs_g - cx
    dv = ys_g - cy
    uu = rot[0, 0] * du + rot[1, 0] * dv  # inverse rotation = transpose
    vv = rot[0, 1] * du + rot[1, 1] * dv

    lum = np.full((size, size), bg, dtype=np.float64)
    lum += (vv / size) * u(-15.0, 15.0)  # mild background gradient

    head = _ellipse_mask(uu, vv, (0.0, 0.0), a, b)
    lum = lum * (1 - head) + skin * head

    def paint(mask, value):
        nonlocal lum
        lum = lum * (1 - mask) + value * mask

    paint(_capsule_mask(uu, vv, (-exl - brow_hw, ybl), (-exl + brow_hw, ybl), 1.6), feat_dark)
    paint(_capsule_mask(uu, vv, (exr - brow_hw, ybr), (exr + brow_hw, ybr), 1.6), feat_dark)
    paint(_ellipse_mask(uu, vv, (-exl, -eyl), ewl, eh), 232.0)
    paint(_ellipse_mask(uu, vv, (exr, -eyr), ewr, eh), 232.0)
    paint(_ellipse_mask(uu, vv, (-exl, -eyl), 0.42 * ewl, 0.42 * ewl), iris)
    paint(_ellipse_mask(uu, vv, (exr, -eyr), 0.42 * ewr, 0.42 * ewr), iris)
    paint(_capsule_mask(uu, vv, (0.0, bridge_y), (0.0, nose_y), 1.2), skin - 35.0)
    paint(_capsule_mask(uu, vv, (-0.35 * mw, nose_y), (0.35 * mw, nose_y), 1.2), skin - 45.0)
    paint(_ellipse_mask(uu, vv, (0.0, mouth_y), mw, mh), feat_dark + 40.0)
    paint(_capsule_mask(uu, vv, (-mw, (mcl + mcr) / 2), (mw, (mcl + mcr) / 2), 1.0), feat_dark)

    rgb = np.stack([np.clip(lum + 12.0, 0, 255),
                    lum,
                    np.clip(lum - 10.0, 0, 255)], axis=-1)
    rgb += rng.normal(0.0, sigma, size=(size, size, 1))
    image = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)

    # a detector-style face box: padded landmark bounding box, jittered
    bx0, by0 = points.min(axis=0)
    bx1, by1 = points.max(axis=0)
    side = max(bx1 - bx0, by1 - by0) * (1 + 2 * u(*params.box_margin))
    bcx = (bx0 + bx1) / 2.0 + (0.0 if sym else u(-1, 1) * params.box_jitter * side)
    bcy = (by0 + by1) / 2.0 + (0.0 if sym else u(-1, 1) * params.box_jitter * side)
    x0, y0, side = _snap([bcx - side / 2.0, bcy - side / 2.0, side])
    box = (float(x0), float(y0), float(side), float(side))

    scheme = make_synthetic_scheme(params.n_elaborate)
    sample = AnnotatedImage(image, LandmarkSet(points, scheme), box,
                            name="face_%08d" % (seed % 10**8))
    sample.validate()
    if not sample.box_contains_landmarks():
        raise AssertionError("synthetic face box lost a landmark (seed %r)" % seed)
    return sample


def generate_synthetic_dataset(count, seed, params=None):
    """count faces with per-sample seeds drawn from one master seed."""
    rng = np.random.default_rng(seed)
    child_seeds = rng.integers(0, 2**31 - 1, size=count)
    samples = []
    for i, s in enumerate(child_seeds):
        sample = generate_synthetic_face(int(s), params)
        sample.name = "face_%05d" % i
        samples.append(sample)
    return samples
