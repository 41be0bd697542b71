//! Face glyph rendering and the rule-based attribute decoder.
//!
//! Every attribute has a dedicated pixel signature drawn at a fixed
//! position relative to the face center `(cx, cy)` and radius `r`, and all
//! face pixels are clipped to the annotated box. The layout constants
//! below were chosen so that, at the supported face sizes, every
//! signature region is separated from its neighbours by at least one
//! pixel row/column; `decode_attributes` reads the same regions back and
//! must recover every bit exactly on occlusion-free renders. That decoder
//! is the well-posedness oracle for the whole learning task.

use crate::data::{FaceAnnotation, GenConfig, GlyphStyle};

/// Supported face radius range (pixels). Below ~11 the 1-pixel signature
/// separations collapse.
pub const R_MIN: f64 = 13.5;
pub const R_MAX: f64 = 18.0;

/// Half-extents of the annotation landmark pentagon, in face radii.
/// Landmarks: eyes (±0.55, -0.50), nose (0, 0), mouth corners (±0.55, +0.50).
pub const LM_HALF_W: f64 = 0.55;
pub const LM_HALF_H: f64 = 0.50;

pub const ATTRIBUTE_NAMES: [&str; 8] = [
    "eyeglasses",
    "smiling",
    "hat",
    "round_face",
    "beard",
    "big_eyes",
    "mustache",
    "cheek_dots",
];

// Geometry shared by both styles (units of face radius r unless "px").
const RING_OFF_Y: f64 = -0.025;
const HAT_Y: (f64, f64) = (-0.79, -0.68);
const HAT_HALF_W: f64 = 0.50;
const EYE_X: f64 = 0.28;
const EYE_Y: f64 = -0.22;
const EYE_R_BIG: f64 = 0.145;
const EYE_R_SMALL: f64 = 0.07;
const GLASSES_Y: f64 = -0.44;
const GLASSES_HALF_W: f64 = 0.46;
const NOSE_Y: f64 = 0.02;
const NOSE_R: f64 = 0.05;
const MOUTH_Y: f64 = 0.26;
const MOUTH_HALF_W: f64 = 0.24;
const SMILE_DIP: f64 = 0.14;
const MUSTACHE_Y: (f64, f64) = (0.09, 0.19);
const MUSTACHE_HALF_W: f64 = 0.30;
const BEARD_Y: (f64, f64) = (0.64, 0.76);
const BEARD_HALF_W: f64 = 0.34;
const DOT_X: f64 = 0.56;
const DOT_Y: f64 = 0.10;
const DOT_R: f64 = 0.05;

/// Style palette and ring proportions.
pub(crate) struct StyleParams {
    pub bg: f64,
    pub noise: f64,
    pub stripe: Option<f64>,
    pub ring_rx: f64,
    pub ring_ry: f64,
    pub stroke_mul: f64,
    pub ring_v: f64,
    pub eye_v: f64,
    pub nose_v: f64,
    pub mouth_v: f64,
    pub hat_v: f64,
    pub glasses_v: f64,
    pub mustache_v: f64,
    pub beard_v: f64,
    pub dots_v: f64,
    pub occluder_v: f64,
    pub clutter_lo: f64,
    pub clutter_hi: f64,
    pub clutter_round: bool,
}

pub(crate) fn style_params(style: GlyphStyle) -> StyleParams {
    match style {
        GlyphStyle::A => StyleParams {
            bg: 0.10,
            noise: 0.05,
            stripe: None,
            ring_rx: 0.80,
            ring_ry: 0.58,
            stroke_mul: 1.0,
            ring_v: 0.80,
            eye_v: 0.85,
            nose_v: 0.55,
            mouth_v: 0.75,
            hat_v: 0.95,
            glasses_v: 0.90,
            mustache_v: 0.85,
            beard_v: 0.75,
            dots_v: 0.95,
            occluder_v: 0.45,
            clutter_lo: 0.30,
            clutter_hi: 0.55,
            clutter_round: false,
        },
        GlyphStyle::B => StyleParams {
            bg: 0.18,
            noise: 0.04,
            stripe: Some(0.04),
            ring_rx: 0.76,
            ring_ry: 0.58,
            stroke_mul: 1.15,
            ring_v: 0.62,
            eye_v: 0.72,
            nose_v: 0.50,
            mouth_v: 0.66,
            hat_v: 0.80,
            glasses_v: 0.74,
            mustache_v: 0.72,
            beard_v: 0.64,
            dots_v: 0.82,
            occluder_v: 0.40,
            clutter_lo: 0.28,
            clutter_hi: 0.50,
            clutter_round: true,
        },
    }
}

#[derive(Clone, Debug)]
pub(crate) struct FaceGeometry {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl FaceGeometry {
    /// Recovers (cx, cy, r) from the annotation landmarks; exact because
    /// landmarks are stored losslessly.
    pub fn from_landmarks(landmarks: &[(f64, f64); 5]) -> FaceGeometry {
        let (eye_l, eye_r) = (landmarks[0], landmarks[1]);
        let r = (eye_r.0 - eye_l.0) / (2.0 * LM_HALF_W);
        FaceGeometry {
            cx: (eye_l.0 + eye_r.0) * 0.5,
            cy: eye_l.1 + LM_HALF_H * r,
            r,
        }
    }

    pub fn landmarks(&self) -> [(f64, f64); 5] {
        let (cx, cy, r) = (self.cx, self.cy, self.r);
        [
            (cx - LM_HALF_W * r, cy - LM_HALF_H * r), // left eye
            (cx + LM_HALF_W * r, cy - LM_HALF_H * r), // right eye
            (cx, cy),                                 // nose tip
            (cx - LM_HALF_W * r, cy + LM_HALF_H * r), // left mouth corner
            (cx + LM_HALF_W * r, cy + LM_HALF_H * r), // right mouth corner
        ]
    }
}

fn ring_th(r: f64, s: &StyleParams) -> f64 {
    (0.045 * r).max(0.8) * s.stroke_mul
}

fn bar_h(r: f64, s: &StyleParams) -> f64 {
    (0.04 * r).max(0.7) * s.stroke_mul
}

fn mouth_th(r: f64, s: &StyleParams) -> f64 {
    (0.035 * r).max(0.7) * s.stroke_mul
}

fn smile_stroke(r: f64, s: &StyleParams) -> f64 {
    (0.04 * r).max(0.8) * s.stroke_mul
}

fn eye_radius(r: f64, big: bool) -> f64 {
    if big {
        EYE_R_BIG * r
    } else {
        (EYE_R_SMALL * r).max(0.9)
    }
}

/// Intensity contributed by the face glyph at a pixel center offset
/// `(dx, dy)` from the face center, or `None` outside every feature.
fn face_value(dx: f64, dy: f64, r: f64, attrs: &[i8], s: &StyleParams) -> Option<f64> {
    let has = |i: usize| attrs.get(i).copied().unwrap_or(-1) > 0;
    let mut v: Option<f64> = None;
    let mut hit = |val: f64, cond: bool| {
        if cond {
            v = Some(v.map_or(val, |cur: f64| cur.max(val)));
        }
    };

    // outline ring: round (+1) is an ellipse, otherwise a rectangle frame
    let th = ring_th(r, s);
    let (rx, ry) = (s.ring_rx * r, s.ring_ry * r);
    let dyc = dy - RING_OFF_Y * r;
    if has(3) {
        let d = ((dx / rx).powi(2) + (dyc / ry).powi(2)).sqrt();
        hit(s.ring_v, (d - 1.0).abs() * rx.min(ry) <= th);
    } else {
        let inside_outer = dx.abs() <= rx + th && dyc.abs() <= ry + th;
        let inside_inner = dx.abs() <= rx - th && dyc.abs() <= ry - th;
        hit(s.ring_v, inside_outer && !inside_inner);
    }

    // hat block
    hit(
        s.hat_v,
        has(2) && dy >= HAT_Y.0 * r && dy <= HAT_Y.1 * r && dx.abs() <= HAT_HALF_W * r,
    );

    // eyes
    let er = eye_radius(r, has(5));
    let eye = |ex: f64| ((dx - ex).powi(2) + (dy - EYE_Y * r).powi(2)).sqrt() <= er;
    hit(s.eye_v, eye(-EYE_X * r) || eye(EYE_X * r));

    // eyeglasses: brow bar spanning both eyes
    hit(
        s.glasses_v,
        has(0) && (dy - GLASSES_Y * r).abs() <= bar_h(r, s) && dx.abs() <= GLASSES_HALF_W * r,
    );

    // nose
    hit(
        s.nose_v,
        (dx * dx + (dy - NOSE_Y * r).powi(2)).sqrt() <= (NOSE_R * r).max(0.9),
    );

    // mouth: straight segment, or a parabola dipping toward the chin
    if has(1) {
        if dx.abs() <= MOUTH_HALF_W * r {
            let t = dx / (MOUTH_HALF_W * r);
            let y = MOUTH_Y * r + SMILE_DIP * r * (1.0 - t * t);
            hit(s.mouth_v, (dy - y).abs() <= smile_stroke(r, s));
        }
    } else {
        hit(
            s.mouth_v,
            (dy - MOUTH_Y * r).abs() <= mouth_th(r, s) && dx.abs() <= MOUTH_HALF_W * r,
        );
    }

    // mustache band between nose and mouth
    hit(
        s.mustache_v,
        has(6) && dy >= MUSTACHE_Y.0 * r && dy <= MUSTACHE_Y.1 * r && dx.abs() <= MUSTACHE_HALF_W * r,
    );

    // beard band under the chin
    hit(
        s.beard_v,
        has(4) && dy >= BEARD_Y.0 * r && dy <= BEARD_Y.1 * r && dx.abs() <= BEARD_HALF_W * r,
    );

    // cheek dots
    let dot = |ex: f64| ((dx - ex).powi(2) + (dy - DOT_Y * r).powi(2)).sqrt() <= (DOT_R * r).max(0.9);
    hit(s.dots_v, has(7) && (dot(-DOT_X * r) || dot(DOT_X * r)));

    v
}

/// Max-blends one face into the canvas, clipped to its box.
pub(crate) fn draw_face(
    canvas: &mut [f64],
    width: usize,
    height: usize,
    geo: &FaceGeometry,
    attrs: &[i8],
    bbox: &crate::geometry::BBox,
    style: &StyleParams,
) {
    let x0 = bbox.x1.floor().max(0.0) as usize;
    let y0 = bbox.y1.floor().max(0.0) as usize;
    let x1 = (bbox.x2.ceil() as usize).min(width);
    let y1 = (bbox.y2.ceil() as usize).min(height);
    for iy in y0..y1 {
        let py = iy as f64 + 0.5;
        if py < bbox.y1 || py > bbox.y2 {
            continue;
        }
        for ix in x0..x1 {
            let px = ix as f64 + 0.5;
            if px < bbox.x1 || px > bbox.x2 {
                continue;
            }
            if let Some(v) = face_value(px - geo.cx, py - geo.cy, geo.r, attrs, style) {
                let cell = &mut canvas[iy * width + ix];
                *cell = cell.max(v);
            }
        }
    }
}

/// Mean intensity over pixel centers within a disk. Returns the
/// background value when the disk contains no pixel center (cannot happen
/// for radii >= 0.75px, kept for safety).
fn disk_mean(img: &[f64], w: usize, h: usize, cx: f64, cy: f64, rad: f64) -> f64 {
    rect_region_mean(img, w, h, cx - rad, cy - rad, cx + rad, cy + rad, |px, py| {
        ((px - cx).powi(2) + (py - cy).powi(2)).sqrt() <= rad
    })
}

fn band_mean(img: &[f64], w: usize, h: usize, x1: f64, y1: f64, x2: f64, y2: f64) -> f64 {
    rect_region_mean(img, w, h, x1, y1, x2, y2, |_, _| true)
}

fn rect_region_mean(
    img: &[f64],
    w: usize,
    h: usize,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    pred: impl Fn(f64, f64) -> bool,
) -> f64 {
    let mut acc = 0.0;
    let mut n = 0usize;
    let ix0 = x1.floor().max(0.0) as usize;
    let iy0 = y1.floor().max(0.0) as usize;
    for iy in iy0..(y2.ceil() as usize).min(h) {
        let py = iy as f64 + 0.5;
        if py < y1 || py > y2 {
            continue;
        }
        for ix in ix0..(x2.ceil() as usize).min(w) {
            let px = ix as f64 + 0.5;
            if px < x1 || px > x2 || !pred(px, py) {
                continue;
            }
            acc += img[iy * w + ix];
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        acc / n as f64
    }
}

/// Rule-based attribute decoder: reads each signature region back from the
/// rendered pixels. Independent of the network; exact on occlusion-free
/// scenes.
pub fn decode_attributes(
    image: &[f64],
    width: usize,
    height: usize,
    face: &FaceAnnotation,
    config: &GenConfig,
) -> Vec<i8> {
    let s = style_params(config.style);
    let geo = FaceGeometry::from_landmarks(&face.landmarks);
    let (cx, cy, r) = (geo.cx, geo.cy, geo.r);
    let present = 0.45;
    let sign = |b: bool| if b { 1i8 } else { -1i8 };

    let mut out = Vec::with_capacity(config.attr_count);
    for idx in 0..config.attr_count {
        let bit = match idx {
            // eyeglasses: the pixel row containing the brow bar centerline
            0 => {
                let row = (cy + GLASSES_Y * r).floor();
                band_mean(image, width, height, cx - 0.20 * r, row + 0.4, cx + 0.20 * r, row + 0.6)
                    > present
            }
            // smiling: the dip row lights up and the straight-mouth row
            // goes dark; compare the two
            1 => {
                let dip_row = (cy + (MOUTH_Y + SMILE_DIP) * r).floor();
                let mid_row = (cy + MOUTH_Y * r).floor();
                let dip = band_mean(image, width, height, cx - 0.10 * r, dip_row + 0.4, cx + 0.10 * r, dip_row + 0.6);
                let mid = band_mean(image, width, height, cx - 0.10 * r, mid_row + 0.4, cx + 0.10 * r, mid_row + 0.6);
                dip > mid
            }
            // hat: the pixel row through the block center
            2 => {
                let row = (cy - 0.735 * r).floor();
                band_mean(image, width, height, cx - 0.35 * r, row + 0.4, cx + 0.35 * r, row + 0.6)
                    > present
            }
            // round face: rectangle outlines put bright pixels at the
            // bottom corners of the ring extent, ellipses do not
            3 => {
                let probe = (0.05 * r).max(0.9);
                let corner_y = cy + RING_OFF_Y * r + s.ring_ry * r;
                let left = disk_mean(image, width, height, cx - s.ring_rx * r, corner_y, probe);
                let right = disk_mean(image, width, height, cx + s.ring_rx * r, corner_y, probe);
                0.5 * (left + right) < present
            }
            // beard: the pixel row through the band center
            4 => {
                let row = (cy + 0.70 * r).floor();
                band_mean(image, width, height, cx - 0.25 * r, row + 0.4, cx + 0.25 * r, row + 0.6)
                    > present
            }
            // big eyes: a disk wider than the small eye radius
            5 => {
                let probe = 0.135 * r;
                let l = disk_mean(image, width, height, cx - EYE_X * r, cy + EYE_Y * r, probe);
                let rr = disk_mean(image, width, height, cx + EYE_X * r, cy + EYE_Y * r, probe);
                0.5 * (l + rr) > 0.5
            }
            // mustache: the pixel row containing the band center
            6 => {
                let row = (cy + 0.14 * r).floor();
                band_mean(image, width, height, cx - 0.22 * r, row + 0.4, cx + 0.22 * r, row + 0.6)
                    > present
            }
            // cheek dots
            7 => {
                let probe = (0.04 * r).max(0.8);
                let l = disk_mean(image, width, height, cx - DOT_X * r, cy + DOT_Y * r, probe);
                let rr = disk_mean(image, width, height, cx + DOT_X * r, cy + DOT_Y * r, probe);
                l.max(rr) > present
            }
            _ => unreachable!("attr_count is validated <= 8"),
        };
        out.push(sign(bit));
    }
    out
}
