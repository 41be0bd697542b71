//! Deterministic procedural generator of face-like scenes: glyph faces
//! with binary attributes, ground-truth boxes synthesized from five
//! landmark points, plus clutter and optional occlusion.

pub mod dataset;
pub mod glyph;

use rand::{Rng, RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::tensor::Tensor;
use crate::SeedRng;

pub use dataset::{Dataset, DatasetManifest, Split};
pub use glyph::{decode_attributes, ATTRIBUTE_NAMES};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GlyphStyle {
    A,
    B,
}

impl GlyphStyle {
    pub fn as_str(&self) -> &'static str {
        match self {
            GlyphStyle::A => "a",
            GlyphStyle::B => "b",
        }
    }

    pub fn parse(s: &str) -> Result<GlyphStyle> {
        match s {
            "a" | "A" => Ok(GlyphStyle::A),
            "b" | "B" => Ok(GlyphStyle::B),
            other => Err(Error::InvalidConfig(format!("unknown glyph style {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GenConfig {
    pub image_h: usize,
    pub image_w: usize,
    pub faces_min: usize,
    pub faces_max: usize,
    pub attr_count: usize,
    /// Number of background clutter shapes per scene.
    pub clutter: usize,
    /// Per-face probability of an occluding bar.
    pub occlusion: f64,
    /// Landmark-hull expansion factor for ground-truth boxes.
    pub margin: f64,
    pub style: GlyphStyle,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            image_h: 64,
            image_w: 64,
            faces_min: 1,
            faces_max: 2,
            attr_count: 8,
            clutter: 6,
            occlusion: 0.0,
            margin: 0.3,
            style: GlyphStyle::A,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.attr_count == 0 || self.attr_count > glyph::ATTRIBUTE_NAMES.len() {
            return Err(Error::ConfigInfeasible(format!(
                "attr_count {} outside 1..={}",
                self.attr_count,
                glyph::ATTRIBUTE_NAMES.len()
            )));
        }
        if self.faces_min > self.faces_max {
            return Err(Error::ConfigInfeasible("faces_min > faces_max".into()));
        }
        if self.margin < 0.3 {
            // The glyph extends into the margin zone; thinner margins would
            // let attribute pixels escape the annotated box.
            return Err(Error::ConfigInfeasible(
                "margin must be >= 0.3 to contain the glyph".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.occlusion) {
            return Err(Error::ConfigInfeasible("occlusion outside [0,1]".into()));
        }
        if self.faces_max > 0 {
            let (hw, hh) = self.box_half_extents(glyph::R_MIN);
            if 2.0 * hw + 2.0 > self.image_w as f64 || 2.0 * hh + 2.0 > self.image_h as f64 {
                return Err(Error::ConfigInfeasible(format!(
                    "a minimum-size face ({}x{}) cannot fit in a {}x{} image",
                    2.0 * hw,
                    2.0 * hh,
                    self.image_w,
                    self.image_h
                )));
            }
        }
        Ok(())
    }

    fn box_half_extents(&self, r: f64) -> (f64, f64) {
        (
            (glyph::LM_HALF_W + self.margin * 2.0 * glyph::LM_HALF_W) * r,
            (glyph::LM_HALF_H + self.margin * 2.0 * glyph::LM_HALF_H) * r,
        )
    }
}

/// One annotated face: landmark-derived box, the five landmarks, and the
/// binary attribute row.
#[derive(Clone, Debug)]
pub struct FaceAnnotation {
    pub bbox: BBox,
    pub landmarks: [(f64, f64); 5],
    pub attributes: Vec<i8>,
}

/// One synthetic image with its ground truth.
#[derive(Clone, Debug)]
pub struct SceneRecord {
    /// `[1, H, W]`, values in [0,1], exactly representable as f32.
    pub image: Tensor,
    pub faces: Vec<FaceAnnotation>,
    pub seed: u64,
}

impl SceneRecord {
    pub fn height(&self) -> usize {
        self.image.dim(1)
    }

    pub fn width(&self) -> usize {
        self.image.dim(2)
    }

    pub fn gt_boxes(&self) -> Vec<BBox> {
        self.faces.iter().map(|f| f.bbox).collect()
    }
}

/// Axis-aligned hull of the landmarks expanded by `margin * hull-size` on
/// each side. Not clipped; callers clamp to their image if needed.
pub fn bbox_from_landmarks(landmarks: &[(f64, f64)], margin: f64) -> Result<BBox> {
    if landmarks.len() < 2 {
        return Err(Error::DegenerateLandmarks);
    }
    let mut x1 = f64::INFINITY;
    let mut y1 = f64::INFINITY;
    let mut x2 = f64::NEG_INFINITY;
    let mut y2 = f64::NEG_INFINITY;
    for &(x, y) in landmarks {
        x1 = x1.min(x);
        y1 = y1.min(y);
        x2 = x2.max(x);
        y2 = y2.max(y);
    }
    let (w, h) = (x2 - x1, y2 - y1);
    if w <= 0.0 || h <= 0.0 || !w.is_finite() || !h.is_finite() {
        return Err(Error::DegenerateLandmarks);
    }
    Ok(BBox {
        x1: x1 - margin * w,
        y1: y1 - margin * h,
        x2: x2 + margin * w,
        y2: y2 + margin * h,
    })
}

#[derive(Clone, Debug)]
struct ClutterItem {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    value: f64,
    round: bool,
}

#[derive(Clone, Debug)]
struct Occluder {
    y1: f64,
    y2: f64,
}

#[derive(Clone, Debug)]
struct FacePlan {
    geo: glyph::FaceGeometry,
    bbox: BBox,
    attrs: Vec<i8>,
    occluder: Option<Occluder>,
}

#[derive(Clone, Debug)]
struct ScenePlan {
    faces: Vec<FacePlan>,
    clutter: Vec<ClutterItem>,
    noise_seed: u64,
}

fn plan_scene(seed: u64, config: &GenConfig) -> Result<ScenePlan> {
    config.validate()?;
    let mut rng = SeedRng::seed_from_u64(seed);
    let (w, h) = (config.image_w as f64, config.image_h as f64);

    let count = rng.gen_range(config.faces_min..=config.faces_max);
    let mut faces: Vec<FacePlan> = Vec::new();
    for _ in 0..count {
        // Rejection placement; an unplaceable face is skipped rather than
        // distorting the layout.
        for _attempt in 0..60 {
            let r = rng.gen_range(glyph::R_MIN..glyph::R_MAX);
            let (hw, hh) = config.box_half_extents(r);
            let cx = rng.gen_range(hw + 1.0..w - 1.0 - hw);
            let cy = rng.gen_range(hh + 1.0..h - 1.0 - hh);
            let geo = glyph::FaceGeometry { cx, cy, r };
            let bbox = bbox_from_landmarks(&geo.landmarks(), config.margin)?;
            let collides = faces.iter().any(|f| {
                let a = BBox {
                    x1: bbox.x1 - 1.0,
                    y1: bbox.y1 - 1.0,
                    x2: bbox.x2 + 1.0,
                    y2: bbox.y2 + 1.0,
                };
                a.intersection_area(&f.bbox) > 0.0
            });
            if collides {
                continue;
            }
            let attrs: Vec<i8> = (0..config.attr_count)
                .map(|_| if rng.gen_bool(0.5) { 1 } else { -1 })
                .collect();
            let occluder = if config.occlusion > 0.0 && rng.gen_bool(config.occlusion) {
                let band = 0.22 * bbox.height();
                let y1 = bbox.y1 + rng.gen_range(0.0..(bbox.height() - band));
                Some(Occluder { y1, y2: y1 + band })
            } else {
                None
            };
            faces.push(FacePlan {
                geo,
                bbox,
                attrs,
                occluder,
            });
            break;
        }
    }

    let mut clutter = Vec::new();
    for _ in 0..config.clutter {
        for _attempt in 0..30 {
            let cw = rng.gen_range(2.0..9.0);
            let chh = rng.gen_range(2.0..9.0);
            let x = rng.gen_range(0.0..(w - cw).max(1.0));
            let y = rng.gen_range(0.0..(h - chh).max(1.0));
            let style = glyph::style_params(config.style);
            let value = rng.gen_range(style.clutter_lo..style.clutter_hi);
            let item = BBox {
                x1: x - 1.0,
                y1: y - 1.0,
                x2: x + cw + 1.0,
                y2: y + chh + 1.0,
            };
            if faces.iter().any(|f| item.intersection_area(&f.bbox) > 0.0) {
                continue;
            }
            clutter.push(ClutterItem {
                x,
                y,
                w: cw,
                h: chh,
                value,
                round: style.clutter_round,
            });
            break;
        }
    }

    Ok(ScenePlan {
        faces,
        clutter,
        noise_seed: rng.next_u64(),
    })
}

fn render_scene(plan: &ScenePlan, config: &GenConfig) -> Vec<f64> {
    let (w, h) = (config.image_w, config.image_h);
    let style = glyph::style_params(config.style);
    let mut canvas = vec![style.bg; w * h];

    let mut noise = SeedRng::seed_from_u64(plan.noise_seed);
    for (i, px) in canvas.iter_mut().enumerate() {
        if let Some(stripe) = style.stripe {
            if (i / w) % 4 == 0 {
                *px += stripe;
            }
        }
        *px += noise.gen_range(-style.noise..style.noise);
    }

    for item in &plan.clutter {
        let (ccx, ccy) = (item.x + item.w * 0.5, item.y + item.h * 0.5);
        for iy in item.y.floor().max(0.0) as usize..(item.y + item.h).ceil().min(h as f64) as usize {
            for ix in item.x.floor().max(0.0) as usize..(item.x + item.w).ceil().min(w as f64) as usize
            {
                let (px, py) = (ix as f64 + 0.5, iy as f64 + 0.5);
                let inside = if item.round {
                    let nx = (px - ccx) / (item.w * 0.5);
                    let ny = (py - ccy) / (item.h * 0.5);
                    nx * nx + ny * ny <= 1.0
                } else {
                    px >= item.x && px <= item.x + item.w && py >= item.y && py <= item.y + item.h
                };
                if inside {
                    let cell = &mut canvas[iy * w + ix];
                    *cell = cell.max(item.value);
                }
            }
        }
    }

    for face in &plan.faces {
        glyph::draw_face(&mut canvas, w, h, &face.geo, &face.attrs, &face.bbox, &style);
        if let Some(occ) = &face.occluder {
            for iy in occ.y1.floor().max(0.0) as usize..(occ.y2.ceil() as usize).min(h) {
                let py = iy as f64 + 0.5;
                if py < occ.y1 || py > occ.y2 {
                    continue;
                }
                for ix in face.bbox.x1.floor().max(0.0) as usize
                    ..(face.bbox.x2.ceil() as usize).min(w)
                {
                    let px = ix as f64 + 0.5;
                    if px >= face.bbox.x1 && px <= face.bbox.x2 {
                        canvas[iy * w + ix] = style.occluder_v;
                    }
                }
            }
        }
    }

    // Clamp and quantize to f32 so the on-disk format round-trips bit-exactly.
    for px in &mut canvas {
        *px = (px.clamp(0.0, 1.0) as f32) as f64;
    }
    canvas
}

/// Deterministic scene synthesis: identical `(seed, config)` gives a
/// bit-identical record.
pub fn generate_scene(seed: u64, config: &GenConfig) -> Result<SceneRecord> {
    let plan = plan_scene(seed, config)?;
    let pixels = render_scene(&plan, config);
    let image = Tensor::from_vec(pixels, &[1, config.image_h, config.image_w])?;
    let faces = plan
        .faces
        .iter()
        .map(|f| FaceAnnotation {
            bbox: f.bbox,
            landmarks: f.geo.landmarks(),
            attributes: f.attrs.clone(),
        })
        .collect();
    Ok(SceneRecord {
        image,
        faces,
        seed,
    })
}

/// Horizontal mirror of a record: image columns reversed, boxes and
/// landmarks reflected, left/right landmark pairs swapped. Valid only for
/// left-right-symmetric attribute sets, which all built-in attributes are.
pub fn hflip_scene(record: &SceneRecord) -> SceneRecord {
    let (h, w) = (record.height(), record.width());
    let src = record.image.data();
    let mut flipped = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            flipped[y * w + x] = src[y * w + (w - 1 - x)];
        }
    }
    drop(src);
    let wf = w as f64;
    let faces = record
        .faces
        .iter()
        .map(|f| {
            let lm = f.landmarks;
            let flip = |p: (f64, f64)| (wf - p.0, p.1);
            FaceAnnotation {
                bbox: f.bbox.hflip(wf),
                landmarks: [flip(lm[1]), flip(lm[0]), flip(lm[2]), flip(lm[4]), flip(lm[3])],
                attributes: f.attributes.clone(),
            }
        })
        .collect();
    SceneRecord {
        image: Tensor::from_vec(flipped, &[1, h, w]).expect("same extents"),
        faces,
        seed: record.seed,
    }
}
