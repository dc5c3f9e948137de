//! Software rasterization of image observations.
//!
//! Discrete state `k` is drawn as a filled regular polygon with `k + 3`
//! sides. Transforms apply in the fixed order scale, rotate, flip, shift.
//! Polygons are rasterized in coordinates local to an integer pixel centre,
//! which makes integer shifts translate the output pixel-exactly.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;

use thiserror::Error;

use crate::config::{EnvConfig, ImageTransform};
use crate::rng::RngStream;

/// Circumradius at scale 1, as a fraction of the smaller canvas side.
pub const BASE_RADIUS_FRACTION: f64 = 0.25;

pub const BACKGROUND: u8 = 0;
pub const POLYGON: u8 = 255;
pub const TERMINAL_REGION: u8 = 85;
pub const TARGET_DISC: u8 = 170;
pub const AGENT_DISC: u8 = 255;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("polygon for state {state} does not fit the {width}x{height} canvas")]
    PolygonExceedsCanvas { state: usize, width: usize, height: usize },
    #[error("scene rendering needs 2 dimensions, got {0}")]
    DimensionUnsupported(usize),
    #[error("malformed PGM: {0}")]
    MalformedPgm(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CanvasSpec {
    pub width: usize,
    pub height: usize,
}

impl CanvasSpec {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub fn from_config(config: &EnvConfig) -> Self {
        Self::new(config.image_width, config.image_height)
    }

    fn centre(&self) -> (i64, i64) {
        ((self.width / 2) as i64, (self.height / 2) as i64)
    }

    fn base_radius(&self) -> f64 {
        BASE_RADIUS_FRACTION * self.width.min(self.height) as f64
    }
}

/// Single-channel 8-bit image, row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ImageGrid {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl fmt::Debug for ImageGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ImageGrid({}x{}, {} lit)", self.width, self.height, self.lit_count())
    }
}

impl ImageGrid {
    pub fn blank(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![BACKGROUND; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Pixels that differ from the background.
    pub fn lit_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != BACKGROUND).count()
    }

    /// Places `other` to the right of `self`. Heights must agree.
    pub fn hconcat(&self, other: &ImageGrid) -> ImageGrid {
        assert_eq!(self.height, other.height, "hconcat needs equal heights");
        let width = self.width + other.width;
        let mut pixels = Vec::with_capacity(width * self.height);
        for y in 0..self.height {
            pixels.extend_from_slice(&self.pixels[y * self.width..(y + 1) * self.width]);
            pixels.extend_from_slice(&other.pixels[y * other.width..(y + 1) * other.width]);
        }
        ImageGrid {
            width,
            height: self.height,
            pixels,
        }
    }

    /// Binary PGM (P5) encoding.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Decodes the P5 files written by [`ImageGrid::to_pgm`]. Comments are
    /// not supported.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self, RenderError> {
        let bad = |m: &str| RenderError::MalformedPgm(m.to_string());
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
        }
        if fields[0] != "P5" {
            return Err(bad("magic is not P5"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("non-numeric header field"));
        let (width, height, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
        if maxval != 255 {
            return Err(bad("only maxval 255 is supported"));
        }
        // Exactly one whitespace byte separates the header from the raster.
        let data = bytes.get(pos + 1..).ok_or_else(|| bad("missing raster"))?;
        if data.len() != width * height {
            return Err(bad("raster size does not match header"));
        }
        Ok(Self {
            width,
            height,
            pixels: data.to_vec(),
        })
    }
}

/// One random draw of the polygon transforms. Disabled transforms hold
/// their identity values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformDraw {
    pub shift: (i64, i64),
    pub scale: f64,
    pub rotation_bucket: usize,
    pub rotation_buckets: usize,
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
}

impl Default for TransformDraw {
    fn default() -> Self {
        Self::identity()
    }
}

impl TransformDraw {
    pub fn identity() -> Self {
        Self {
            shift: (0, 0),
            scale: 1.0,
            rotation_bucket: 0,
            rotation_buckets: 1,
            flip_horizontal: false,
            flip_vertical: false,
        }
    }

    pub fn rotation(&self) -> f64 {
        TAU * self.rotation_bucket as f64 / self.rotation_buckets as f64
    }
}

/// Which transforms are active and how they are quantised.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformParams {
    pub enabled: Vec<ImageTransform>,
    pub shift_quant: usize,
    pub rotation_quant: usize,
    pub scale_range: (f64, f64),
}

impl TransformParams {
    pub fn none() -> Self {
        Self {
            enabled: Vec::new(),
            shift_quant: 1,
            rotation_quant: 1,
            scale_range: (1.0, 1.0),
        }
    }

    pub fn from_config(config: &EnvConfig) -> Self {
        Self {
            enabled: config.image_transforms.clone(),
            shift_quant: config.image_sh_quant,
            rotation_quant: config.image_ro_quant,
            scale_range: config.image_scale_range,
        }
    }

    fn has(&self, t: ImageTransform) -> bool {
        self.enabled.contains(&t)
    }
}

/// Rounds away trigonometric noise so that edges meant to be axis-aligned
/// or mirror images of each other are exactly so.
fn snap(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

/// Polygon vertices relative to the (shifted) canvas centre, y pointing down.
pub fn polygon_vertices(state: usize, draw: &TransformDraw, canvas: CanvasSpec) -> Vec<(f64, f64)> {
    let sides = state + 3;
    let radius = canvas.base_radius() * draw.scale;
    let rotation = draw.rotation();
    (0..sides)
        .map(|j| {
            let theta = rotation + TAU * j as f64 / sides as f64 - FRAC_PI_2;
            let mut x = snap(radius * theta.cos());
            let mut y = snap(radius * theta.sin());
            if draw.flip_horizontal {
                x = -x;
            }
            if draw.flip_vertical {
                y = -y;
            }
            (x, y)
        })
        .collect()
}

fn fits(vertices: &[(f64, f64)], shift: (i64, i64), canvas: CanvasSpec) -> bool {
    let (cx, cy) = canvas.centre();
    let (ox, oy) = ((cx + shift.0) as f64, (cy + shift.1) as f64);
    vertices.iter().all(|&(x, y)| {
        let (gx, gy) = (ox + x, oy + y);
        gx >= 0.0 && gx <= canvas.width as f64 && gy >= 0.0 && gy <= canvas.height as f64
    })
}

/// Even-odd scanline fill of `vertices` (centre-relative) into `image`,
/// sampling at pixel centres.
pub fn fill_polygon(image: &mut ImageGrid, vertices: &[(f64, f64)], origin: (i64, i64), value: u8) {
    let mut crossings: Vec<f64> = Vec::with_capacity(vertices.len());
    for py in 0..image.height {
        let y = (py as i64 - origin.1) as f64 + 0.5;
        crossings.clear();
        for i in 0..vertices.len() {
            let (ax, ay) = vertices[i];
            let (bx, by) = vertices[(i + 1) % vertices.len()];
            if (ay <= y) != (by <= y) {
                crossings.push(ax + (y - ay) * (bx - ax) / (by - ay));
            }
        }
        if crossings.is_empty() {
            continue;
        }
        crossings.sort_by(f64::total_cmp);
        for px in 0..image.width {
            let x = (px as i64 - origin.0) as f64 + 0.5;
            let left = crossings.iter().take_while(|&&c| c <= x).count();
            if left % 2 == 1 {
                image.set(px, py, value);
            }
        }
    }
}

/// Renders the regular `(state + 3)`-gon for `state` under `draw`.
pub fn render_discrete(state: usize, draw: &TransformDraw, canvas: CanvasSpec) -> Result<ImageGrid, RenderError> {
    let vertices = polygon_vertices(state, draw, canvas);
    if !fits(&vertices, draw.shift, canvas) {
        return Err(RenderError::PolygonExceedsCanvas {
            state,
            width: canvas.width,
            height: canvas.height,
        });
    }
    let (cx, cy) = canvas.centre();
    let mut image = ImageGrid::blank(canvas.width, canvas.height);
    fill_polygon(&mut image, &vertices, (cx + draw.shift.0, cy + draw.shift.1), POLYGON);
    Ok(image)
}

/// Every in-bounds shift on the `shift_quant` lattice for a polygon whose
/// other transforms are already fixed in `draw`.
pub fn shift_candidates(state: usize, draw: &TransformDraw, quant: usize, canvas: CanvasSpec) -> Vec<(i64, i64)> {
    let vertices = polygon_vertices(state, draw, canvas);
    let q = quant as i64;
    let kx = canvas.width as i64 / q;
    let ky = canvas.height as i64 / q;
    let mut out = Vec::new();
    for iy in -ky..=ky {
        for ix in -kx..=kx {
            let shift = (ix * q, iy * q);
            if fits(&vertices, shift, canvas) {
                out.push(shift);
            }
        }
    }
    out
}

/// Draws a random transform. Order of draws is fixed: scale, rotation,
/// flips, shift. Disabled transforms consume no randomness.
pub fn sample_transform(
    params: &TransformParams,
    state: usize,
    canvas: CanvasSpec,
    stream: &mut RngStream,
) -> TransformDraw {
    let mut draw = TransformDraw::identity();
    if params.has(ImageTransform::Scale) {
        let (lo, hi) = params.scale_range;
        draw.scale = (lo.ln() + (hi.ln() - lo.ln()) * stream.uniform()).exp();
    }
    if params.has(ImageTransform::Rotate) {
        draw.rotation_buckets = params.rotation_quant;
        draw.rotation_bucket = stream.index(params.rotation_quant);
    }
    if params.has(ImageTransform::Flip) {
        draw.flip_horizontal = stream.coin();
        draw.flip_vertical = stream.coin();
    }
    if params.has(ImageTransform::Shift) {
        let candidates = shift_candidates(state, &draw, params.shift_quant, canvas);
        // (0, 0) always fits because scale <= 2 keeps the circumradius within
        // half the shorter side.
        if !candidates.is_empty() {
            draw.shift = candidates[stream.index(candidates.len())];
        }
    }
    draw
}

/// Axis-aligned box in world coordinates, `min` and `max` corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldBox {
    pub min: (f64, f64),
    pub max: (f64, f64),
}

/// Scene for a 2-D continuous environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene<'a> {
    pub agent: &'a [f64],
    pub target: &'a [f64],
    pub target_radius: f64,
    pub terminals: &'a [WorldBox],
    /// World box is `[-state_max, state_max]` on both axes.
    pub state_max: f64,
}

/// Renders the agent, target and terminal regions. World x maps to columns
/// and world y to rows, so `(+max, +max)` is the bottom-right corner.
pub fn render_continuous(scene: &Scene<'_>, canvas: CanvasSpec) -> Result<ImageGrid, RenderError> {
    if scene.agent.len() != 2 {
        return Err(RenderError::DimensionUnsupported(scene.agent.len()));
    }
    if scene.target.len() != 2 {
        return Err(RenderError::DimensionUnsupported(scene.target.len()));
    }
    let span = 2.0 * scene.state_max;
    let sx = canvas.width as f64 / span;
    let sy = canvas.height as f64 / span;
    let to_px = |x: f64, y: f64| ((x + scene.state_max) * sx, (y + scene.state_max) * sy);
    let mut image = ImageGrid::blank(canvas.width, canvas.height);

    for b in scene.terminals {
        let (x0, y0) = to_px(b.min.0, b.min.1);
        let (x1, y1) = to_px(b.max.0, b.max.1);
        for py in 0..canvas.height {
            let yc = py as f64 + 0.5;
            if yc < y0 || yc >= y1 {
                continue;
            }
            for px in 0..canvas.width {
                let xc = px as f64 + 0.5;
                if xc >= x0 && xc < x1 {
                    image.set(px, py, TERMINAL_REGION);
                }
            }
        }
    }

    let target_px_radius = (scene.target_radius * sx.min(sy)).max(1.0);
    let (tx, ty) = to_px(scene.target[0], scene.target[1]);
    fill_disc(&mut image, (tx, ty), target_px_radius, TARGET_DISC);

    let agent_px_radius = (canvas.width.min(canvas.height) as f64 / 40.0).max(1.0);
    let (ax, ay) = to_px(scene.agent[0], scene.agent[1]);
    fill_disc(&mut image, (ax, ay), agent_px_radius, AGENT_DISC);
    Ok(image)
}

fn fill_disc(image: &mut ImageGrid, centre: (f64, f64), radius: f64, value: u8) {
    let r2 = radius * radius;
    for py in 0..image.height {
        let dy = py as f64 + 0.5 - centre.1;
        if dy.abs() > radius {
            continue;
        }
        for px in 0..image.width {
            let dx = px as f64 + 0.5 - centre.0;
            if dx * dx + dy * dy <= r2 {
                image.set(px, py, value);
            }
        }
    }
}
