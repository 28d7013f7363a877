//! Grayscale images on a pixel grid, ground-truth partitions, and the
//! synthetic ring generator.
//!
//! A [`GrayImage`] stores one finite intensity per pixel in row-major
//! order. A [`PartitionLabeling`] assigns every pixel to a region and every
//! region to a [`Role`]: background, the `i`-th loop, or the interior of the
//! `i`-th loop. Pixels that a segmentation marks as edges keep a region
//! label (for localization) but are flagged so that they never enter
//! partition statistics.

mod io;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    decode_png, encode_png, load_image, load_labeling, parse_image_csv, parse_labeling,
    save_image, save_labeling, write_image_csv, write_labeling_csv, LabelingSidecar,
};

/// Label value for pixels that belong to no region (held-out edge pixels).
pub const UNASSIGNED: u32 = u32::MAX;

/// A pixel coordinate: `x` is the column, `y` the row.
///
/// Ordering is lexicographic on `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Pixel {
    pub x: usize,
    pub y: usize,
}

impl Pixel {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

impl From<[usize; 2]> for Pixel {
    fn from([x, y]: [usize; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Pixel> for [usize; 2] {
    fn from(p: Pixel) -> Self {
        [p.x, p.y]
    }
}

impl fmt::Display for Pixel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// A rectangular grid of finite intensities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::InvalidImage(format!(
                "image must be at least 2x2, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "expected {} intensities for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!(
                "non-finite intensity at ({}, {})",
                i % width,
                i / width
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Constant image.
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn pixel(&self, index: usize) -> Pixel {
        Pixel::new(index % self.width, index / self.width)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn at(&self, p: Pixel) -> f64 {
        self.get(p.x, p.y)
    }

    /// Pixel-wise negation, used for lower/upper level set duality.
    pub fn negated(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| -v).collect(),
        }
    }

    /// Maximum absolute pixel difference. Panics on shape mismatch.
    pub fn linf_distance(&self, other: &GrayImage) -> f64 {
        assert_eq!(
            (self.width, self.height),
            (other.width, other.height),
            "image shapes differ"
        );
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// The part a region plays in the loop model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Background,
    /// The `i`-th loop (1-based).
    Loop(u32),
    /// The region enclosed by the `i`-th loop.
    Interior(u32),
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Background => f.write_str("background"),
            Role::Loop(i) => write!(f, "loop:{i}"),
            Role::Interior(i) => write!(f, "interior:{i}"),
        }
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "background" {
            return Ok(Role::Background);
        }
        let bad = || Error::InvalidArgument(format!("unknown role {s:?}"));
        let (kind, idx) = s.split_once(':').ok_or_else(bad)?;
        let i: u32 = idx.parse().map_err(|_| bad())?;
        if i == 0 {
            return Err(bad());
        }
        match kind {
            "loop" => Ok(Role::Loop(i)),
            "interior" => Ok(Role::Interior(i)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for Role {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Role {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-pixel region labels plus the role of each region.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionLabeling {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    edge: Vec<bool>,
    roles: BTreeMap<u32, Role>,
}

impl PartitionLabeling {
    /// Builds a labeling. Every assigned label must have a role.
    pub fn new(
        width: usize,
        height: usize,
        labels: Vec<u32>,
        edge: Vec<bool>,
        roles: BTreeMap<u32, Role>,
    ) -> Result<Self> {
        if labels.len() != width * height || edge.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "labeling arrays do not match {width}x{height}"
            )));
        }
        if let Some(l) = labels
            .iter()
            .find(|&&l| l != UNASSIGNED && !roles.contains_key(&l))
        {
            return Err(Error::InvalidArgument(format!("label {l} has no role")));
        }
        if let Some(i) = (0..labels.len()).find(|&i| labels[i] == UNASSIGNED && !edge[i]) {
            return Err(Error::InvalidArgument(format!(
                "pixel ({}, {}) is unassigned but not an edge pixel",
                i % width,
                i / width
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
            edge,
            roles,
        })
    }

    /// A labeling without edge pixels.
    pub fn without_edges(
        width: usize,
        height: usize,
        labels: Vec<u32>,
        roles: BTreeMap<u32, Role>,
    ) -> Result<Self> {
        let edge = vec![false; labels.len()];
        Self::new(width, height, labels, edge, roles)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn edge_mask(&self) -> &[bool] {
        &self.edge
    }

    pub fn roles(&self) -> &BTreeMap<u32, Role> {
        &self.roles
    }

    #[inline]
    pub fn label(&self, index: usize) -> u32 {
        self.labels[index]
    }

    #[inline]
    pub fn is_edge(&self, index: usize) -> bool {
        self.edge[index]
    }

    /// Role of the region a pixel is assigned to, if any.
    #[inline]
    pub fn role_at(&self, index: usize) -> Option<Role> {
        self.roles.get(&self.labels[index]).copied()
    }

    /// Number of loops `n_1`.
    pub fn loop_count(&self) -> usize {
        self.loop_indices().len()
    }

    /// Sorted, de-duplicated loop indices present in the role map.
    pub fn loop_indices(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self
            .roles
            .values()
            .filter_map(|r| match r {
                Role::Loop(i) => Some(*i),
                _ => None,
            })
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn has_role(&self, role: Role) -> bool {
        self.roles.values().any(|r| *r == role)
    }

    /// Indices of non-edge pixels whose region has `role`.
    pub fn pixels_with_role(&self, role: Role) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| !self.edge[i] && self.role_at(i) == Some(role))
            .collect()
    }

    /// Same labeling with a different edge mask. Pixels newly marked as
    /// edges keep their region label.
    pub fn with_edge_mask(&self, edge: Vec<bool>) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.labels.clone(),
            edge,
            self.roles.clone(),
        )
    }

    /// Same labeling with a different role map.
    pub fn with_roles(&self, roles: BTreeMap<u32, Role>) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.labels.clone(),
            self.edge.clone(),
            roles,
        )
    }

    /// Checks the structural invariants: each label's non-edge pixels are
    /// 4-connected, every interior is enclosed by its loop, and some
    /// background region touches the border.
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.width, self.height);
        let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for i in 0..self.labels.len() {
            if !self.edge[i] && self.labels[i] != UNASSIGNED {
                groups.entry(self.labels[i]).or_default().push(i);
            }
        }
        let mut background_on_border = None;
        for (&label, pixels) in &groups {
            let reached = flood(w, h, pixels[0], |j| {
                !self.edge[j] && self.labels[j] == label
            });
            if reached.len() != pixels.len() {
                return Err(Error::InvalidArgument(format!(
                    "label {label} is not 4-connected"
                )));
            }
            match self.roles[&label] {
                Role::Background => {
                    let touches = pixels.iter().any(|&j| on_border(w, h, j));
                    background_on_border = Some(background_on_border.unwrap_or(false) || touches);
                }
                Role::Interior(i) => {
                    let escape = flood(w, h, pixels[0], |j| self.role_at(j) != Some(Role::Loop(i)));
                    if escape.iter().any(|&j| on_border(w, h, j)) {
                        return Err(Error::InvalidArgument(format!(
                            "interior {i} is not enclosed by loop {i}"
                        )));
                    }
                }
                Role::Loop(_) => {}
            }
        }
        if background_on_border == Some(false) {
            return Err(Error::InvalidArgument(
                "no background region touches the border".into(),
            ));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn on_border(w: usize, h: usize, i: usize) -> bool {
    let (x, y) = (i % w, i / w);
    x == 0 || y == 0 || x + 1 == w || y + 1 == h
}

/// 4-neighbors of pixel `i` on a `w x h` grid.
#[inline]
pub(crate) fn neighbors4(w: usize, h: usize, i: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (i % w, i / w);
    let left = (x > 0).then(|| i - 1);
    let right = (x + 1 < w).then(|| i + 1);
    let up = (y > 0).then(|| i - w);
    let down = (y + 1 < h).then(|| i + w);
    [left, right, up, down].into_iter().flatten()
}

/// 8-neighbors of pixel `i` on a `w x h` grid.
pub(crate) fn neighbors8(w: usize, h: usize, i: usize) -> impl Iterator<Item = usize> {
    let (x, y) = ((i % w) as isize, (i / w) as isize);
    (-1isize..=1)
        .flat_map(move |dy| (-1isize..=1).map(move |dx| (dx, dy)))
        .filter(|&d| d != (0, 0))
        .filter_map(move |(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            (nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize)
                .then(|| ny as usize * w + nx as usize)
        })
}

/// 4-connected flood fill from `start` over pixels satisfying `passable`.
pub(crate) fn flood(
    w: usize,
    h: usize,
    start: usize,
    passable: impl Fn(usize) -> bool,
) -> Vec<usize> {
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    if !passable(start) {
        return out;
    }
    seen[start] = true;
    queue.push_back(start);
    while let Some(i) = queue.pop_front() {
        out.push(i);
        for j in neighbors4(w, h, i) {
            if !seen[j] && passable(j) {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFamily {
    #[default]
    Gaussian,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RingShape {
    #[default]
    Rectangle,
    Disk,
}

/// One ring of the synthetic pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    pub center: Pixel,
    /// Half side length (rectangle) or radius (disk) of the outer boundary.
    pub outer_half_extent: usize,
    pub thickness: usize,
    pub mu_loop: f64,
    pub mu_interior: f64,
}

/// Piecewise-constant ring pattern plus homoscedastic noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub rings: Vec<Ring>,
    pub mu_background: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub noise_family: NoiseFamily,
    #[serde(default)]
    pub shape: RingShape,
}

impl RingSpec {
    /// A single rectangle ring centered in a `dim x dim` image.
    pub fn centered(
        dim: usize,
        outer_half_extent: usize,
        thickness: usize,
        mu_background: f64,
        mu_interior: f64,
        mu_loop: f64,
        sigma: f64,
    ) -> Self {
        Self {
            width: dim,
            height: dim,
            rings: vec![Ring {
                center: Pixel::new(dim / 2, dim / 2),
                outer_half_extent,
                thickness,
                mu_loop,
                mu_interior,
            }],
            mu_background,
            sigma,
            noise_family: NoiseFamily::Gaussian,
            shape: RingShape::Rectangle,
        }
    }

    pub fn with_sigma(&self, sigma: f64) -> Self {
        Self {
            sigma,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.width < 2 || self.height < 2 {
            return bad(format!("image must be at least 2x2, got {}x{}", self.width, self.height));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return bad(format!("sigma must be finite and non-negative, got {}", self.sigma));
        }
        if !self.mu_background.is_finite() {
            return bad("mu_background must be finite".into());
        }
        let mut boxes = Vec::with_capacity(self.rings.len());
        for (k, r) in self.rings.iter().enumerate() {
            let n = k + 1;
            if !(r.mu_loop.is_finite() && r.mu_interior.is_finite()) {
                return bad(format!("ring {n}: means must be finite"));
            }
            if r.thickness == 0 || r.thickness >= r.outer_half_extent {
                return bad(format!(
                    "ring {n}: need 0 < thickness < outer_half_extent, got thickness {} and extent {}",
                    r.thickness, r.outer_half_extent
                ));
            }
            if self.shape == RingShape::Disk && r.thickness < 2 {
                return bad(format!("ring {n}: disk rings need thickness >= 2"));
            }
            let h = r.outer_half_extent;
            let (cx, cy) = (r.center.x, r.center.y);
            if cx < h + 1 || cy < h + 1 || cx + h + 1 >= self.width || cy + h + 1 >= self.height {
                return bad(format!("ring {n} touches or crosses the image border"));
            }
            boxes.push((cx - h, cx + h, cy - h, cy + h));
        }
        for a in 0..boxes.len() {
            for b in a + 1..boxes.len() {
                let (ax0, ax1, ay0, ay1) = boxes[a];
                let (bx0, bx1, by0, by1) = boxes[b];
                let apart_x = ax1 + 1 < bx0 || bx1 + 1 < ax0;
                let apart_y = ay1 + 1 < by0 || by1 + 1 < ay0;
                if !(apart_x || apart_y) {
                    return bad(format!("rings {} and {} overlap or touch", a + 1, b + 1));
                }
            }
        }
        Ok(())
    }

    /// Region label of the noise-free partition at `(x, y)`: 0 for the
    /// background, `2i - 1` for loop `i` and `2i` for its interior.
    fn partition_at(&self, x: usize, y: usize) -> u32 {
        for (k, r) in self.rings.iter().enumerate() {
            let dx = x.abs_diff(r.center.x);
            let dy = y.abs_diff(r.center.y);
            let inner = r.outer_half_extent - r.thickness;
            let (in_outer, in_inner) = match self.shape {
                RingShape::Rectangle => {
                    let c = dx.max(dy);
                    (c <= r.outer_half_extent, c <= inner)
                }
                RingShape::Disk => {
                    let d2 = dx * dx + dy * dy;
                    (
                        d2 <= r.outer_half_extent * r.outer_half_extent,
                        d2 <= inner * inner,
                    )
                }
            };
            let i = k as u32 + 1;
            if in_inner {
                return 2 * i;
            }
            if in_outer {
                return 2 * i - 1;
            }
        }
        0
    }

    fn partition_mean(&self, label: u32) -> f64 {
        if label == 0 {
            return self.mu_background;
        }
        let r = &self.rings[((label - 1) / 2) as usize];
        if label % 2 == 1 {
            r.mu_loop
        } else {
            r.mu_interior
        }
    }

    /// Ground-truth labeling of the noise-free partition.
    pub fn truth_labeling(&self) -> Result<PartitionLabeling> {
        self.validate()?;
        let mut labels = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                labels.push(self.partition_at(x, y));
            }
        }
        let mut roles = BTreeMap::new();
        roles.insert(0, Role::Background);
        for k in 0..self.rings.len() as u32 {
            roles.insert(2 * k + 1, Role::Loop(k + 1));
            roles.insert(2 * k + 2, Role::Interior(k + 1));
        }
        PartitionLabeling::without_edges(self.width, self.height, labels, roles)
    }

    /// The noise-free pattern `f(x, y)`.
    pub fn pattern(&self) -> Result<GrayImage> {
        let labeling = self.truth_labeling()?;
        let data = labeling
            .labels()
            .iter()
            .map(|&l| self.partition_mean(l))
            .collect();
        GrayImage::new(self.width, self.height, data)
    }
}

/// Draws an image from the spec: every pixel is its partition mean plus
/// independent `N(0, sigma^2)` noise. Deterministic in `(spec, seed)`.
pub fn generate(spec: &RingSpec, seed: u64) -> Result<(GrayImage, PartitionLabeling)> {
    let labeling = spec.truth_labeling()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = labeling
        .labels()
        .iter()
        .map(|&l| {
            let mean = spec.partition_mean(l);
            match spec.noise_family {
                NoiseFamily::Gaussian => {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mean + spec.sigma * z
                }
            }
        })
        .collect();
    let image = GrayImage::new(spec.width, spec.height, data)?;
    Ok((image, labeling))
}
