use crate::error::parse_err;
use crate::grid_image::{decode_png, encode_png, neighbors8, GrayImage, PartitionLabeling, Pixel, Role};
use crate::util::quantile_sorted;
use crate::{Error, Result};

/// Pixels that separate regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSet {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl EdgeSet {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            mask: vec![false; width * height],
        }
    }

    pub fn from_mask(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "edge mask has {} entries, expected {}",
                mask.len(),
                width * height
            )));
        }
        Ok(Self { width, height, mask })
    }

    pub fn from_pixels(width: usize, height: usize, pixels: &[Pixel]) -> Result<Self> {
        let mut e = Self::empty(width, height);
        for &p in pixels {
            if p.x >= width || p.y >= height {
                return Err(Error::InvalidArgument(format!("edge pixel {p} outside the grid")));
            }
            e.insert(p);
        }
        Ok(e)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains(&self, p: Pixel) -> bool {
        self.mask[p.y * self.width + p.x]
    }

    #[inline]
    pub fn contains_index(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn insert(&mut self, p: Pixel) {
        self.mask[p.y * self.width + p.x] = true;
    }

    pub fn insert_index(&mut self, i: usize) {
        self.mask[i] = true;
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&e| e).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&e| e)
    }

    /// Edge pixels in row-major order.
    pub fn pixels(&self) -> Vec<Pixel> {
        (0..self.mask.len())
            .filter(|&i| self.mask[i])
            .map(|i| Pixel::new(i % self.width, i / self.width))
            .collect()
    }

    pub fn is_subset_of(&self, other: &EdgeSet) -> bool {
        self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }
}

/// Pixels outside every loop that touch a loop pixel (8-neighborhood):
/// the two contours an ideal detector draws around each loop.
pub fn loop_contour(labeling: &PartitionLabeling) -> EdgeSet {
    let (w, h) = (labeling.width(), labeling.height());
    let is_loop = |i: usize| matches!(labeling.role_at(i), Some(Role::Loop(_)));
    let mask = (0..w * h)
        .map(|i| !is_loop(i) && neighbors8(w, h, i).any(is_loop))
        .collect();
    EdgeSet { width: w, height: h, mask }
}

/// How the gradient-magnitude cutoff is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientThreshold {
    /// Otsu's method on a 256-bin histogram of gradient magnitudes, raised
    /// to the noise floor when that is higher.
    Otsu,
    Fixed(f64),
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(image: &GrayImage, sigma: f64) -> Result<GrayImage> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "gaussian sigma must be positive, got {sigma}"
        )));
    }
    let (w, h) = (image.width(), image.height());
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let z = image.data();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(j, kv)| kv * z[y * w + clamp(x as isize + j as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(j, kv)| kv * tmp[clamp(y as isize + j as isize - r, h) * w + x])
                .sum();
        }
    }
    GrayImage::new(w, h, out)
}

fn otsu(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return 0.0;
    }
    const BINS: usize = 256;
    let mut hist = [0u64; BINS];
    for &v in values {
        let b = ((v / max) * BINS as f64) as usize;
        hist[b.min(BINS - 1)] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_bin) = (-1.0, 0);
    for (i, &c) in hist.iter().enumerate() {
        w0 += c as f64;
        sum0 += i as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best {
            best = between;
            best_bin = i;
        }
    }
    (best_bin + 1) as f64 * max / BINS as f64
}

/// Fraction of pure-noise pixels expected above the noise floor.
const NOISE_FLOOR_TAIL: f64 = 1e-3;

/// Robust noise level from horizontal first differences (MAD).
fn noise_sd(image: &GrayImage) -> f64 {
    let mut d: Vec<f64> = image
        .data()
        .chunks(image.width())
        .flat_map(|row| row.windows(2).map(|p| p[1] - p[0]))
        .collect();
    if d.is_empty() {
        return 0.0;
    }
    let med = quantile_sorted(sort(&mut d), 0.5);
    let mut dev: Vec<f64> = d.iter().map(|v| (v - med).abs()).collect();
    1.4826 * quantile_sorted(sort(&mut dev), 0.5) / std::f64::consts::SQRT_2
}

fn sort(v: &mut [f64]) -> &[f64] {
    v.sort_by(f64::total_cmp);
    v
}

/// Gradient magnitude that white noise of the given sd exceeds at a pixel
/// with probability `NOISE_FLOOR_TAIL`.
///
/// Each gradient component is the image filtered by (central difference of
/// the kernel) x (kernel), so its sd is `sd` times that filter's l2 norm.
/// The two components are uncorrelated, so the magnitude is Rayleigh.
fn noise_floor(sd: f64, gaussian_sigma: f64) -> f64 {
    let k = gaussian_kernel(gaussian_sigma);
    let n = k.len() as isize;
    let at = |i: isize| if (0..n).contains(&i) { k[i as usize] } else { 0.0 };
    let deriv: f64 = (-1..=n)
        .map(|i| ((at(i + 1) - at(i - 1)) / 2.0).powi(2))
        .sum();
    let smooth: f64 = k.iter().map(|v| v * v).sum();
    sd * (deriv * smooth).sqrt() * (-2.0 * NOISE_FLOOR_TAIL.ln()).sqrt()
}

/// Ridge pixels of the gradient magnitude of the smoothed image whose
/// magnitude exceeds the threshold.
pub fn detect_edges(
    image: &GrayImage,
    gaussian_sigma: f64,
    threshold: GradientThreshold,
) -> Result<EdgeSet> {
    let (w, h) = (image.width(), image.height());
    let s = gaussian_blur(image, gaussian_sigma)?;
    let at = |x: usize, y: usize| s.get(x, y);
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let mut mag = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            gx[i] = (at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y)) / 2.0;
            gy[i] = (at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1))) / 2.0;
            mag[i] = gx[i].hypot(gy[i]);
        }
    }
    let cut = match threshold {
        GradientThreshold::Otsu => otsu(&mag).max(noise_floor(noise_sd(image), gaussian_sigma)),
        GradientThreshold::Fixed(t) if t >= 0.0 => t,
        GradientThreshold::Fixed(t) => {
            return Err(Error::InvalidArgument(format!(
                "gradient threshold must be non-negative, got {t}"
            )))
        }
    };
    let m = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    let mut edges = EdgeSet::empty(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if mag[i] <= cut || mag[i] == 0.0 {
                continue;
            }
            // gradient direction folded into [0, pi), four sectors
            let mut angle = gy[i].atan2(gx[i]);
            if angle < 0.0 {
                angle += std::f64::consts::PI;
            }
            let sector = ((angle / std::f64::consts::FRAC_PI_4) + 0.5) as usize % 4;
            let (dx, dy) = [(1, 0), (1, 1), (0, 1), (-1, 1)][sector];
            let (xi, yi) = (x as isize, y as isize);
            let ahead = m(xi + dx, yi + dy);
            let behind = m(xi - dx, yi - dy);
            // plateaus keep only their trailing pixel
            if mag[i] >= behind && mag[i] > ahead {
                edges.insert_index(i);
            }
        }
    }
    Ok(edges)
}

/// Edge mask as CSV of 0/1, one image row per line.
pub fn write_edge_csv(edges: &EdgeSet) -> String {
    let mut out = String::with_capacity(edges.mask.len() * 2);
    for row in edges.mask.chunks(edges.width) {
        let cells: Vec<&str> = row.iter().map(|&e| if e { "1" } else { "0" }).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_edge_csv(text: &str) -> Result<EdgeSet> {
    let mut mask = Vec::new();
    let mut width = None;
    let mut height = 0;
    let lines: Vec<&str> = text.trim_end().lines().collect();
    for (r, line) in lines.iter().enumerate() {
        let mut n = 0;
        for (c, cell) in line.split(',').enumerate() {
            mask.push(match cell.trim() {
                "0" => false,
                "1" => true,
                other => return Err(parse_err(r + 1, c + 1, format!("expected 0 or 1, found {other:?}"))),
            });
            n += 1;
        }
        match width {
            None => width = Some(n),
            Some(w) if w != n => {
                return Err(parse_err(r + 1, n.min(w) + 1, format!("row has {n} cells, expected {w}")))
            }
            _ => {}
        }
        height += 1;
    }
    let width = width.ok_or_else(|| parse_err(1, 1, "empty edge mask"))?;
    EdgeSet::from_mask(width, height, mask)
}

/// 16-bit mask PNG: edge pixels 65535, others 0.
pub fn encode_edge_png(edges: &EdgeSet) -> Result<Vec<u8>> {
    let data = edges.mask.iter().map(|&e| if e { 65535.0 } else { 0.0 }).collect();
    encode_png(&GrayImage::new(edges.width, edges.height, data)?)
}

/// Any non-zero sample is an edge pixel.
pub fn decode_edge_png(bytes: &[u8]) -> Result<EdgeSet> {
    let img = decode_png(bytes)?;
    let mask = img.data().iter().map(|&v| v != 0.0).collect();
    EdgeSet::from_mask(img.width(), img.height(), mask)
}
