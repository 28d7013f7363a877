use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use crate::grid_image::GrayImage;
use crate::{Error, Result};

/// Images per call of [`LocalPolySmoother::max_abs_batch`].
pub const BATCH_LANES: usize = 32;

/// A contiguous run of neighbors on one image row.
#[derive(Debug, Clone, Copy)]
struct Span {
    /// Row-major index of the first pixel.
    start: u32,
    len: u32,
    /// Offset of the first weight in the weight array.
    weights: u32,
}

/// Local polynomial regression on the pixel grid as a fixed linear map.
///
/// Each output pixel is the value at that pixel of a weighted least-squares
/// polynomial fit over its `k` nearest pixels, with tricube weights on the
/// distance scaled by the distance to the `k`-th neighbor. Because the fit
/// is linear in the intensities, every output pixel is a fixed weighted
/// sum of input pixels; those weights are computed once per geometry.
#[derive(Debug)]
pub struct LocalPolySmoother {
    width: usize,
    height: usize,
    degree: usize,
    k: usize,
    spans: Vec<Span>,
    /// `spans[span_start[i]..span_start[i + 1]]` belong to pixel `i`.
    span_start: Vec<u32>,
    weights: Vec<f64>,
    tiles: OnceLock<Tiles>,
}

fn n_coefficients(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

fn basis(degree: usize, u: f64, v: f64, out: &mut [f64; 6]) {
    out[0] = 1.0;
    if degree >= 1 {
        out[1] = u;
        out[2] = v;
    }
    if degree >= 2 {
        out[3] = u * u;
        out[4] = u * v;
        out[5] = v * v;
    }
}

/// Solves `a x = e_1` for a symmetric positive definite `a` by Cholesky.
fn first_column_of_inverse(a: &mut [[f64; 6]; 6], p: usize) -> Option<[f64; 6]> {
    let scale = (0..p).map(|i| a[i][i]).fold(0.0, f64::max);
    for j in 0..p {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        if !(d > 1e-12 * scale) {
            return None;
        }
        let d = d.sqrt();
        a[j][j] = d;
        for i in j + 1..p {
            let mut s = a[i][j];
            for k in 0..j {
                s -= a[i][k] * a[j][k];
            }
            a[i][j] = s / d;
        }
    }
    let mut y = [0.0; 6];
    for i in 0..p {
        let mut s = if i == 0 { 1.0 } else { 0.0 };
        for k in 0..i {
            s -= a[i][k] * y[k];
        }
        y[i] = s / a[i][i];
    }
    let mut x = [0.0; 6];
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in i + 1..p {
            s -= a[k][i] * x[k];
        }
        x[i] = s / a[i][i];
    }
    Some(x)
}

impl LocalPolySmoother {
    /// `bandwidth` is the fraction of all pixels used in each local fit.
    pub fn new(width: usize, height: usize, degree: usize, bandwidth: f64) -> Result<Self> {
        if degree > 2 {
            return Err(Error::InvalidArgument(format!("degree must be 0, 1 or 2, got {degree}")));
        }
        if !(bandwidth > 0.0 && bandwidth <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must lie in (0, 1], got {bandwidth}"
            )));
        }
        let n = width * height;
        let k = ((bandwidth * n as f64).ceil() as usize).clamp(1, n);
        let p = n_coefficients(degree);

        // offsets by distance, then row, then column
        let (w, h) = (width as isize, height as isize);
        let mut offsets: Vec<(isize, isize)> = (-(h - 1)..h)
            .flat_map(|dy| (-(w - 1)..w).map(move |dx| (dx, dy)))
            .collect();
        offsets.sort_by_key(|&(dx, dy)| (dx * dx + dy * dy, dy, dx));

        struct Row {
            spans: Vec<(u32, u32)>,
            weights: Vec<f64>,
        }
        let rows: Vec<Result<Row>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (x0, y0) = ((i % width) as isize, (i / width) as isize);
                let mut chosen: Vec<(isize, isize)> = Vec::with_capacity(k);
                for &(dx, dy) in &offsets {
                    let (x, y) = (x0 + dx, y0 + dy);
                    if x >= 0 && y >= 0 && x < w && y < h {
                        chosen.push((dx, dy));
                        if chosen.len() == k {
                            break;
                        }
                    }
                }
                let dmax = chosen
                    .iter()
                    .map(|&(dx, dy)| ((dx * dx + dy * dy) as f64).sqrt())
                    .fold(0.0, f64::max);
                chosen.sort_by_key(|&(dx, dy)| (dy, dx));
                let tricube = |d: f64| {
                    if dmax == 0.0 {
                        1.0
                    } else {
                        let r = (d / dmax).min(1.0);
                        let t = 1.0 - r * r * r;
                        t * t * t
                    }
                };
                let scale = if dmax > 0.0 { dmax } else { 1.0 };
                let mut a = [[0.0; 6]; 6];
                let mut x = [0.0; 6];
                let mut support = 0;
                for &(dx, dy) in &chosen {
                    let wt = tricube(((dx * dx + dy * dy) as f64).sqrt());
                    if wt > 0.0 {
                        support += 1;
                    }
                    basis(degree, dx as f64 / scale, dy as f64 / scale, &mut x);
                    for r in 0..p {
                        for c in 0..=r {
                            a[r][c] += wt * x[r] * x[c];
                        }
                    }
                }
                let rank_error = || Error::RankDeficient {
                    x: x0 as usize,
                    y: y0 as usize,
                    neighbors: support,
                    coefficients: p,
                };
                if support < p {
                    return Err(rank_error());
                }
                let c = first_column_of_inverse(&mut a, p).ok_or_else(rank_error)?;
                let mut spans: Vec<(u32, u32)> = Vec::new();
                let mut weights = Vec::with_capacity(chosen.len());
                for &(dx, dy) in &chosen {
                    let idx = ((y0 + dy) * w + x0 + dx) as u32;
                    match spans.last_mut() {
                        Some((s, len)) if *s + *len == idx && (idx as isize) % w != 0 => *len += 1,
                        _ => spans.push((idx, 1)),
                    }
                    let wt = tricube(((dx * dx + dy * dy) as f64).sqrt());
                    basis(degree, dx as f64 / scale, dy as f64 / scale, &mut x);
                    let dot: f64 = (0..p).map(|r| c[r] * x[r]).sum();
                    weights.push(wt * dot);
                }
                Ok(Row { spans, weights })
            })
            .collect();

        let mut spans = Vec::new();
        let mut span_start = Vec::with_capacity(n + 1);
        let mut weights = Vec::new();
        for row in rows {
            let row = row?;
            span_start.push(spans.len() as u32);
            let mut off = weights.len() as u32;
            for (start, len) in row.spans {
                spans.push(Span { start, len, weights: off });
                off += len;
            }
            weights.extend(row.weights);
        }
        span_start.push(spans.len() as u32);
        Ok(Self {
            width,
            height,
            degree,
            k,
            spans,
            span_start,
            weights,
            tiles: OnceLock::new(),
        })
    }

    /// A shared smoother for this geometry, built on first use.
    pub fn cached(width: usize, height: usize, degree: usize, bandwidth: f64) -> Result<Arc<Self>> {
        type Cache = Mutex<HashMap<(usize, usize, usize, u64), Arc<LocalPolySmoother>>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let key = (width, height, degree, bandwidth.to_bits());
        let cache = CACHE.get_or_init(Default::default);
        if let Some(s) = cache.lock().expect("smoother cache poisoned").get(&key) {
            return Ok(Arc::clone(s));
        }
        // built outside the lock; a concurrent duplicate build is harmless
        let s = Arc::new(Self::new(width, height, degree, bandwidth)?);
        let mut guard = cache.lock().expect("smoother cache poisoned");
        Ok(Arc::clone(guard.entry(key).or_insert(s)))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Neighbors per local fit.
    pub fn k(&self) -> usize {
        self.k
    }

    fn pixel_spans(&self, i: usize) -> &[Span] {
        &self.spans[self.span_start[i] as usize..self.span_start[i + 1] as usize]
    }

    /// Weights of output pixel `i` as `(input index, weight)`.
    pub fn row(&self, i: usize) -> Vec<(usize, f64)> {
        self.pixel_spans(i)
            .iter()
            .flat_map(|s| {
                (0..s.len as usize).map(move |t| {
                    (s.start as usize + t, self.weights[s.weights as usize + t])
                })
            })
            .collect()
    }

    fn check_shape(&self, image: &GrayImage) -> Result<()> {
        if (image.width(), image.height()) != (self.width, self.height) {
            return Err(Error::InvalidArgument(format!(
                "smoother is for {}x{} images, got {}x{}",
                self.width,
                self.height,
                image.width(),
                image.height()
            )));
        }
        Ok(())
    }

    pub fn smooth(&self, image: &GrayImage) -> Result<GrayImage> {
        self.check_shape(image)?;
        let z = image.data();
        let out: Vec<f64> = (0..self.width * self.height)
            .into_par_iter()
            .map(|i| {
                let mut acc = 0.0;
                for s in self.pixel_spans(i) {
                    let ws = &self.weights[s.weights as usize..(s.weights + s.len) as usize];
                    let zs = &z[s.start as usize..(s.start + s.len) as usize];
                    acc += ws.iter().zip(zs).map(|(a, b)| a * b).sum::<f64>();
                }
                acc
            })
            .collect();
        GrayImage::new(self.width, self.height, out)
    }

    fn tiles(&self) -> &Tiles {
        self.tiles.get_or_init(|| Tiles::build(self))
    }

    /// Max-norm of the smoothed version of each of `BATCH_LANES` images
    /// stored pixel-major: `data[i][l]` is pixel `i` of image `l`. Runs in
    /// single precision, which suits differences of images.
    pub fn max_abs_batch(&self, data: &[[f32; BATCH_LANES]]) -> [f64; BATCH_LANES] {
        assert_eq!(data.len(), self.width * self.height, "batch has the wrong size");
        let tiles = self.tiles();
        let best = (0..tiles.first.len())
            .into_par_iter()
            .map(|t| {
                #[cfg(target_arch = "x86_64")]
                {
                    use std::arch::is_x86_feature_detected as has;
                    if has!("avx512f") && has!("fma") {
                        // SAFETY: the CPU supports these features
                        return unsafe { tiles.max_avx512(t, data) };
                    }
                    if has!("avx2") && has!("fma") {
                        // SAFETY: the CPU supports these features
                        return unsafe { tiles.max_avx2(t, data) };
                    }
                }
                tiles.max_portable(t, data)
            })
            .reduce(
                || [0.0f32; BATCH_LANES],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x = x.max(y);
                    }
                    a
                },
            );
        best.map(f64::from)
    }
}

/// Output pixels per tile in the batched kernel.
const TILE: usize = 8;

/// The operator regrouped into tiles of up to `TILE` consecutive pixels of
/// one image row. Within a tile the neighbor spans of all pixels are merged
/// per image row, so each input pixel is loaded once per tile; pixels
/// outside a member's own span get weight zero.
#[derive(Debug)]
struct Tiles {
    /// First output pixel and member count of each tile.
    first: Vec<(u32, u32)>,
    span_start: Vec<u32>,
    spans: Vec<Span>,
    /// `TILE` weights per input pixel of each span.
    weights: Vec<[f32; TILE]>,
}

impl Tiles {
    fn build(op: &LocalPolySmoother) -> Self {
        let w = op.width;
        let mut out = Tiles {
            first: Vec::new(),
            span_start: Vec::new(),
            spans: Vec::new(),
            weights: Vec::new(),
        };
        for y in 0..op.height {
            for x0 in (0..w).step_by(TILE) {
                let count = TILE.min(w - x0);
                let first = y * w + x0;
                out.first.push((first as u32, count as u32));
                out.span_start.push(out.spans.len() as u32);
                // merged extent per input row
                let mut rows: std::collections::BTreeMap<u32, (u32, u32)> = Default::default();
                for i in first..first + count {
                    for s in op.pixel_spans(i) {
                        let e = rows.entry(s.start / w as u32).or_insert((s.start, s.start + s.len));
                        e.0 = e.0.min(s.start);
                        e.1 = e.1.max(s.start + s.len);
                    }
                }
                for (lo, hi) in rows.into_values() {
                    let off = out.weights.len() as u32;
                    out.weights.resize(out.weights.len() + (hi - lo) as usize, [0.0; TILE]);
                    out.spans.push(Span {
                        start: lo,
                        len: hi - lo,
                        weights: off,
                    });
                }
                let tile_spans = &out.spans[*out.span_start.last().unwrap() as usize..];
                for (t, i) in (first..first + count).enumerate() {
                    for s in op.pixel_spans(i) {
                        let ts = tile_spans
                            .iter()
                            .find(|ts| ts.start <= s.start && s.start < ts.start + ts.len)
                            .expect("merged span");
                        for k in 0..s.len {
                            let j = (ts.weights + s.start - ts.start + k) as usize;
                            out.weights[j][t] = op.weights[(s.weights + k) as usize] as f32;
                        }
                    }
                }
            }
        }
        out.span_start.push(out.spans.len() as u32);
        out
    }

    fn tile_spans(&self, t: usize) -> &[Span] {
        &self.spans[self.span_start[t] as usize..self.span_start[t + 1] as usize]
    }

    fn fold(&self, t: usize, out: &[[f32; BATCH_LANES]; TILE]) -> [f32; BATCH_LANES] {
        let mut best = [0.0f32; BATCH_LANES];
        for row in &out[..self.first[t].1 as usize] {
            for (b, v) in best.iter_mut().zip(row) {
                *b = b.max(v.abs());
            }
        }
        best
    }

    fn max_portable(&self, t: usize, data: &[[f32; BATCH_LANES]]) -> [f32; BATCH_LANES] {
        let mut acc = [[0.0f32; BATCH_LANES]; TILE];
        for s in self.tile_spans(t) {
            let ws = &self.weights[s.weights as usize..(s.weights + s.len) as usize];
            let zs = &data[s.start as usize..(s.start + s.len) as usize];
            for (wt, row) in ws.iter().zip(zs) {
                for (a, &w) in acc.iter_mut().zip(wt) {
                    for (x, &v) in a.iter_mut().zip(row) {
                        *x = v.mul_add(w, *x);
                    }
                }
            }
        }
        self.fold(t, &acc)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx512f,fma")]
    unsafe fn max_avx512(&self, t: usize, data: &[[f32; BATCH_LANES]]) -> [f32; BATCH_LANES] {
        use std::arch::x86_64::*;
        const G: usize = BATCH_LANES / 16;
        let mut acc = [[_mm512_setzero_ps(); G]; TILE];
        for s in self.tile_spans(t) {
            let ws = &self.weights[s.weights as usize..(s.weights + s.len) as usize];
            let zs = &data[s.start as usize..(s.start + s.len) as usize];
            for (wt, row) in ws.iter().zip(zs) {
                let mut v = [_mm512_setzero_ps(); G];
                for (g, v) in v.iter_mut().enumerate() {
                    *v = _mm512_loadu_ps(row.as_ptr().add(16 * g));
                }
                for (a, &w) in acc.iter_mut().zip(wt) {
                    let wv = _mm512_set1_ps(w);
                    for (x, &v) in a.iter_mut().zip(&v) {
                        *x = _mm512_fmadd_ps(v, wv, *x);
                    }
                }
            }
        }
        let mut out = [[0.0f32; BATCH_LANES]; TILE];
        for (o, a) in out.iter_mut().zip(&acc) {
            for (g, x) in a.iter().enumerate() {
                _mm512_storeu_ps(o.as_mut_ptr().add(16 * g), *x);
            }
        }
        self.fold(t, &out)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2,fma")]
    unsafe fn max_avx2(&self, t: usize, data: &[[f32; BATCH_LANES]]) -> [f32; BATCH_LANES] {
        use std::arch::x86_64::*;
        let mut out = [[0.0f32; BATCH_LANES]; TILE];
        // one group of eight lanes at a time keeps the accumulators in registers
        for g in 0..BATCH_LANES / 8 {
            let mut acc = [_mm256_setzero_ps(); TILE];
            for s in self.tile_spans(t) {
                let ws = &self.weights[s.weights as usize..(s.weights + s.len) as usize];
                let zs = &data[s.start as usize..(s.start + s.len) as usize];
                for (wt, row) in ws.iter().zip(zs) {
                    let v = _mm256_loadu_ps(row.as_ptr().add(8 * g));
                    for (x, &w) in acc.iter_mut().zip(wt) {
                        *x = _mm256_fmadd_ps(v, _mm256_set1_ps(w), *x);
                    }
                }
            }
            for (o, x) in out.iter_mut().zip(&acc) {
                _mm256_storeu_ps(o.as_mut_ptr().add(8 * g), *x);
            }
        }
        self.fold(t, &out)
    }
}

/// Smooths `image` with a local polynomial fit of the given degree over
/// the nearest `bandwidth` fraction of pixels.
pub fn local_poly_smooth(image: &GrayImage, degree: usize, bandwidth: f64) -> Result<GrayImage> {
    LocalPolySmoother::cached(image.width(), image.height(), degree, bandwidth)?.smooth(image)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_are_reproduced() {
        for degree in 0..=2 {
            let img = GrayImage::filled(12, 9, 42.5).unwrap();
            let s = local_poly_smooth(&img, degree, 0.3).unwrap();
            assert!(s.data().iter().all(|v| (v - 42.5).abs() < 1e-9), "degree {degree}");
        }
    }

    #[test]
    fn quadratics_are_reproduced_by_degree_two() {
        let f = |x: usize, y: usize| {
            let (x, y) = (x as f64, y as f64);
            3.0 + 0.5 * x - 2.0 * y + 0.25 * x * x - 0.1 * x * y + 0.3 * y * y
        };
        let img = GrayImage::from_fn(15, 11, f).unwrap();
        let s = local_poly_smooth(&img, 2, 0.2).unwrap();
        for (a, b) in s.data().iter().zip(img.data()) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "{a} vs {b}");
        }
        // a plane is reproduced by degree one
        let plane = GrayImage::from_fn(15, 11, |x, y| 1.0 + 2.0 * x as f64 - y as f64).unwrap();
        let s = local_poly_smooth(&plane, 1, 0.1).unwrap();
        for (a, b) in s.data().iter().zip(plane.data()) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
        }
    }

    #[test]
    fn spans_cover_exactly_k_neighbors() {
        let s = LocalPolySmoother::new(10, 7, 2, 0.37).unwrap();
        for i in 0..70 {
            let row = s.row(i);
            assert_eq!(row.len(), s.k());
            let mut idx: Vec<usize> = row.iter().map(|r| r.0).collect();
            idx.dedup();
            assert_eq!(idx.len(), s.k());
        }
    }

    #[test]
    fn too_few_neighbors_is_rank_deficient() {
        let img = GrayImage::filled(10, 10, 1.0).unwrap();
        assert!(matches!(
            local_poly_smooth(&img, 2, 0.03),
            Err(Error::RankDeficient { coefficients: 6, .. })
        ));
        assert!(local_poly_smooth(&img, 3, 0.3).is_err());
        assert!(local_poly_smooth(&img, 2, 0.0).is_err());
        assert!(local_poly_smooth(&img, 2, 1.5).is_err());
    }

    #[test]
    fn batch_norms_match_single_smooths() {
        let s = LocalPolySmoother::new(9, 8, 2, 0.4).unwrap();
        let imgs: Vec<GrayImage> = (0..BATCH_LANES)
            .map(|l| GrayImage::from_fn(9, 8, |x, y| ((x * 7 + y * 3 + l * 5) % 11) as f64 - 5.0).unwrap())
            .collect();
        let mut data = vec![[0.0f32; BATCH_LANES]; 72];
        for (l, img) in imgs.iter().enumerate() {
            for i in 0..72 {
                data[i][l] = img.data()[i] as f32;
            }
        }
        let norms = s.max_abs_batch(&data);
        for (l, img) in imgs.iter().enumerate() {
            let exact = s.smooth(img).unwrap().data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!((norms[l] - exact).abs() < 1e-4 * exact.max(1.0));
        }
    }
}
