//! Perspective calibration from checkerboard correspondences.
//!
//! A raw frame is mapped to the fronto-parallel plane by
//!
//! ```text
//! [x' y' 1]^T = (1 / lambda) [[a b c] [d e f] [g h 1]] [x y 1]^T,   lambda = g x + h y + 1
//! ```
//!
//! The eight parameters are estimated by linear least squares on the
//! linearized system, with Hartley normalization of both point sets.
//! Corner detection is not done here: correspondences come from the
//! simulator's ground truth or from a JSON file.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{ColorSpace, Image, ImageError};

pub const TRANSFORM_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("need at least 4 correspondences, got {0}")]
    TooFewPairs(usize),
    #[error("degenerate correspondences (rank {rank} < 8): {detail}")]
    Degenerate { rank: usize, detail: String },
    #[error("transform is not invertible (normalized determinant {det:e})")]
    NotInvertible { det: f64 },
    #[error("correspondences do not form a regular grid: {0}")]
    NotAGrid(String),
    #[error("square size must be positive, got {0} mm")]
    BadPitch(f64),
    #[error("non-finite coordinate in correspondence {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Parameters `(a, b, c, d, e, f, g, h)` of the mapping above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerspectiveTransform {
    pub params: [f64; 8],
}

impl PerspectiveTransform {
    pub const IDENTITY: Self = Self {
        params: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
    };

    /// Checks invertibility and wraps the parameters.
    pub fn new(params: [f64; 8]) -> Result<Self, CalibrationError> {
        let t = Self { params };
        t.check_invertible()?;
        Ok(t)
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self {
            params: [1.0, 0.0, dx, 0.0, 1.0, dy, 0.0, 0.0],
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        let p = &self.params;
        Matrix3::new(p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], 1.0)
    }

    /// Scales `m` so its bottom-right entry is 1.
    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self, CalibrationError> {
        let s = m[(2, 2)];
        if !s.is_finite() || s.abs() < 1e-300 {
            return Err(CalibrationError::NotInvertible { det: 0.0 });
        }
        let n = m / s;
        Self::new([
            n[(0, 0)],
            n[(0, 1)],
            n[(0, 2)],
            n[(1, 0)],
            n[(1, 1)],
            n[(1, 2)],
            n[(2, 0)],
            n[(2, 1)],
        ])
    }

    /// Determinant after scaling each row to unit length.
    pub fn normalized_determinant(&self) -> f64 {
        let mut m = self.matrix();
        for r in 0..3 {
            let norm = m.row(r).norm();
            if norm > 0.0 {
                m.row_mut(r).unscale_mut(norm);
            }
        }
        m.determinant()
    }

    fn check_invertible(&self) -> Result<(), CalibrationError> {
        let det = self.normalized_determinant();
        if !det.is_finite() || det.abs() <= 1e-12 {
            return Err(CalibrationError::NotInvertible { det });
        }
        Ok(())
    }

    pub fn inverse(&self) -> Result<Self, CalibrationError> {
        self.check_invertible()?;
        let inv = self
            .matrix()
            .try_inverse()
            .ok_or(CalibrationError::NotInvertible { det: 0.0 })?;
        Self::from_matrix(&inv)
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Self) -> Result<Self, CalibrationError> {
        Self::from_matrix(&(self.matrix() * first.matrix()))
    }

    /// The scale `lambda = g x + h y + 1` at a source point.
    pub fn scale_at(&self, x: f64, y: f64) -> f64 {
        self.params[6] * x + self.params[7] * y + 1.0
    }

    /// Maps a source point; `None` on the line where `lambda = 0`.
    pub fn map(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let p = &self.params;
        let lambda = self.scale_at(x, y);
        if lambda.abs() < 1e-300 {
            return None;
        }
        Some((
            (p[0] * x + p[1] * y + p[2]) / lambda,
            (p[3] * x + p[4] * y + p[5]) / lambda,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointPair {
    pub src: [f64; 2],
    pub dst: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Correspondences {
    pub pairs: Vec<PointPair>,
}

fn collinear(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
    let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let scale = ((b[0] - a[0]).hypot(b[1] - a[1]) * (c[0] - a[0]).hypot(c[1] - a[1])).max(1e-300);
    cross.abs() / scale < 1e-9
}

impl Correspondences {
    pub fn new(pairs: Vec<PointPair>) -> Result<Self, CalibrationError> {
        let c = Self { pairs };
        c.validate()?;
        Ok(c)
    }

    pub fn from_points(src: &[(f64, f64)], dst: &[(f64, f64)]) -> Result<Self, CalibrationError> {
        Self::new(
            src.iter()
                .zip(dst)
                .map(|(s, d)| PointPair {
                    src: [s.0, s.1],
                    dst: [d.0, d.1],
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// At least four finite pairs; with exactly four, no three source points
    /// may be collinear. Larger sets are checked by rank during estimation.
    pub fn validate(&self) -> Result<(), CalibrationError> {
        if self.pairs.len() < 4 {
            return Err(CalibrationError::TooFewPairs(self.pairs.len()));
        }
        for (i, p) in self.pairs.iter().enumerate() {
            if !p.src.iter().chain(&p.dst).all(|v| v.is_finite()) {
                return Err(CalibrationError::NonFinite(i));
            }
        }
        if self.pairs.len() == 4 {
            let s: Vec<[f64; 2]> = self.pairs.iter().map(|p| p.src).collect();
            for (i, j, k) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
                if collinear(s[i], s[j], s[k]) {
                    return Err(CalibrationError::Degenerate {
                        rank: 7,
                        detail: format!(
                            "source points {i}, {j}, {k} are collinear: {:?} {:?} {:?}",
                            s[i], s[j], s[k]
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    /// The same pairs with source and destination swapped.
    pub fn swapped(&self) -> Self {
        Self {
            pairs: self
                .pairs
                .iter()
                .map(|p| PointPair {
                    src: p.dst,
                    dst: p.src,
                })
                .collect(),
        }
    }
}

/// Similarity taking a point set to zero centroid and RMS distance sqrt(2).
fn normalizing_similarity(points: impl Iterator<Item = [f64; 2]> + Clone) -> Matrix3<f64> {
    let n = points.clone().count() as f64;
    let (sx, sy) = points.clone().fold((0.0, 0.0), |(ax, ay), p| (ax + p[0], ay + p[1]));
    let (cx, cy) = (sx / n, sy / n);
    let ms = points.map(|p| (p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sum::<f64>() / n;
    let s = if ms > 0.0 { (2.0 / ms).sqrt() } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn apply_h(m: &Matrix3<f64>, p: [f64; 2]) -> [f64; 2] {
    let v = m * Vector3::new(p[0], p[1], 1.0);
    [v[0] / v[2], v[1] / v[2]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub max_px: f64,
    pub rms_px: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerspectiveEstimate {
    pub transform: PerspectiveTransform,
    pub residual: ResidualReport,
}

/// Reprojection error of `t` on the pairs, in destination pixels.
pub fn reprojection_residual(t: &PerspectiveTransform, c: &Correspondences) -> ResidualReport {
    let mut max: f64 = 0.0;
    let mut sum_sq = 0.0;
    for p in &c.pairs {
        let err = match t.map(p.src[0], p.src[1]) {
            Some((x, y)) => (x - p.dst[0]).hypot(y - p.dst[1]),
            None => f64::INFINITY,
        };
        max = max.max(err);
        sum_sq += err * err;
    }
    ResidualReport {
        max_px: max,
        rms_px: (sum_sq / c.len() as f64).sqrt(),
    }
}

/// Least-squares estimate of the transform taking every `src` to its `dst`.
pub fn estimate_perspective(c: &Correspondences) -> Result<PerspectiveEstimate, CalibrationError> {
    c.validate()?;
    let n = c.len();
    let t_src = normalizing_similarity(c.pairs.iter().map(|p| p.src));
    let t_dst = normalizing_similarity(c.pairs.iter().map(|p| p.dst));

    let mut a = DMatrix::<f64>::zeros(2 * n, 8);
    let mut b = DVector::<f64>::zeros(2 * n);
    for (i, p) in c.pairs.iter().enumerate() {
        let [x, y] = apply_h(&t_src, p.src);
        let [u, v] = apply_h(&t_dst, p.dst);
        let (r0, r1) = (2 * i, 2 * i + 1);
        a[(r0, 0)] = x;
        a[(r0, 1)] = y;
        a[(r0, 2)] = 1.0;
        a[(r0, 6)] = -x * u;
        a[(r0, 7)] = -y * u;
        b[r0] = u;
        a[(r1, 3)] = x;
        a[(r1, 4)] = y;
        a[(r1, 5)] = 1.0;
        a[(r1, 6)] = -x * v;
        a[(r1, 7)] = -y * v;
        b[r1] = v;
    }

    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < 8 {
        return Err(CalibrationError::Degenerate {
            rank,
            detail: degenerate_detail(c),
        });
    }
    let h = svd
        .solve(&b, tol)
        .map_err(|e| CalibrationError::Degenerate {
            rank,
            detail: e.to_string(),
        })?;
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0);
    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or(CalibrationError::NotInvertible { det: 0.0 })?;
    let transform = PerspectiveTransform::from_matrix(&(t_dst_inv * hn * t_src))?;
    let residual = reprojection_residual(&transform, c);
    Ok(PerspectiveEstimate {
        transform,
        residual,
    })
}

fn degenerate_detail(c: &Correspondences) -> String {
    for (side, pts) in [
        ("source", c.pairs.iter().map(|p| p.src).collect::<Vec<_>>()),
        ("destination", c.pairs.iter().map(|p| p.dst).collect()),
    ] {
        if (2..pts.len()).all(|k| collinear(pts[0], pts[1], pts[k])) {
            return format!(
                "all {} {side} points lie on one line through {:?} and {:?}",
                pts.len(),
                pts[0],
                pts[1]
            );
        }
    }
    "point configuration does not constrain all eight parameters (repeated or near-collinear points)".into()
}

#[inline]
fn bilinear(img: &Image, x: f64, y: f64, c: usize) -> f64 {
    let (w, h) = img.dims();
    let x0 = (x.floor() as usize).min(w - 1);
    let y0 = (y.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let v00 = img.get(x0, y0, c) as f64;
    let v10 = img.get(x1, y0, c) as f64;
    let v01 = img.get(x0, y1, c) as f64;
    let v11 = img.get(x1, y1, c) as f64;
    v00 + fx * (v10 - v00) + fy * (v01 - v00) + fx * fy * (v00 - v10 - v01 + v11)
}

/// Warps `img` by `t`: each output pixel samples the input at the inverse-mapped
/// location with bilinear interpolation. Samples falling outside the input are
/// white (255).
pub fn apply_perspective(
    t: &PerspectiveTransform,
    img: &Image,
    out_w: usize,
    out_h: usize,
) -> Result<Image, CalibrationError> {
    let inv = t.inverse()?;
    if out_w == 0 || out_h == 0 {
        return Err(ImageError::ZeroArea {
            width: out_w,
            height: out_h,
        }
        .into());
    }
    let ch = img.channels();
    let (w, h) = img.dims();
    let (xmax, ymax) = ((w - 1) as f64, (h - 1) as f64);
    const SNAP: f64 = 1e-9;
    let mut data = Vec::with_capacity(out_w * out_h * ch);
    for yo in 0..out_h {
        for xo in 0..out_w {
            let src = inv.map(xo as f64, yo as f64).and_then(|(x, y)| {
                let x = if x < 0.0 && x > -SNAP { 0.0 } else if x > xmax && x < xmax + SNAP { xmax } else { x };
                let y = if y < 0.0 && y > -SNAP { 0.0 } else if y > ymax && y < ymax + SNAP { ymax } else { y };
                ((0.0..=xmax).contains(&x) && (0.0..=ymax).contains(&y)).then_some((x, y))
            });
            match src {
                Some((x, y)) => {
                    for c in 0..ch {
                        data.push(bilinear(img, x, y, c).round().clamp(0.0, 255.0) as u8);
                    }
                }
                None => data.extend(std::iter::repeat_n(255u8, ch)),
            }
        }
    }
    Ok(Image::new(out_w, out_h, img.color_space(), data)?)
}

/// Per-cell native resolution over a checkerboard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionMap {
    /// Cell rows and columns (one fewer than corner rows and columns).
    pub rows: usize,
    pub cols: usize,
    /// Row-major `(ppi_x, ppi_y)` per cell.
    pub cells: Vec<(f64, f64)>,
    pub min_ppi_x: f64,
    pub max_ppi_x: f64,
    pub min_ppi_y: f64,
    pub max_ppi_y: f64,
}

impl ResolutionMap {
    pub fn cell(&self, row: usize, col: usize) -> (f64, f64) {
        self.cells[row * self.cols + col]
    }

    pub fn mean(&self) -> (f64, f64) {
        let n = self.cells.len() as f64;
        let (sx, sy) = self.cells.iter().fold((0.0, 0.0), |(a, b), c| (a + c.0, b + c.1));
        (sx / n, sy / n)
    }
}

/// Groups sorted coordinates into lattice levels; returns (first, pitch, count).
fn lattice_axis(values: &[f64], axis: &str) -> Result<(f64, f64, usize), CalibrationError> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let span = v[v.len() - 1] - v[0];
    let tol = 1e-6 * span.max(1.0);
    let mut levels: Vec<f64> = Vec::new();
    for x in v {
        if levels.last().is_none_or(|&l| x - l > tol) {
            levels.push(x);
        }
    }
    if levels.len() < 2 {
        return Err(CalibrationError::NotAGrid(format!("destination {axis} has a single level")));
    }
    let pitch = span / (levels.len() - 1) as f64;
    for (k, l) in levels.iter().enumerate() {
        if (l - (levels[0] + k as f64 * pitch)).abs() > tol.max(1e-3 * pitch) {
            return Err(CalibrationError::NotAGrid(format!(
                "destination {axis} levels are not evenly spaced (level {k} at {l}, expected {})",
                levels[0] + k as f64 * pitch
            )));
        }
    }
    Ok((levels[0], pitch, levels.len()))
}

/// Native resolution from a checkerboard. The destination points must be the
/// ideal corner lattice; source points are where those corners appear in the
/// raw image. For each cell, `ppi_x` is `25.4 * span / square_size_mm` averaged
/// over the cell's top and bottom edges, where `span` is the raw pixel
/// distance between horizontally adjacent corners (likewise `ppi_y`).
pub fn estimate_resolution(c: &Correspondences, square_size_mm: f64) -> Result<ResolutionMap, CalibrationError> {
    if !(square_size_mm > 0.0 && square_size_mm.is_finite()) {
        return Err(CalibrationError::BadPitch(square_size_mm));
    }
    c.validate()?;
    let xs: Vec<f64> = c.pairs.iter().map(|p| p.dst[0]).collect();
    let ys: Vec<f64> = c.pairs.iter().map(|p| p.dst[1]).collect();
    let (x0, px, ncols) = lattice_axis(&xs, "x")?;
    let (y0, py, nrows) = lattice_axis(&ys, "y")?;
    if ncols * nrows != c.len() {
        return Err(CalibrationError::NotAGrid(format!(
            "{} points cannot fill a {ncols}x{nrows} lattice",
            c.len()
        )));
    }
    let mut grid: Vec<Option<[f64; 2]>> = vec![None; ncols * nrows];
    for p in &c.pairs {
        let col = ((p.dst[0] - x0) / px).round() as usize;
        let row = ((p.dst[1] - y0) / py).round() as usize;
        let slot = &mut grid[row * ncols + col];
        if slot.is_some() {
            return Err(CalibrationError::NotAGrid(format!("duplicate corner at lattice ({col}, {row})")));
        }
        *slot = Some(p.src);
    }
    let at = |r: usize, c: usize| grid[r * ncols + c].expect("lattice is full");
    let dist = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
    let k = 25.4 / square_size_mm;
    let (rows, cols) = (nrows - 1, ncols - 1);
    let mut cells = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for col in 0..cols {
            let sx = 0.5 * (dist(at(r, col), at(r, col + 1)) + dist(at(r + 1, col), at(r + 1, col + 1)));
            let sy = 0.5 * (dist(at(r, col), at(r + 1, col)) + dist(at(r, col + 1), at(r + 1, col + 1)));
            cells.push((k * sx, k * sy));
        }
    }
    let fold = |f: fn(f64, f64) -> f64, init: f64, pick: fn(&(f64, f64)) -> f64| {
        cells.iter().map(pick).fold(init, f)
    };
    let map = ResolutionMap {
        rows,
        cols,
        min_ppi_x: fold(f64::min, f64::INFINITY, |c| c.0),
        max_ppi_x: fold(f64::max, f64::NEG_INFINITY, |c| c.0),
        min_ppi_y: fold(f64::min, f64::INFINITY, |c| c.1),
        max_ppi_y: fold(f64::max, f64::NEG_INFINITY, |c| c.1),
        cells,
    };
    if map.min_ppi_x <= 0.0 || map.min_ppi_y <= 0.0 {
        return Err(CalibrationError::NotAGrid("coincident source corners give zero resolution".into()));
    }
    Ok(map)
}

/// A rendered checkerboard with its ground-truth corners.
#[derive(Debug, Clone)]
pub struct Checkerboard {
    pub image: Image,
    /// Lattice corners on the ideal (untransformed) board, row-major.
    pub ideal_corners: Vec<(f64, f64)>,
    /// The same corners after the transform.
    pub corners: Vec<(f64, f64)>,
    pub corner_rows: usize,
    pub corner_cols: usize,
}

impl Checkerboard {
    /// Pairs from the observed corners to the ideal lattice, the direction
    /// used for frontalization and resolution estimation.
    pub fn correspondences(&self) -> Result<Correspondences, CalibrationError> {
        Correspondences::from_points(&self.corners, &self.ideal_corners)
    }
}

/// Renders a `rows x cols` square board with a one-square white margin, so the
/// ideal corners sit at exact multiples of `square_px`, then warps it by
/// `transform` (ideal to rendered). Pixels are 4x4 supersampled.
pub fn synth_checkerboard(
    rows: usize,
    cols: usize,
    square_px: usize,
    transform: &PerspectiveTransform,
) -> Result<Checkerboard, CalibrationError> {
    if rows < 3 || cols < 3 || square_px == 0 {
        return Err(CalibrationError::NotAGrid(format!(
            "board needs at least 3x3 squares of positive size, got {rows}x{cols} at {square_px} px"
        )));
    }
    let inv = transform.inverse()?;
    let sq = square_px as f64;
    let (w, h) = ((cols + 2) * square_px, (rows + 2) * square_px);
    let color_at = |u: f64, v: f64| -> f64 {
        let i = (u / sq).floor() as i64 - 1;
        let j = (v / sq).floor() as i64 - 1;
        if i < 0 || j < 0 || i >= cols as i64 || j >= rows as i64 {
            255.0
        } else if (i + j) % 2 == 0 {
            0.0
        } else {
            255.0
        }
    };
    const SS: usize = 4;
    let image = Image::gray_from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for sy in 0..SS {
            for sx in 0..SS {
                let px = x as f64 - 0.5 + (sx as f64 + 0.5) / SS as f64;
                let py = y as f64 - 0.5 + (sy as f64 + 0.5) / SS as f64;
                acc += match inv.map(px, py) {
                    Some((u, v)) => color_at(u, v),
                    None => 255.0,
                };
            }
        }
        (acc / (SS * SS) as f64).round() as u8
    })?;
    let mut ideal = Vec::with_capacity((rows + 1) * (cols + 1));
    for j in 1..=rows + 1 {
        for i in 1..=cols + 1 {
            ideal.push((i as f64 * sq, j as f64 * sq));
        }
    }
    let corners = ideal
        .iter()
        .map(|&(u, v)| transform.map(u, v).ok_or(CalibrationError::NotInvertible { det: 0.0 }))
        .collect::<Result<Vec<_>, _>>()?;
    debug_assert_eq!(image.color_space(), ColorSpace::Gray);
    Ok(Checkerboard {
        image,
        ideal_corners: ideal,
        corners,
        corner_rows: rows + 1,
        corner_cols: cols + 1,
    })
}

/// Keystone distortion of a board seen obliquely: resolution grows linearly in
/// perspective from the left of the board to the right, as when one side of
/// the platen is closer to the camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeystoneSpec {
    /// Frontal-plane resolution of the ideal board, pixels per inch.
    pub frontal_ppi: f64,
    /// Raw ppi along x at `u_left` and `u_right` (frontal pixel columns).
    pub ppi_x_left: f64,
    pub ppi_x_right: f64,
    /// Raw ppi along y at `u_left`.
    pub ppi_y_left: f64,
    pub u_left: f64,
    pub u_right: f64,
    /// Frontal point mapped to `raw_center`.
    pub frontal_center: (f64, f64),
    pub raw_center: (f64, f64),
}

impl KeystoneSpec {
    /// Frontal-to-raw transform. Along the row through `frontal_center` the
    /// local ppi is exactly `ppi_x_left` at `u_left` and `ppi_x_right` at `u_right`.
    pub fn transform(&self) -> Result<PerspectiveTransform, CalibrationError> {
        let (uc, vc) = self.frontal_center;
        let (ul, ur) = (self.u_left - uc, self.u_right - uc);
        // ppi_x(u) = F alpha / (g u + 1)^2 and ppi_y(u) = F gamma / (g u + 1)
        let r = (self.ppi_x_right / self.ppi_x_left).sqrt();
        let g = (r - 1.0) / (ul - r * ur);
        let f = self.frontal_ppi;
        let alpha = self.ppi_x_left * (g * ul + 1.0).powi(2) / f;
        let gamma = self.ppi_y_left * (g * ul + 1.0) / f;
        let (x0, y0) = self.raw_center;
        let centered = Matrix3::new(
            x0 * g + alpha,
            0.0,
            x0,
            y0 * g,
            gamma,
            y0,
            g,
            0.0,
            1.0,
        );
        let shift = Matrix3::new(1.0, 0.0, -uc, 0.0, 1.0, -vc, 0.0, 0.0, 1.0);
        PerspectiveTransform::from_matrix(&(centered * shift))
    }

    /// Raw ppi along y at `u_right` implied by the model.
    pub fn ppi_y_right(&self) -> f64 {
        self.ppi_y_left * (self.ppi_x_right / self.ppi_x_left).sqrt()
    }
}

/// On-disk transform document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformFile {
    pub format_version: u32,
    pub params: [f64; 8],
    pub residual_rms_px: f64,
}

impl TransformFile {
    pub fn new(estimate: &PerspectiveEstimate) -> Self {
        Self {
            format_version: TRANSFORM_FORMAT_VERSION,
            params: estimate.transform.params,
            residual_rms_px: estimate.residual.rms_px,
        }
    }

    pub fn transform(&self) -> Result<PerspectiveTransform, CalibrationError> {
        PerspectiveTransform::new(self.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn keystone() -> PerspectiveTransform {
        PerspectiveTransform::new([1.1, 0.05, 12.0, -0.02, 0.95, 7.0, 4e-4, -2e-4]).unwrap()
    }

    fn rel_err(a: &[f64; 8], b: &[f64; 8]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / y.abs().max(1e-3))
            .fold(0.0, f64::max)
    }

    fn quad() -> Vec<(f64, f64)> {
        vec![(10.0, 20.0), (300.0, 15.0), (320.0, 260.0), (5.0, 240.0)]
    }

    #[test]
    fn identity_pairs_give_identity() {
        let q = quad();
        let est = estimate_perspective(&Correspondences::from_points(&q, &q).unwrap()).unwrap();
        let id = PerspectiveTransform::IDENTITY.params;
        for (p, e) in est.transform.params.iter().zip(id) {
            assert!((p - e).abs() < 1e-12, "{:?}", est.transform.params);
        }
        assert!(est.residual.max_px < 1e-9);
    }

    #[test]
    fn four_exact_pairs_recover_transform() {
        let t = keystone();
        let q = quad();
        let dst: Vec<_> = q.iter().map(|&(x, y)| t.map(x, y).unwrap()).collect();
        let est = estimate_perspective(&Correspondences::from_points(&q, &dst).unwrap()).unwrap();
        assert!(rel_err(&est.transform.params, &t.params) < 1e-9);
        assert!(est.residual.max_px < 1e-8);
    }

    #[test]
    fn rejects_too_few_and_collinear() {
        let q = &quad()[..3];
        assert!(matches!(
            Correspondences::from_points(q, q),
            Err(CalibrationError::TooFewPairs(3))
        ));
        let line = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (5.0, 1.0)];
        assert!(matches!(
            Correspondences::from_points(&line, &line),
            Err(CalibrationError::Degenerate { .. })
        ));
        let all_on_line: Vec<_> = (0..6).map(|i| (i as f64, 2.0 * i as f64)).collect();
        let c = Correspondences::from_points(&all_on_line, &all_on_line).unwrap();
        match estimate_perspective(&c) {
            Err(CalibrationError::Degenerate { detail, rank }) => {
                assert!(rank < 8);
                assert!(detail.contains("one line"), "{detail}");
            }
            other => panic!("expected degenerate, got {other:?}"),
        }
    }

    #[test]
    fn noisy_grid_residual_is_small() {
        let t = keystone();
        for seed in 0..100 {
            let mut r = rng::stream(seed, "calib-noise", &[]);
            let mut src = Vec::new();
            let mut dst = Vec::new();
            for j in 0..8 {
                for i in 0..8 {
                    let p = (20.0 + 40.0 * i as f64, 15.0 + 35.0 * j as f64);
                    let (x, y) = t.map(p.0, p.1).unwrap();
                    src.push(p);
                    dst.push((x + 0.2 * rng::gaussian(&mut r), y + 0.2 * rng::gaussian(&mut r)));
                }
            }
            let est = estimate_perspective(&Correspondences::from_points(&src, &dst).unwrap()).unwrap();
            assert!(est.residual.rms_px <= 0.5, "seed {seed}: {}", est.residual.rms_px);
        }
    }

    #[test]
    fn identity_warp_is_exact() {
        let img = Image::gray_from_fn(9, 7, |x, y| (x * 25 + y * 3) as u8).unwrap();
        let out = apply_perspective(&PerspectiveTransform::IDENTITY, &img, 9, 7).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn translation_moves_impulse() {
        let img = Image::gray_from_fn(40, 5, |x, y| if x == 12 && y == 2 { 0 } else { 200 }).unwrap();
        let out = apply_perspective(&PerspectiveTransform::translation(10.0, 0.0), &img, 40, 5).unwrap();
        assert_eq!(out.get(22, 2, 0), 0);
        assert_eq!(out.get(12, 2, 0), 200);
        // columns 0..10 come from outside the input
        assert_eq!(out.get(3, 2, 0), 255);
    }

    #[test]
    fn warp_rejects_singular_transform() {
        let img = Image::filled(4, 4, ColorSpace::Gray, 0).unwrap();
        let t = PerspectiveTransform {
            params: [1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0],
        };
        assert!(matches!(
            apply_perspective(&t, &img, 4, 4),
            Err(CalibrationError::NotInvertible { .. })
        ));
    }

    #[test]
    fn warp_round_trip_on_smooth_image() {
        let img = Image::gray_from_fn(120, 100, |x, y| {
            (128.0 + 60.0 * (x as f64 / 17.0).sin() * (y as f64 / 23.0).cos()) as u8
        })
        .unwrap();
        let t = PerspectiveTransform::new([1.02, 0.01, 2.0, -0.01, 0.98, 1.5, 2e-4, 1e-4]).unwrap();
        let fwd = apply_perspective(&t, &img, 120, 100).unwrap();
        let back = apply_perspective(&t.inverse().unwrap(), &fwd, 120, 100).unwrap();
        let mut sum = 0.0;
        let mut n = 0.0;
        for y in 10..90 {
            for x in 10..110 {
                sum += (img.get(x, y, 0) as f64 - back.get(x, y, 0) as f64).abs();
                n += 1.0;
            }
        }
        assert!(sum / n <= 2.0, "{}", sum / n);
    }

    fn grid_pairs(spacing: f64, stretch_x: f64, offset: (f64, f64)) -> Correspondences {
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for j in 0..5 {
            for i in 0..6 {
                dst.push((i as f64 * 10.0, j as f64 * 10.0));
                src.push((offset.0 + i as f64 * spacing * stretch_x, offset.1 + j as f64 * spacing));
            }
        }
        Correspondences::from_points(&src, &dst).unwrap()
    }

    #[test]
    fn resolution_of_undistorted_board() {
        let map = estimate_resolution(&grid_pairs(100.0, 1.0, (0.0, 0.0)), 1.0).unwrap();
        assert_eq!((map.rows, map.cols), (4, 5));
        for &(x, y) in &map.cells {
            assert!((x - 2540.0).abs() < 1e-9 && (y - 2540.0).abs() < 1e-9);
        }
        let stretched = estimate_resolution(&grid_pairs(100.0, 2.0, (0.0, 0.0)), 1.0).unwrap();
        assert!((stretched.min_ppi_x - 5080.0).abs() < 1e-9);
        assert!((stretched.max_ppi_y - 2540.0).abs() < 1e-9);
    }

    #[test]
    fn resolution_rejects_non_grid() {
        let q = quad();
        assert!(matches!(
            estimate_resolution(&Correspondences::from_points(&q, &q).unwrap(), 1.0),
            Err(CalibrationError::NotAGrid(_))
        ));
        assert!(matches!(
            estimate_resolution(&grid_pairs(100.0, 1.0, (0.0, 0.0)), 0.0),
            Err(CalibrationError::BadPitch(_))
        ));
    }

    #[test]
    fn identity_board_corners_on_lattice() {
        let board = synth_checkerboard(3, 4, 10, &PerspectiveTransform::IDENTITY).unwrap();
        assert_eq!(board.image.dims(), (60, 50));
        assert_eq!(board.corners.len(), 4 * 5);
        for &(x, y) in &board.corners {
            assert_eq!(x % 10.0, 0.0);
            assert_eq!(y % 10.0, 0.0);
        }
        // first board square is black, margin white
        assert_eq!(board.image.get(15, 15, 0), 0);
        assert_eq!(board.image.get(25, 15, 0), 255);
        assert_eq!(board.image.get(5, 5, 0), 255);
    }

    #[test]
    fn board_round_trip_recovers_inverse() {
        let t = keystone();
        let board = synth_checkerboard(5, 6, 30, &t).unwrap();
        for (&(u, v), &(x, y)) in board.ideal_corners.iter().zip(&board.corners) {
            let (ex, ey) = t.map(u, v).unwrap();
            assert_eq!((x, y), (ex, ey));
        }
        let est = estimate_perspective(&board.correspondences().unwrap()).unwrap();
        let inv = t.inverse().unwrap();
        assert!(rel_err(&est.transform.params, &inv.params) < 1e-6);
    }

    #[test]
    fn keystone_spec_hits_targets_locally() {
        let spec = KeystoneSpec {
            frontal_ppi: 1000.0,
            ppi_x_left: 1594.0,
            ppi_x_right: 2480.0,
            ppi_y_left: 2463.0,
            u_left: 100.0,
            u_right: 500.0,
            frontal_center: (300.0, 200.0),
            raw_center: (900.0, 700.0),
        };
        let t = spec.transform().unwrap();
        assert_eq!(t.map(300.0, 200.0).map(|(x, y)| ((x - 900.0).abs() < 1e-9, (y - 700.0).abs() < 1e-9)), Some((true, true)));
        let d = 1e-4;
        let local = |u: f64| {
            let (a, _) = t.map(u - d, 200.0).unwrap();
            let (b, _) = t.map(u + d, 200.0).unwrap();
            (b - a) / (2.0 * d) * spec.frontal_ppi
        };
        assert!((local(100.0) - 1594.0).abs() < 1e-3);
        assert!((local(500.0) - 2480.0).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn resolution_invariant_to_translation(dx in -500.0f64..500.0, dy in -500.0f64..500.0) {
            let a = estimate_resolution(&grid_pairs(37.0, 1.3, (0.0, 0.0)), 0.5).unwrap();
            let b = estimate_resolution(&grid_pairs(37.0, 1.3, (dx, dy)), 0.5).unwrap();
            for (p, q) in a.cells.iter().zip(&b.cells) {
                prop_assert!((p.0 - q.0).abs() < 1e-6 && (p.1 - q.1).abs() < 1e-6);
            }
        }

        #[test]
        fn exact_data_round_trips_parameters(
            a in 0.8f64..1.2, b in -0.1f64..0.1, c in -20.0f64..20.0,
            d in -0.1f64..0.1, e in 0.8f64..1.2, f in -20.0f64..20.0,
            g in -5e-4f64..5e-4, h in -5e-4f64..5e-4,
        ) {
            let t = PerspectiveTransform::new([a, b, c, d, e, f, g, h]).unwrap();
            let mut src = Vec::new();
            for j in 0..4 {
                for i in 0..5 {
                    src.push((10.0 + 60.0 * i as f64, 12.0 + 55.0 * j as f64));
                }
            }
            let dst: Vec<_> = src.iter().map(|&(x, y)| t.map(x, y).unwrap()).collect();
            let est = estimate_perspective(&Correspondences::from_points(&src, &dst).unwrap()).unwrap();
            prop_assert!(rel_err(&est.transform.params, &t.params) < 1e-9);
        }
    }
}
