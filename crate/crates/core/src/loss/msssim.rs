use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Error, Result};
use crate::image::ImagePlanes;
use serde::{Deserialize, Serialize};

/// Floor applied to per-scale terms before exponentiation.
pub const TERM_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsSsimParams {
    pub scales: usize,
    /// Exponent per scale, finest first.
    pub weights: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    pub window: usize,
}

impl Default for MsSsimParams {
    fn default() -> Self {
        Self {
            scales: 3,
            weights: vec![1.0 / 3.0; 3],
            c1: 0.01,
            c2: 0.03,
            window: 3,
        }
    }
}

impl MsSsimParams {
    pub fn validate(&self) -> Result<()> {
        if self.scales == 0 || self.weights.len() != self.scales {
            return Err(Error::InvalidParams(format!(
                "{} scales with {} weights",
                self.scales,
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidParams("scale weights must be positive".into()));
        }
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::InvalidParams(format!("window {} must be odd and >= 3", self.window)));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::InvalidParams("stabilizing constants must be positive".into()));
        }
        Ok(())
    }

    /// Smallest side length that supports every scale.
    pub fn min_side(&self) -> usize {
        self.window << (self.scales - 1)
    }

    /// Drops coarse scales that do not fit a `height`×`width` input, rescaling
    /// the remaining weights to the original total.
    pub fn fitted(&self, height: usize, width: usize) -> Result<Self> {
        self.validate()?;
        let side = height.min(width);
        if side < self.window {
            return Err(Error::InvalidInput(format!(
                "{height}x{width} input is smaller than the {} pixel window",
                self.window
            )));
        }
        let mut scales = self.scales;
        while (self.window << (scales - 1)) > side {
            scales -= 1;
        }
        if scales == self.scales {
            return Ok(self.clone());
        }
        let total: f64 = self.weights.iter().sum();
        let kept: f64 = self.weights[..scales].iter().sum();
        Ok(Self {
            scales,
            weights: self.weights[..scales].iter().map(|w| w * total / kept).collect(),
            ..self.clone()
        })
    }
}

/// Mean SSIM and mean contrast-structure term over all windows of
/// `[n, 1, h, w]` inputs scaled to `[0, 1]`.
pub fn ssim_cs(g: &mut Graph, x: Var, y: Var, p: &MsSsimParams) -> Result<(Var, Var)> {
    let shape = g.shape(x).to_vec();
    if shape != g.shape(y) || shape.len() != 4 || shape[1] != 1 {
        return Err(shape_err(&shape, g.shape(y), "ssim inputs must be equal [n, 1, h, w]"));
    }
    if p.window > shape[2] || p.window > shape[3] {
        return Err(Error::InvalidInput(format!(
            "window {} larger than {}x{} input",
            p.window, shape[2], shape[3]
        )));
    }
    let k = p.window;
    let n = (k * k) as f64;
    // window sums, then divide: exact for constant windows
    let kernel = g.constant([1, 1, k, k], vec![1.0; k * k])?;
    let window_mean = |g: &mut Graph, v: Var| -> Result<Var> {
        let s = g.conv2d(v, kernel, 1, 0)?;
        Ok(g.scale(s, 1.0 / n))
    };
    let mx = window_mean(g, x)?;
    let my = window_mean(g, y)?;
    let xx = g.mul(x, x)?;
    let yy = g.mul(y, y)?;
    let xy = g.mul(x, y)?;
    let exx = window_mean(g, xx)?;
    let eyy = window_mean(g, yy)?;
    let exy = window_mean(g, xy)?;
    let mxx = g.mul(mx, mx)?;
    let myy = g.mul(my, my)?;
    let mxy = g.mul(mx, my)?;
    let vx = g.sub(exx, mxx)?;
    let vy = g.sub(eyy, myy)?;
    let cov = g.sub(exy, mxy)?;

    let cov2 = g.scale(cov, 2.0);
    let cs_num = g.add_scalar(cov2, p.c2);
    let vsum = g.add(vx, vy)?;
    let cs_den = g.add_scalar(vsum, p.c2);
    let cs_map = g.div(cs_num, cs_den)?;

    let mxy2 = g.scale(mxy, 2.0);
    let l_num = g.add_scalar(mxy2, p.c1);
    let msum = g.add(mxx, myy)?;
    let l_den = g.add_scalar(msum, p.c1);
    let l_map = g.div(l_num, l_den)?;

    let ssim_map = g.mul(l_map, cs_map)?;
    Ok((g.mean(ssim_map), g.mean(cs_map)))
}

/// Multi-scale SSIM of `[n, 1, h, w]` inputs scaled to `[0, 1]`.
pub fn ms_ssim(g: &mut Graph, x: Var, y: Var, p: &MsSsimParams) -> Result<Var> {
    p.validate()?;
    let shape = g.shape(x).to_vec();
    if shape.len() != 4 || shape[2].min(shape[3]) < p.min_side() {
        return Err(Error::InvalidParams(format!(
            "{} scales need inputs of at least {} pixels, got {:?}",
            p.scales,
            p.min_side(),
            shape
        )));
    }
    let pool = g.constant([1, 1, 2, 2], vec![0.25; 4])?;
    let (mut x, mut y) = (x, y);
    let mut out: Option<Var> = None;
    for (i, &weight) in p.weights.iter().enumerate() {
        let (ssim, cs) = ssim_cs(g, x, y, p)?;
        let term = if i + 1 == p.scales { ssim } else { cs };
        let term = g.clamp_min(term, TERM_FLOOR);
        let term = g.pow_scalar(term, weight);
        out = Some(match out {
            Some(acc) => g.mul(acc, term)?,
            None => term,
        });
        if i + 1 < p.scales {
            x = g.conv2d(x, pool, 2, 0)?;
            y = g.conv2d(y, pool, 2, 0)?;
        }
    }
    Ok(out.expect("at least one scale"))
}

/// A single `[0, 1]`-scaled plane for the plain implementation.
#[derive(Debug, Clone)]
struct Plane {
    w: usize,
    h: usize,
    v: Vec<f64>,
}

impl Plane {
    fn halve(&self) -> Plane {
        let (w, h) = (self.w / 2, self.h / 2);
        let mut v = Vec::with_capacity(w * h);
        for r in 0..h {
            for c in 0..w {
                let i = 2 * r * self.w + 2 * c;
                v.push((self.v[i] + self.v[i + 1] + self.v[i + self.w] + self.v[i + self.w + 1]) * 0.25);
            }
        }
        Plane { w, h, v }
    }
}

/// Window sums of (ssim, cs) and the window count.
fn window_stats(a: &Plane, b: &Plane, p: &MsSsimParams) -> (f64, f64, usize) {
    let k = p.window;
    let n = (k * k) as f64;
    let (mut ssim, mut cs, mut count) = (0.0, 0.0, 0);
    for r in 0..=a.h - k {
        for c in 0..=a.w - k {
            let idx = |i: usize, j: usize| (r + i) * a.w + c + j;
            let (mut sa, mut sb) = (0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    sa += a.v[idx(i, j)];
                    sb += b.v[idx(i, j)];
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let (da, db) = (a.v[idx(i, j)] - ma, b.v[idx(i, j)] - mb);
                    vaa += da * da;
                    vbb += db * db;
                    vab += da * db;
                }
            }
            let (vaa, vbb, vab) = (vaa / n, vbb / n, vab / n);
            let cs_w = (2.0 * vab + p.c2) / (vaa + vbb + p.c2);
            let l_w = (2.0 * ma * mb + p.c1) / (ma * ma + mb * mb + p.c1);
            ssim += l_w * cs_w;
            cs += cs_w;
            count += 1;
        }
    }
    (ssim, cs, count)
}

/// MS-SSIM of two equally sized multi-plane images with samples in
/// `[0, 255]`, computed directly in `f64`. Coarse scales that do not fit
/// are dropped (see [`MsSsimParams::fitted`]).
pub fn ms_ssim_planes(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    width: usize,
    height: usize,
    p: &MsSsimParams,
) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidInput(format!("{} vs {} planes", a.len(), b.len())));
    }
    if a.iter().chain(b).any(|pl| pl.len() != width * height) {
        return Err(Error::InvalidInput("plane size does not match dimensions".into()));
    }
    let p = p.fitted(height, width)?;
    let scale = |v: &Vec<f64>| Plane {
        w: width,
        h: height,
        v: v.iter().map(|x| x / 255.0).collect(),
    };
    let mut xa: Vec<Plane> = a.iter().map(scale).collect();
    let mut xb: Vec<Plane> = b.iter().map(scale).collect();
    let mut result = 1.0;
    for (i, &weight) in p.weights.iter().enumerate() {
        let (mut ssim, mut cs, mut count) = (0.0, 0.0, 0);
        for (pa, pb) in xa.iter().zip(&xb) {
            let (s, c, n) = window_stats(pa, pb, &p);
            ssim += s;
            cs += c;
            count += n;
        }
        let term = if i + 1 == p.scales { ssim } else { cs } / count as f64;
        result *= term.max(TERM_FLOOR).powf(weight);
        xa = xa.iter().map(Plane::halve).collect();
        xb = xb.iter().map(Plane::halve).collect();
    }
    Ok(result)
}

pub fn ms_ssim_images(a: &ImagePlanes, b: &ImagePlanes, p: &MsSsimParams) -> Result<f64> {
    if (a.width(), a.height(), a.colorspace()) != (b.width(), b.height(), b.colorspace()) {
        return Err(Error::InvalidInput(format!(
            "cannot compare {}x{} {:?} with {}x{} {:?}",
            a.width(),
            a.height(),
            a.colorspace(),
            b.width(),
            b.height(),
            b.colorspace()
        )));
    }
    ms_ssim_planes(a.planes(), b.planes(), a.width(), a.height(), p)
}
