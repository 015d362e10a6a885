//! Soft-label distribution prediction head.
//!
//! The length target is discretized into K bins; the training target is a
//! soft distribution whose mass decays exponentially with bin distance from
//! the true bin. The head is one affine map into K logits; the continuous
//! prediction is the expected value of the softmax distribution over bin
//! centers. The joint loss mixes cross-entropy against the soft label with a
//! normalized squared error on the decoded prediction, and all gradients are
//! closed-form.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::numerics::{ensure_finite, softmax, Matrix, ProbVector};

/// Magic bytes of the serialized model file.
pub const MODEL_MAGIC: [u8; 4] = *b"FLHD";
/// Current model file version.
pub const MODEL_VERSION: u32 = 1;

/// How bin edges are placed over the observed lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinScheme {
    EqualWidth,
    Quantile,
}

impl fmt::Display for BinScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BinScheme::EqualWidth => write!(f, "equal-width"),
            BinScheme::Quantile => write!(f, "quantile"),
        }
    }
}

impl std::str::FromStr for BinScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal-width" | "equal_width" | "equal" => Ok(BinScheme::EqualWidth),
            "quantile" => Ok(BinScheme::Quantile),
            other => Err(Error::InvalidArgument {
                what: "bin scheme",
                reason: format!("unknown scheme '{other}' (expected equal-width or quantile)"),
            }),
        }
    }
}

/// K length bins with strictly increasing edges and per-bin center values.
///
/// Bins are right-closed: a value exactly on `edges[i]` belongs to bin `i`
/// (1-based), i.e. bin `i` covers `(edges[i-1], edges[i]]`. When `log_scale`
/// is set the bins live over `ln(length)` and predictions are decoded with
/// `exp`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinLayout {
    edges: Vec<f64>,
    centers: Vec<f64>,
    scheme: BinScheme,
    log_scale: bool,
}

impl BinLayout {
    /// Fit a layout over raw target values (already in bin space).
    pub fn fit(values: &[f64], k: usize, scheme: BinScheme, log_scale: bool) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput { what: "fit_bins" });
        }
        if k == 0 {
            return Err(Error::InvalidArgument {
                what: "fit_bins",
                reason: "K must be >= 1".into(),
            });
        }
        ensure_finite(values, "fit_bins values")?;
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max <= 0.0 {
            return Err(Error::DegenerateBins {
                reason: format!("maximum target {max} is not positive"),
            });
        }
        let edges = match scheme {
            BinScheme::EqualWidth => (0..=k).map(|i| max * i as f64 / k as f64).collect(),
            BinScheme::Quantile => {
                let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
                if min == max && k > 1 {
                    return Err(Error::DegenerateBins {
                        reason: format!("all {} targets equal {max}; quantile bins need spread", values.len()),
                    });
                }
                let mut sorted = values.to_vec();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let n = sorted.len();
                let mut edges = vec![0.0];
                for j in 1..k {
                    // order statistic at the j/K empirical quantile
                    let idx = (n * j).div_ceil(k) - 1;
                    edges.push(sorted[idx]);
                }
                edges.push(max);
                // duplicate edges collapse; K shrinks accordingly
                edges.dedup();
                edges.retain(|e| *e >= 0.0);
                if edges[0] != 0.0 {
                    edges.insert(0, 0.0);
                }
                edges
            }
        };
        if edges.len() < 2 {
            return Err(Error::DegenerateBins {
                reason: "fewer than one bin after merging duplicate edges".into(),
            });
        }
        let centers = edges.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
        Ok(Self {
            edges,
            centers,
            scheme,
            log_scale,
        })
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn scheme(&self) -> BinScheme {
        self.scheme
    }

    pub fn log_scale(&self) -> bool {
        self.log_scale
    }

    /// Map a raw length into bin space.
    pub fn encode_target(&self, y: f64) -> f64 {
        if self.log_scale {
            y.ln()
        } else {
            y
        }
    }

    /// Map a bin-space prediction back to a raw length.
    pub fn decode_prediction(&self, y_hat: f64) -> f64 {
        if self.log_scale {
            y_hat.exp()
        } else {
            y_hat
        }
    }

    /// Bin index (0-based) of a bin-space value, plus whether it clamped
    /// into the last bin from above.
    pub fn locate(&self, value: f64) -> (usize, bool) {
        let k = self.k();
        let idx = self.edges[1..].partition_point(|&e| e < value);
        if idx >= k {
            (k - 1, true)
        } else {
            (idx, false)
        }
    }

    fn from_raw(
        edges: Vec<f64>,
        centers: Vec<f64>,
        scheme: BinScheme,
        log_scale: bool,
    ) -> Result<Self> {
        if edges.len() != centers.len() + 1 || centers.is_empty() {
            return Err(Error::InvalidArgument {
                what: "BinLayout",
                reason: "edge/center length mismatch".into(),
            });
        }
        if !edges.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument {
                what: "BinLayout",
                reason: "edges not strictly increasing".into(),
            });
        }
        Ok(Self {
            edges,
            centers,
            scheme,
            log_scale,
        })
    }
}

/// Fit K bins over integer lengths.
pub fn fit_bins(lengths: &[u32], k: usize, scheme: BinScheme) -> Result<BinLayout> {
    let values: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
    BinLayout::fit(&values, k, scheme, false)
}

/// Soft label distribution for a true length `y`.
///
/// With `i` the bin containing `y` (values above the last edge clamp into the
/// last bin): `p_j = exp(-|j - i|) / sum_k exp(-|k - i|)`.
pub fn soft_label(y: u32, bins: &BinLayout) -> Result<ProbVector> {
    let (probs, _) = soft_label_with_clamp(y, bins)?;
    Ok(probs)
}

/// As [`soft_label`], also reporting whether `y` clamped into the last bin.
pub fn soft_label_with_clamp(y: u32, bins: &BinLayout) -> Result<(ProbVector, bool)> {
    if y == 0 {
        return Err(Error::InvalidArgument {
            what: "soft_label",
            reason: "length must be >= 1".into(),
        });
    }
    let (i, clamped) = bins.locate(bins.encode_target(y as f64));
    let raw: Vec<f64> = (0..bins.k())
        .map(|j| -((j as f64 - i as f64).abs()))
        .map(f64::exp)
        .collect();
    let z: f64 = raw.iter().sum();
    let probs = ProbVector::new(raw.into_iter().map(|v| v / z).collect())?;
    Ok((probs, clamped))
}

/// Parameters of the K-way prediction head: one affine map into K logits.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    w: Matrix,
    b: Vec<f64>,
    lambda: f64,
    norm_scale: f64,
}

impl HeadParams {
    /// Zero-initialized head. Zero init is exact and deterministic; the
    /// affine map has no symmetry to break.
    pub fn zeros(k: usize, d_in: usize, lambda: f64, norm_scale: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidArgument {
                what: "HeadParams",
                reason: format!("lambda {lambda} outside [0, 1]"),
            });
        }
        if !(norm_scale > 0.0) || !norm_scale.is_finite() {
            return Err(Error::InvalidArgument {
                what: "HeadParams",
                reason: format!("norm_scale {norm_scale} must be positive"),
            });
        }
        Ok(Self {
            w: Matrix::zeros(k, d_in),
            b: vec![0.0; k],
            lambda,
            norm_scale,
        })
    }

    pub fn from_parts(w: Matrix, b: Vec<f64>, lambda: f64, norm_scale: f64) -> Result<Self> {
        if b.len() != w.rows() {
            return Err(Error::DimensionMismatch {
                what: "HeadParams bias",
                expected: w.rows(),
                got: b.len(),
            });
        }
        ensure_finite(&b, "HeadParams bias")?;
        let mut params = Self::zeros(w.rows(), w.cols(), lambda, norm_scale)?;
        params.w = w;
        params.b = b;
        Ok(params)
    }

    pub fn k(&self) -> usize {
        self.w.rows()
    }

    pub fn d_in(&self) -> usize {
        self.w.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.w
    }

    pub fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.w
    }

    pub fn bias(&self) -> &[f64] {
        &self.b
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.b
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn norm_scale(&self) -> f64 {
        self.norm_scale
    }
}

/// Output of one forward pass: logits, softmax distribution, and the decoded
/// expected-value prediction (still in bin space).
#[derive(Debug, Clone)]
pub struct HeadOutput {
    pub logits: Vec<f64>,
    pub p_hat: ProbVector,
    pub y_hat: f64,
}

/// Forward pass: `u = W h + b`, `p_hat = softmax(u)`, `y_hat = p_hat . centers`.
pub fn forward(params: &HeadParams, h: &[f64], bins: &BinLayout) -> Result<HeadOutput> {
    if h.len() != params.d_in() {
        return Err(Error::DimensionMismatch {
            what: "forward input",
            expected: params.d_in(),
            got: h.len(),
        });
    }
    if bins.k() != params.k() {
        return Err(Error::DimensionMismatch {
            what: "forward bins",
            expected: params.k(),
            got: bins.k(),
        });
    }
    ensure_finite(h, "forward input")?;
    let mut logits = params.w.matvec(h)?;
    for (u, b) in logits.iter_mut().zip(&params.b) {
        *u += b;
    }
    let p_hat = softmax(&logits, 1.0)?;
    let y_hat = p_hat
        .as_slice()
        .iter()
        .zip(bins.centers())
        .map(|(p, c)| p * c)
        .sum();
    Ok(HeadOutput {
        logits,
        p_hat,
        y_hat,
    })
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|u| (u - m).exp()).sum::<f64>().ln()
}

/// Cross-entropy of the soft label `p` against the predicted distribution,
/// computed in log space from the logits so exact-zero probabilities are safe.
pub fn cross_entropy(p: &ProbVector, logits: &[f64]) -> f64 {
    let lse = log_sum_exp(logits);
    -p.as_slice()
        .iter()
        .zip(logits)
        .map(|(pi, ui)| pi * (ui - lse))
        .sum::<f64>()
}

/// Joint loss `lambda * CE(p, p_hat) + (1 - lambda) * ((y - y_hat)/norm_scale)^2`.
///
/// `target` must already be in bin space (raw length, or its log when the
/// layout is log-scale).
pub fn joint_loss(p: &ProbVector, out: &HeadOutput, target: f64, params: &HeadParams) -> f64 {
    let ce = cross_entropy(p, &out.logits);
    let err = (target - out.y_hat) / params.norm_scale;
    params.lambda * ce + (1.0 - params.lambda) * err * err
}

/// Gradients of the joint loss with respect to head parameters and input.
#[derive(Debug, Clone)]
pub struct HeadGradients {
    pub dw: Matrix,
    pub db: Vec<f64>,
    pub dh: Vec<f64>,
}

impl HeadGradients {
    pub fn zeros(k: usize, d_in: usize) -> Self {
        Self {
            dw: Matrix::zeros(k, d_in),
            db: vec![0.0; k],
            dh: vec![0.0; d_in],
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.dw.data_mut() {
            *v *= s;
        }
        for v in &mut self.db {
            *v *= s;
        }
        for v in &mut self.dh {
            *v *= s;
        }
    }

    pub fn add(&mut self, other: &HeadGradients) {
        for (a, b) in self.dw.data_mut().iter_mut().zip(other.dw.data()) {
            *a += b;
        }
        for (a, b) in self.db.iter_mut().zip(&other.db) {
            *a += b;
        }
        for (a, b) in self.dh.iter_mut().zip(&other.dh) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.dw.data().iter().all(|v| v.is_finite())
            && self.db.iter().all(|v| v.is_finite())
            && self.dh.iter().all(|v| v.is_finite())
    }
}

/// Analytic gradients of the joint loss for one example.
///
/// `dL/du_i = lambda (p_hat_i - p_i)
///          + (1 - lambda) * 2 (y_hat - y) / s^2 * p_hat_i (c_i - y_hat)`,
/// then `dW = dL/du . h^T`, `db = dL/du`, `dh = W^T . dL/du`.
pub fn loss_gradients(
    params: &HeadParams,
    h: &[f64],
    y: u32,
    bins: &BinLayout,
) -> Result<(f64, HeadGradients)> {
    let (p, _) = soft_label_with_clamp(y, bins)?;
    let out = forward(params, h, bins)?;
    let target = bins.encode_target(y as f64);
    let loss = joint_loss(&p, &out, target, params);

    let s2 = params.norm_scale * params.norm_scale;
    let mse_coeff = (1.0 - params.lambda) * 2.0 * (out.y_hat - target) / s2;
    let dldu: Vec<f64> = (0..params.k())
        .map(|i| {
            let pi_hat = out.p_hat.as_slice()[i];
            params.lambda * (pi_hat - p.as_slice()[i])
                + mse_coeff * pi_hat * (bins.centers()[i] - out.y_hat)
        })
        .collect();

    let mut dw = Matrix::zeros(params.k(), params.d_in());
    dw.add_outer(&dldu, h, 1.0);
    let dh = params.w.t_matvec(&dldu)?;
    Ok((
        loss,
        HeadGradients {
            dw,
            db: dldu,
            dh,
        },
    ))
}

/// Write head parameters and bin layout to the portable model file.
///
/// Layout (all little-endian): magic `FLHD`, u32 version, u32 K, u32 d_in,
/// f64 lambda, f64 norm_scale, u32 scheme (0 equal-width, 1 quantile; +2 when
/// the bins are log-scale), f64 edges[K+1], f64 centers[K], f64 W[K*d_in]
/// row-major, f64 b[K]. Round-trips are bit-exact.
pub fn save_model(path: &Path, params: &HeadParams, bins: &BinLayout) -> Result<()> {
    if bins.k() != params.k() {
        return Err(Error::DimensionMismatch {
            what: "save_model bins",
            expected: params.k(),
            got: bins.k(),
        });
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MODEL_MAGIC)?;
    w.write_u32::<LittleEndian>(MODEL_VERSION)?;
    w.write_u32::<LittleEndian>(params.k() as u32)?;
    w.write_u32::<LittleEndian>(params.d_in() as u32)?;
    w.write_f64::<LittleEndian>(params.lambda)?;
    w.write_f64::<LittleEndian>(params.norm_scale)?;
    let scheme_code = match bins.scheme() {
        BinScheme::EqualWidth => 0u32,
        BinScheme::Quantile => 1u32,
    } + if bins.log_scale() { 2 } else { 0 };
    w.write_u32::<LittleEndian>(scheme_code)?;
    for &e in bins.edges() {
        w.write_f64::<LittleEndian>(e)?;
    }
    for &c in bins.centers() {
        w.write_f64::<LittleEndian>(c)?;
    }
    for &v in params.w.data() {
        w.write_f64::<LittleEndian>(v)?;
    }
    for &v in &params.b {
        w.write_f64::<LittleEndian>(v)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a model file written by [`save_model`].
pub fn load_model(path: &Path) -> Result<(HeadParams, BinLayout)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Truncated {
        context: "model magic".into(),
    })?;
    if magic != MODEL_MAGIC {
        return Err(Error::BadMagic {
            expected: MODEL_MAGIC,
            found: magic,
        });
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != MODEL_VERSION {
        return Err(Error::BadVersion {
            found: version,
            supported: MODEL_VERSION,
        });
    }
    let k = r.read_u32::<LittleEndian>()? as usize;
    let d_in = r.read_u32::<LittleEndian>()? as usize;
    let lambda = r.read_f64::<LittleEndian>()?;
    let norm_scale = r.read_f64::<LittleEndian>()?;
    let scheme_code = r.read_u32::<LittleEndian>()?;
    let log_scale = scheme_code >= 2;
    let scheme = match scheme_code % 2 {
        0 => BinScheme::EqualWidth,
        _ => BinScheme::Quantile,
    };
    let read_f64s = |r: &mut BufReader<File>, n: usize, what: &str| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(r.read_f64::<LittleEndian>().map_err(|_| Error::Truncated {
                context: format!("model {what}"),
            })?);
        }
        Ok(out)
    };
    let edges = read_f64s(&mut r, k + 1, "edges")?;
    let centers = read_f64s(&mut r, k, "centers")?;
    let w_data = read_f64s(&mut r, k * d_in, "weights")?;
    let b = read_f64s(&mut r, k, "bias")?;
    let bins = BinLayout::from_raw(edges, centers, scheme, log_scale)?;
    let params = HeadParams::from_parts(Matrix::from_vec(k, d_in, w_data)?, b, lambda, norm_scale)?;
    Ok((params, bins))
}
