//! Channel models and receiver-side linear processing.
//!
//! Implements the `y = h x + n` stage in its AWGN, flat-Rayleigh,
//! tapped-delay-line, and MIMO variants, the EbN0-to-noise-variance
//! conversion, and LMMSE equalization with per-stream post-equalization
//! statistics for soft demapping.
//!
//! Convention: Eb counts information bits, so for unit-energy symbols
//! `sigma_n^2 = 1 / (rho * m * 10^(EbN0/10))`. Block fading: one
//! realization per transmission, no Doppler evolution.

use crate::error::{Error, Result};
use crate::ofdm::ResourceGrid;
use crate::rng::Rng;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

/// One tap of a power-delay profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub delay_samples: usize,
    pub avg_power_linear: f64,
}

/// Normalized tapped-delay-line profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProfile {
    name: String,
    taps: Vec<Tap>,
}

impl ChannelProfile {
    pub fn new(name: impl Into<String>, taps: Vec<Tap>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::invalid("profile needs at least one tap"));
        }
        let total: f64 = taps.iter().map(|t| t.avg_power_linear).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "tap powers sum to {total}, expected 1 within 1e-9"
            )));
        }
        for w in taps.windows(2) {
            if w[1].delay_samples <= w[0].delay_samples {
                return Err(Error::invalid("tap delays must be strictly increasing"));
            }
        }
        if taps.iter().any(|t| t.avg_power_linear < 0.0) {
            return Err(Error::invalid("tap powers must be non-negative"));
        }
        Ok(Self {
            name: name.into(),
            taps,
        })
    }

    /// Single zero-delay unit tap (flat).
    pub fn flat(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            taps: vec![Tap {
                delay_samples: 0,
                avg_power_linear: 1.0,
            }],
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn taps(&self) -> &[Tap] {
        &self.taps
    }

    pub fn max_delay(&self) -> usize {
        self.taps.last().map(|t| t.delay_samples).unwrap_or(0)
    }

    /// Parses the plain-text profile format:
    ///
    /// ```text
    /// # comment
    /// name = tdl-a-like
    /// taps = [(0, 0.60), (1, 0.25), (3, 0.15)]
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut name = None;
        let mut taps = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("profile line without '=': {line:?}")))?;
            match key.trim() {
                "name" => name = Some(value.trim().to_string()),
                "taps" => taps = Some(parse_tap_list(value.trim())?),
                other => return Err(Error::config(format!("unknown profile key {other:?}"))),
            }
        }
        let name = name.ok_or_else(|| Error::config("profile missing `name`"))?;
        let taps = taps.ok_or_else(|| Error::config("profile missing `taps`"))?;
        Self::new(name, taps)
    }

    pub fn to_file_string(&self) -> String {
        let taps = self
            .taps
            .iter()
            .map(|t| format!("({}, {})", t.delay_samples, t.avg_power_linear))
            .collect::<Vec<_>>()
            .join(", ");
        format!("name = {}\ntaps = [{}]\n", self.name, taps)
    }
}

fn parse_tap_list(s: &str) -> Result<Vec<Tap>> {
    let inner = s
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| Error::config("taps must be bracketed: [(delay, power), ...]"))?;
    let mut taps = Vec::new();
    let mut rest = inner.trim();
    while !rest.is_empty() {
        let open = rest
            .find('(')
            .ok_or_else(|| Error::config("expected '(' in tap list"))?;
        let close = rest[open..]
            .find(')')
            .ok_or_else(|| Error::config("unclosed tap tuple"))?
            + open;
        let body = &rest[open + 1..close];
        let (d, p) = body
            .split_once(',')
            .ok_or_else(|| Error::config("tap tuple needs `delay, power`"))?;
        let delay: usize = d
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("bad tap delay {d:?}")))?;
        let power: f64 = p
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("bad tap power {p:?}")))?;
        taps.push(Tap {
            delay_samples: delay,
            avg_power_linear: power,
        });
        rest = rest[close + 1..].trim_start_matches([',', ' ']);
    }
    Ok(taps)
}

/// EbN0 bookkeeping plus the derived total complex noise variance.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub ebn0_db: f64,
    pub bits_per_symbol: usize,
    pub coderate: f64,
    pub noise_var: f64,
}

impl NoiseSpec {
    pub fn new(ebn0_db: f64, bits_per_symbol: usize, coderate: f64) -> Result<Self> {
        Ok(Self {
            ebn0_db,
            bits_per_symbol,
            coderate,
            noise_var: ebn0_to_noise_var(ebn0_db, bits_per_symbol, coderate)?,
        })
    }
}

/// `sigma_n^2 = 1 / (rho * m * 10^(ebn0_db / 10))` for unit-energy symbols.
pub fn ebn0_to_noise_var(ebn0_db: f64, bits_per_symbol: usize, coderate: f64) -> Result<f64> {
    if bits_per_symbol < 1 {
        return Err(Error::invalid("bits per symbol must be >= 1"));
    }
    if coderate <= 0.0 || coderate > 1.0 {
        return Err(Error::invalid(format!(
            "coderate {coderate} outside (0, 1]"
        )));
    }
    Ok(1.0 / (coderate * bits_per_symbol as f64 * 10f64.powf(ebn0_db / 10.0)))
}

/// One draw of CN(0, 1).
pub fn complex_gaussian(rng: &mut Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) / 2f64.sqrt()
}

/// Adds i.i.d. circular complex Gaussian noise of total variance
/// `noise_var` (split evenly between I and Q).
pub fn awgn(samples: &mut [Complex64], noise_var: f64, rng: &mut Rng) {
    if noise_var == 0.0 {
        return;
    }
    let sigma = noise_var.sqrt();
    for s in samples {
        *s += sigma * complex_gaussian(rng);
    }
}

/// Flat Rayleigh block fading: one CN(0,1) coefficient per
/// (stream, OFDM symbol) block multiplies every subcarrier of the block.
/// Returns the faded grid and the coefficients for perfect-CSI
/// equalization, indexed `stream * num_ofdm_symbols + symbol`.
pub fn rayleigh_flat(grid: &ResourceGrid, rng: &mut Rng) -> (ResourceGrid, Vec<Complex64>) {
    let shape = grid.shape();
    let mut coeffs = Vec::with_capacity(shape.num_streams * shape.num_ofdm_symbols);
    let mut out = grid.clone();
    for s in 0..shape.num_streams {
        for sym in 0..shape.num_ofdm_symbols {
            let h = complex_gaussian(rng);
            coeffs.push(h);
            for k in 0..shape.num_subcarriers {
                out.set(s, sym, k, grid.get(s, sym, k) * h);
            }
        }
    }
    (out, coeffs)
}

/// A realized tapped impulse response (one block-fading draw).
#[derive(Debug, Clone)]
pub struct TapRealization {
    pub delay_samples: usize,
    pub coefficient: Complex64,
}

/// Draws per-tap coefficients `sqrt(avg_power) * CN(0,1)`.
pub fn tdl_draw(profile: &ChannelProfile, rng: &mut Rng) -> Vec<TapRealization> {
    profile
        .taps()
        .iter()
        .map(|t| TapRealization {
            delay_samples: t.delay_samples,
            coefficient: t.avg_power_linear.sqrt() * complex_gaussian(rng),
        })
        .collect()
}

/// Convolves samples with a realized impulse response; output length
/// equals the input length (the dispersed tail past the block is cut).
pub fn tdl_convolve(samples: &[Complex64], taps: &[TapRealization]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); samples.len()];
    for tap in taps {
        for (i, &x) in samples.iter().enumerate() {
            let j = i + tap.delay_samples;
            if j < out.len() {
                out[j] += tap.coefficient * x;
            }
        }
    }
    out
}

/// Applies the profile to a sample stream. Returns the convolved samples
/// and the tap realizations for perfect-CSI equalization.
pub fn tdl_apply(
    profile: &ChannelProfile,
    samples: &[Complex64],
    rng: &mut Rng,
) -> (Vec<Complex64>, Vec<TapRealization>) {
    let taps = tdl_draw(profile, rng);
    (tdl_convolve(samples, &taps), taps)
}

/// Frequency response of a realized impulse response at every FFT bin:
/// `H[b] = sum_t c_t exp(-j 2 pi b d_t / fft_size)`.
pub fn tdl_frequency_response(taps: &[TapRealization], fft_size: usize) -> Vec<Complex64> {
    (0..fft_size)
        .map(|b| {
            taps.iter()
                .map(|t| {
                    let phase = -2.0 * std::f64::consts::PI * (b * t.delay_samples) as f64
                        / fft_size as f64;
                    t.coefficient * Complex64::from_polar(1.0, phase)
                })
                .sum()
        })
        .collect()
}

/// Small dense complex matrix for per-resource-element MIMO processing.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Complex64::new(1.0, 0.0));
        }
        m
    }

    pub fn from_rows(rows: &[&[Complex64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map(|x| x.len()).unwrap_or(0);
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn hermitian(&self) -> CMat {
        let mut out = CMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j).conj());
            }
        }
        out
    }

    pub fn mul(&self, other: &CMat) -> CMat {
        assert_eq!(self.cols, other.rows, "matrix dimension mismatch");
        let mut out = CMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.set(i, j, out.get(i, j) + a * other.get(k, j));
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.cols {
            return Err(Error::invalid(format!(
                "vector length {} != matrix columns {}",
                v.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * v[j]).sum())
            .collect())
    }

    pub fn add_scaled_identity(&self, scale: f64) -> CMat {
        assert_eq!(self.rows, self.cols);
        let mut out = self.clone();
        for i in 0..self.rows {
            out.set(i, i, out.get(i, i) + Complex64::new(scale, 0.0));
        }
        out
    }

    /// Solves `self * X = rhs` by Gaussian elimination with partial
    /// pivoting. Errors on a (numerically) singular system.
    pub fn solve(&self, rhs: &CMat) -> Result<CMat> {
        if self.rows != self.cols || rhs.rows != self.rows {
            return Err(Error::invalid("solve dimension mismatch"));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut b = rhs.clone();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| {
                    a.get(i, col)
                        .norm_sqr()
                        .partial_cmp(&a.get(j, col).norm_sqr())
                        .unwrap()
                })
                .unwrap();
            if a.get(pivot, col).norm_sqr() < 1e-300 {
                return Err(Error::invalid("singular matrix"));
            }
            if pivot != col {
                for j in 0..n {
                    let (x, y) = (a.get(col, j), a.get(pivot, j));
                    a.set(col, j, y);
                    a.set(pivot, j, x);
                }
                for j in 0..b.cols {
                    let (x, y) = (b.get(col, j), b.get(pivot, j));
                    b.set(col, j, y);
                    b.set(pivot, j, x);
                }
            }
            let inv = Complex64::new(1.0, 0.0) / a.get(col, col);
            for i in col + 1..n {
                let factor = a.get(i, col) * inv;
                if factor.norm_sqr() == 0.0 {
                    continue;
                }
                for j in col..n {
                    a.set(i, j, a.get(i, j) - factor * a.get(col, j));
                }
                for j in 0..b.cols {
                    b.set(i, j, b.get(i, j) - factor * b.get(col, j));
                }
            }
        }
        let mut x = CMat::zeros(n, b.cols);
        for j in 0..b.cols {
            for i in (0..n).rev() {
                let mut acc = b.get(i, j);
                for k in i + 1..n {
                    acc -= a.get(i, k) * x.get(k, j);
                }
                x.set(i, j, acc / a.get(i, i));
            }
        }
        Ok(x)
    }
}

/// `y = H x + n` at one resource element.
pub fn mimo_apply(
    h: &CMat,
    x: &[Complex64],
    noise_var: f64,
    rng: &mut Rng,
) -> Result<Vec<Complex64>> {
    let mut y = h.mul_vec(x)?;
    awgn(&mut y, noise_var, rng);
    Ok(y)
}

/// Per-stream statistics of the LMMSE filter `W = (H^H H + s I)^-1 H^H`.
#[derive(Debug, Clone)]
pub struct LmmseStats {
    /// Filter itself (num_tx x num_rx).
    pub filter: CMat,
    /// Bias `mu_i = (W H)_{ii}` on stream i.
    pub bias: Vec<Complex64>,
    /// Residual interference-plus-noise variance on stream i (pre bias
    /// correction): `sigma^2 (W W^H)_{ii} + sum_{j != i} |(W H)_{ij}|^2`.
    pub residual_var: Vec<f64>,
}

impl LmmseStats {
    /// Effective noise variance after dividing the filter output by the
    /// bias, which is what the soft demapper wants.
    pub fn effective_noise_var(&self, stream: usize) -> f64 {
        self.residual_var[stream] / self.bias[stream].norm_sqr().max(1e-300)
    }

    /// Post-equalization SINR of a stream.
    pub fn sinr(&self, stream: usize) -> f64 {
        self.bias[stream].norm_sqr() / self.residual_var[stream].max(1e-300)
    }
}

/// Builds the LMMSE filter and its per-stream statistics. With
/// `noise_var = 0` and a singular `H^H H`, falls back to ridge
/// regularization with epsilon = 1e-12.
pub fn lmmse_stats(h: &CMat, noise_var: f64) -> Result<LmmseStats> {
    if noise_var < 0.0 {
        return Err(Error::invalid("noise variance must be >= 0"));
    }
    let hh = h.hermitian();
    let gram = hh.mul(h);
    let a = gram.add_scaled_identity(noise_var);
    let filter = match a.solve(&hh) {
        Ok(w) => w,
        Err(_) => a.add_scaled_identity(1e-12).solve(&hh)?,
    };
    let wh = filter.mul(h);
    let n_tx = h.cols();
    let mut bias = Vec::with_capacity(n_tx);
    let mut residual = Vec::with_capacity(n_tx);
    let wwh = filter.mul(&filter.hermitian());
    for i in 0..n_tx {
        bias.push(wh.get(i, i));
        let mut v = noise_var * wwh.get(i, i).re;
        for j in 0..n_tx {
            if j != i {
                v += wh.get(i, j).norm_sqr();
            }
        }
        residual.push(v);
    }
    Ok(LmmseStats {
        filter,
        bias,
        residual_var: residual,
    })
}

/// LMMSE estimate `x_hat = (H^H H + s I)^-1 H^H y` at one resource element.
pub fn lmmse_equalize(h: &CMat, y: &[Complex64], noise_var: f64) -> Result<Vec<Complex64>> {
    let stats = lmmse_stats(h, noise_var)?;
    stats.filter.mul_vec(y)
}
