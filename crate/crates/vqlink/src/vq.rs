//! Codebook transport layer: segmentation, nearest-neighbor
//! quantization, index packing, k-means fitting, and the VQ loss.
//!
//! The codebook holds K vectors of dimension d_z shared by both link
//! ends; latent rows of dimension d_r are split into d_r/d_z contiguous
//! segments, each quantized independently to the index of its nearest
//! codebook entry (ties to the lowest index).

use crate::bits::BitVector;
use crate::error::{Error, Result};
use crate::rng::Rng;
use rand::Rng as _;

/// K learned code vectors of dimension d_z.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    k: usize,
    d_z: usize,
    /// row-major K x d_z
    vectors: Vec<f64>,
}

impl Codebook {
    pub fn new(k: usize, d_z: usize, vectors: Vec<f64>) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("codebook size K = {k} must be >= 2")));
        }
        if vectors.len() != k * d_z {
            return Err(Error::invalid(format!(
                "codebook data length {} != K * d_z = {}",
                vectors.len(),
                k * d_z
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("codebook entries must be finite"));
        }
        Ok(Self { k, d_z, vectors })
    }

    /// Random small-amplitude initialization.
    pub fn random(k: usize, d_z: usize, rng: &mut Rng) -> Result<Self> {
        let vectors = (0..k * d_z).map(|_| rng.gen_range(-0.5..0.5)).collect();
        Self::new(k, d_z, vectors)
    }

    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn code_dim(&self) -> usize {
        self.d_z
    }

    /// Bits needed to address an entry: ceil(log2 K).
    pub fn index_bits(&self) -> usize {
        (usize::BITS - (self.k - 1).leading_zeros()) as usize
    }

    pub fn entry(&self, index: usize) -> &[f64] {
        &self.vectors[index * self.d_z..(index + 1) * self.d_z]
    }

    pub fn entry_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.vectors[index * self.d_z..(index + 1) * self.d_z]
    }

    /// True when some pair of entries coincides exactly; quantization
    /// then resolves to the lower index and the lint lets callers warn.
    pub fn has_duplicate_entries(&self) -> bool {
        for a in 0..self.k {
            for b in a + 1..self.k {
                if self.entry(a) == self.entry(b) {
                    return true;
                }
            }
        }
        false
    }

    /// Serializes as a header line `K d_z` followed by K rows of d_z
    /// decimal values. Rust's shortest round-trip float formatting makes
    /// the reload bit-exact.
    pub fn to_file_string(&self) -> String {
        let mut s = format!("{} {}\n", self.k, self.d_z);
        for i in 0..self.k {
            let row: Vec<String> = self.entry(i).iter().map(|v| format!("{v}")).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Corrupt("empty codebook file".into()))?;
        let mut parts = header.split_whitespace();
        let k: usize = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Corrupt("bad codebook header".into()))?;
        let d_z: usize = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Corrupt("bad codebook header".into()))?;
        let mut vectors = Vec::with_capacity(k * d_z);
        for line in lines {
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| Error::Corrupt(format!("bad codebook value {tok:?}")))?;
                vectors.push(v);
            }
        }
        Self::new(k, d_z, vectors)
    }
}

/// n x d_r real latent matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMatrix {
    pub n: usize,
    pub d_r: usize,
    /// row-major n x d_r
    pub values: Vec<f64>,
}

impl LatentMatrix {
    pub fn new(n: usize, d_r: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * d_r {
            return Err(Error::invalid("latent matrix shape mismatch"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("latent values must be finite"));
        }
        Ok(Self { n, d_r, values })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d_r..(i + 1) * self.d_r]
    }
}

/// n x s integer index matrix, s = d_r / d_z segments per token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMatrix {
    pub n: usize,
    pub segments_per_token: usize,
    /// row-major n x s
    pub indices: Vec<usize>,
}

impl IndexMatrix {
    pub fn new(n: usize, segments_per_token: usize, indices: Vec<usize>) -> Result<Self> {
        if indices.len() != n * segments_per_token {
            return Err(Error::invalid("index matrix shape mismatch"));
        }
        Ok(Self {
            n,
            segments_per_token,
            indices,
        })
    }
}

/// Splits each latent row into contiguous d_z-sized segments. The result
/// is a flat list of n*s segments in row order, so concatenation
/// reproduces the matrix exactly.
pub fn segment(r: &LatentMatrix, d_z: usize) -> Result<Vec<Vec<f64>>> {
    if d_z == 0 || r.d_r % d_z != 0 {
        return Err(Error::invalid(format!(
            "code dimension {d_z} does not divide feature dimension {}",
            r.d_r
        )));
    }
    Ok(r.values.chunks(d_z).map(|c| c.to_vec()).collect())
}

/// Inverse of [`segment`].
pub fn concatenate(segments: &[Vec<f64>], n: usize, d_r: usize) -> Result<LatentMatrix> {
    let values: Vec<f64> = segments.iter().flatten().copied().collect();
    LatentMatrix::new(n, d_r, values)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest codebook entry; ties break to the lowest index.
pub fn nearest_entry(codebook: &Codebook, seg: &[f64]) -> Result<usize> {
    if seg.len() != codebook.code_dim() {
        return Err(Error::invalid(format!(
            "segment dimension {} != d_z = {}",
            seg.len(),
            codebook.code_dim()
        )));
    }
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for k in 0..codebook.len() {
        let d = squared_distance(seg, codebook.entry(k));
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    Ok(best)
}

/// Quantizes segments (in [`segment`] order) to an index matrix.
pub fn quantize(segments: &[Vec<f64>], codebook: &Codebook, n: usize) -> Result<IndexMatrix> {
    let s = if n == 0 { 0 } else { segments.len() / n.max(1) };
    let mut indices = Vec::with_capacity(segments.len());
    for seg in segments {
        indices.push(nearest_entry(codebook, seg)?);
    }
    IndexMatrix::new(n, s, indices)
}

/// Looks indices back up into segments and reassembles the latent matrix.
pub fn dequantize(t: &IndexMatrix, codebook: &Codebook, d_r: usize) -> Result<LatentMatrix> {
    if let Some(&bad) = t.indices.iter().find(|&&i| i >= codebook.len()) {
        return Err(Error::Corrupt(format!(
            "index {bad} >= codebook size {}",
            codebook.len()
        )));
    }
    let values: Vec<f64> = t
        .indices
        .iter()
        .flat_map(|&i| codebook.entry(i).iter().copied())
        .collect();
    LatentMatrix::new(t.n, d_r, values)
}

/// Packs indices as fixed-width natural binary, MSB first.
pub fn pack_indices(t: &IndexMatrix, codebook: &Codebook) -> BitVector {
    let width = codebook.index_bits();
    let mut bits = BitVector::new();
    for &i in &t.indices {
        bits.push_uint(i as u64, width);
    }
    bits
}

/// Unpacking result: received patterns at or above K (possible only for
/// non-power-of-two K under bit errors) are clamped to K-1 and counted.
#[derive(Debug, Clone)]
pub struct UnpackReport {
    pub indices: IndexMatrix,
    pub clamped: usize,
}

/// Inverse of [`pack_indices`] for a known (n, s) shape.
pub fn unpack_indices(
    bits: &BitVector,
    codebook: &Codebook,
    n: usize,
    segments_per_token: usize,
) -> Result<UnpackReport> {
    let width = codebook.index_bits();
    let needed = n * segments_per_token * width;
    if bits.len() < needed {
        return Err(Error::invalid(format!(
            "{} bits cannot hold {n} x {segments_per_token} indices of width {width}",
            bits.len()
        )));
    }
    let mut indices = Vec::with_capacity(n * segments_per_token);
    let mut clamped = 0usize;
    for i in 0..n * segments_per_token {
        let mut v = bits.read_uint(i * width, width)? as usize;
        if v >= codebook.len() {
            v = codebook.len() - 1;
            clamped += 1;
        }
        indices.push(v);
    }
    Ok(UnpackReport {
        indices: IndexMatrix::new(n, segments_per_token, indices)?,
        clamped,
    })
}

/// Distortion trace of a k-means fit, one entry per Lloyd iteration.
#[derive(Debug, Clone)]
pub struct KmeansFit {
    pub codebook: Codebook,
    pub distortion_trace: Vec<f64>,
}

/// k-means++ initialization followed by Lloyd iterations. Empty clusters
/// are re-seeded from the sample farthest from its assigned center.
/// Stops after `max_iters` or when the relative distortion change drops
/// below 1e-6.
pub fn kmeans_fit(
    samples: &[Vec<f64>],
    k: usize,
    max_iters: usize,
    rng: &mut Rng,
) -> Result<KmeansFit> {
    if samples.len() < k {
        return Err(Error::invalid(format!(
            "{} samples cannot seed {k} clusters",
            samples.len()
        )));
    }
    let d = samples[0].len();
    if samples.iter().any(|s| s.len() != d) {
        return Err(Error::invalid("ragged sample dimensions"));
    }

    // k-means++ seeding
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(samples[rng.gen_range(0..samples.len())].clone());
    let mut dist2: Vec<f64> = samples
        .iter()
        .map(|s| squared_distance(s, &centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = dist2.iter().sum();
        let next = if total <= 0.0 {
            // all mass already covered; take any point
            rng.gen_range(0..samples.len())
        } else {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = samples.len() - 1;
            for (i, &d2) in dist2.iter().enumerate() {
                if target < d2 {
                    chosen = i;
                    break;
                }
                target -= d2;
            }
            chosen
        };
        centers.push(samples[next].clone());
        for (i, s) in samples.iter().enumerate() {
            dist2[i] = dist2[i].min(squared_distance(s, centers.last().unwrap()));
        }
    }

    let mut assignment = vec![0usize; samples.len()];
    let mut trace = Vec::new();
    for _ in 0..max_iters {
        // assign
        let mut distortion = 0.0;
        for (i, s) in samples.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let dd = squared_distance(s, center);
                if dd < best_d {
                    best_d = dd;
                    best = c;
                }
            }
            assignment[i] = best;
            distortion += best_d;
        }
        trace.push(distortion);
        if trace.len() >= 2 {
            let prev = trace[trace.len() - 2];
            if prev > 0.0 && (prev - distortion) / prev < 1e-6 {
                break;
            }
            if prev == 0.0 {
                break;
            }
        }
        // update
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, s) in samples.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (acc, &v) in sums[assignment[i]].iter_mut().zip(s) {
                *acc += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed from the farthest sample
                let far = (0..samples.len())
                    .max_by(|&a, &b| {
                        squared_distance(&samples[a], &centers[assignment[a]])
                            .partial_cmp(&squared_distance(&samples[b], &centers[assignment[b]]))
                            .unwrap()
                    })
                    .unwrap();
                centers[c] = samples[far].clone();
            } else {
                for (slot, acc) in centers[c].iter_mut().zip(&sums[c]) {
                    *slot = acc / counts[c] as f64;
                }
            }
        }
    }
    let vectors: Vec<f64> = centers.into_iter().flatten().collect();
    Ok(KmeansFit {
        codebook: Codebook::new(k, d, vectors)?,
        distortion_trace: trace,
    })
}

/// Value and gradients of the VQ training objective
/// `||sg[r] - q||^2 + beta ||sg[q] - r||^2`, averaged over segments.
///
/// Stop-gradient contract: the codebook term's gradient reaches only the
/// codebook entries, the commitment term's only the encoder outputs.
#[derive(Debug, Clone)]
pub struct VqLoss {
    pub total: f64,
    pub codebook_term: f64,
    pub commitment_term: f64,
    /// d loss / d r per segment (commitment path only), segment-major.
    pub grad_encoder: Vec<Vec<f64>>,
    /// d loss / d z_k accumulated per codebook entry (codebook path only).
    pub grad_codebook: Vec<Vec<f64>>,
}

/// Evaluates the VQ loss for encoder segments and their quantized
/// counterparts selected by `assignment`.
pub fn vqvae_loss(
    r_segments: &[Vec<f64>],
    assignment: &IndexMatrix,
    codebook: &Codebook,
    beta: f64,
) -> Result<VqLoss> {
    if beta < 0.0 {
        return Err(Error::invalid(format!("beta = {beta} must be >= 0")));
    }
    if r_segments.len() != assignment.indices.len() {
        return Err(Error::invalid("segment/assignment count mismatch"));
    }
    let d_z = codebook.code_dim();
    let count = r_segments.len().max(1) as f64;
    let mut codebook_term = 0.0;
    let mut commitment_term = 0.0;
    let mut grad_encoder = Vec::with_capacity(r_segments.len());
    let mut grad_codebook = vec![vec![0.0; d_z]; codebook.len()];
    for (seg, &k) in r_segments.iter().zip(&assignment.indices) {
        if seg.len() != d_z {
            return Err(Error::invalid("segment dimension mismatch"));
        }
        let z = codebook.entry(k);
        let mut g_enc = vec![0.0; d_z];
        for j in 0..d_z {
            let diff = seg[j] - z[j];
            codebook_term += diff * diff;
            commitment_term += diff * diff;
            // d/dz of (z - sg[r])^2, averaged
            grad_codebook[k][j] += 2.0 * (z[j] - seg[j]) / count;
            // d/dr of beta (r - sg[z])^2, averaged
            g_enc[j] = 2.0 * beta * diff / count;
        }
        grad_encoder.push(g_enc);
    }
    codebook_term /= count;
    commitment_term = beta * commitment_term / count;
    Ok(VqLoss {
        total: codebook_term + commitment_term,
        codebook_term,
        commitment_term,
        grad_encoder,
        grad_codebook,
    })
}
