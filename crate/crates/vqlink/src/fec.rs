//! Polar code construction, encoding, and successive-cancellation decoding.
//!
//! Construction ranks synthetic bit-channels by their Bhattacharyya
//! parameters under a binary-input AWGN channel at a fixed design SNR;
//! the worst `N - K` channels are frozen to zero. The generator is the
//! natural-order Arikan kernel power `F^{(x)n}` (no bit-reversal), and
//! decoding is plain successive cancellation with exact LLR combining.
//!
//! Rate matching to non-power-of-two coded lengths (960 in the default
//! configuration) is done by shortening: the tail coded bits are dropped
//! at the transmitter, their generating input bits are additionally
//! frozen so the dropped bits are known-zero, and the receiver re-inserts
//! them as strongly-saturated LLRs.

use crate::bits::BitVector;
use crate::error::{Error, Result};

/// LLR magnitude used for shortened (known-zero) positions and for
/// saturating noiseless test inputs. Large enough to dominate any channel
/// LLR while keeping `f`/`g` combining free of inf-minus-inf artifacts.
pub const SATURATED_LLR: f64 = 1e9;

/// An (N, K) polar code with a fixed frozen set.
#[derive(Debug, Clone)]
pub struct PolarCode {
    n: usize,
    k: usize,
    frozen: Vec<usize>,
    frozen_mask: Vec<bool>,
    design_snr_db: f64,
}

impl PolarCode {
    /// Constructs the code by Bhattacharyya ranking at `design_snr_db`.
    pub fn construct(n: usize, k: usize, design_snr_db: f64) -> Result<Self> {
        Self::construct_with_forced_frozen(n, k, design_snr_db, &[])
    }

    /// Constructs with extra indices forced into the frozen set (used by
    /// shortening). `k` counts information bits outside the forced set.
    pub fn construct_with_forced_frozen(
        n: usize,
        k: usize,
        design_snr_db: f64,
        forced_frozen: &[usize],
    ) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::invalid(format!("N = {n} is not a power of two >= 2")));
        }
        if k == 0 || k >= n {
            return Err(Error::invalid(format!("K = {k} out of range (0, {n})")));
        }
        let mut forced = vec![false; n];
        for &i in forced_frozen {
            if i >= n {
                return Err(Error::invalid(format!("forced frozen index {i} >= N")));
            }
            forced[i] = true;
        }
        let n_forced = forced.iter().filter(|&&f| f).count();
        if k + n_forced > n {
            return Err(Error::invalid("K plus forced frozen set exceeds N"));
        }

        let z = bhattacharyya_parameters(n, design_snr_db);
        // Rank the non-forced channels worst-first; ties broken by index
        // so the frozen set is deterministic.
        let mut order: Vec<usize> = (0..n).filter(|&i| !forced[i]).collect();
        order.sort_by(|&a, &b| z[b].partial_cmp(&z[a]).unwrap().then(a.cmp(&b)));

        let mut frozen_mask = forced;
        for &i in order.iter().take(n - k - n_forced) {
            frozen_mask[i] = true;
        }
        let frozen: Vec<usize> = (0..n).filter(|&i| frozen_mask[i]).collect();
        Ok(Self {
            n,
            k,
            frozen,
            frozen_mask,
            design_snr_db,
        })
    }

    pub fn block_length(&self) -> usize {
        self.n
    }

    pub fn message_length(&self) -> usize {
        self.k
    }

    pub fn design_snr_db(&self) -> f64 {
        self.design_snr_db
    }

    /// Sorted frozen indices.
    pub fn frozen_set(&self) -> &[usize] {
        &self.frozen
    }

    /// Sorted information (non-frozen) indices.
    pub fn information_set(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| !self.frozen_mask[i]).collect()
    }

    /// Encodes a K-bit message to an N-bit codeword.
    pub fn encode(&self, msg: &BitVector) -> Result<BitVector> {
        if msg.len() != self.k {
            return Err(Error::invalid(format!(
                "message length {} != K = {}",
                msg.len(),
                self.k
            )));
        }
        let mut u = vec![0u8; self.n];
        let mut m = msg.iter();
        for (i, slot) in u.iter_mut().enumerate() {
            if !self.frozen_mask[i] {
                *slot = m.next().unwrap();
            }
        }
        polar_transform(&mut u);
        BitVector::from_slice(&u)
    }

    /// Successive-cancellation decode. LLR convention: positive favors 0.
    pub fn decode_sc(&self, llrs: &[f64]) -> Result<BitVector> {
        if llrs.len() != self.n {
            return Err(Error::invalid(format!(
                "LLR length {} != N = {}",
                llrs.len(),
                self.n
            )));
        }
        let mut u = vec![0u8; self.n];
        let mut x = vec![0u8; self.n];
        sc_recurse(llrs, &self.frozen_mask, &mut u, &mut x);
        let msg: Vec<u8> = (0..self.n)
            .filter(|&i| !self.frozen_mask[i])
            .map(|i| u[i])
            .collect();
        BitVector::from_slice(&msg)
    }

    /// Writes the frozen set as one index per line.
    pub fn export_frozen_set(&self) -> String {
        let mut s = String::new();
        for &i in &self.frozen {
            s.push_str(&i.to_string());
            s.push('\n');
        }
        s
    }

    /// Rebuilds a code from an exported frozen set.
    pub fn from_frozen_set(n: usize, text: &str) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::invalid(format!("N = {n} is not a power of two >= 2")));
        }
        let mut frozen_mask = vec![false; n];
        let mut frozen = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let i: usize = line
                .parse()
                .map_err(|_| Error::Corrupt(format!("bad frozen index line: {line:?}")))?;
            if i >= n {
                return Err(Error::Corrupt(format!("frozen index {i} >= N = {n}")));
            }
            if !frozen_mask[i] {
                frozen_mask[i] = true;
                frozen.push(i);
            }
        }
        frozen.sort_unstable();
        let k = n - frozen.len();
        if k == 0 {
            return Err(Error::Corrupt("frozen set covers every index".into()));
        }
        Ok(Self {
            n,
            k,
            frozen,
            frozen_mask,
            design_snr_db: f64::NAN,
        })
    }
}

/// Bhattacharyya parameters of the N synthetic channels in natural order.
///
/// Starts from `Z = exp(-Es/N0)` for the physical BI-AWGN channel at the
/// design SNR, then applies the polarization recursion: index bit 0 maps
/// through the check combination `2Z - Z^2`, bit 1 through `Z^2`.
pub fn bhattacharyya_parameters(n: usize, design_snr_db: f64) -> Vec<f64> {
    let snr_linear = 10f64.powf(design_snr_db / 10.0);
    let mut z = vec![(-snr_linear).exp()];
    while z.len() < n {
        let mut next = Vec::with_capacity(z.len() * 2);
        for &zi in &z {
            next.push(2.0 * zi - zi * zi);
            next.push(zi * zi);
        }
        z = next;
    }
    z
}

/// In-place natural-order polar transform `u <- u * F^{(x)log2(N)}`.
pub fn polar_transform(u: &mut [u8]) {
    let n = u.len();
    debug_assert!(n.is_power_of_two());
    let mut len = 1;
    while len < n {
        let mut base = 0;
        while base < n {
            for j in base..base + len {
                u[j] ^= u[j + len];
            }
            base += 2 * len;
        }
        len *= 2;
    }
}

/// Exact check-node LLR combination, numerically stable form of
/// `2 atanh(tanh(a/2) tanh(b/2))`.
fn f_combine(a: f64, b: f64) -> f64 {
    let sign = if (a < 0.0) ^ (b < 0.0) { -1.0 } else { 1.0 };
    let m = a.abs().min(b.abs());
    sign * m + ((-(a + b).abs()).exp().ln_1p() - (-(a - b).abs()).exp().ln_1p())
}

fn g_combine(a: f64, b: f64, u: u8) -> f64 {
    if u == 0 {
        b + a
    } else {
        b - a
    }
}

/// Recursive SC pass over a (sub)tree. Fills the input-bit estimates `u`
/// and the re-encoded codeword estimate `x` for this subtree.
fn sc_recurse(llrs: &[f64], frozen: &[bool], u: &mut [u8], x: &mut [u8]) {
    let n = llrs.len();
    if n == 1 {
        let bit = if frozen[0] {
            0
        } else if llrs[0] >= 0.0 {
            // zero-LLR ties decide 0
            0
        } else {
            1
        };
        u[0] = bit;
        x[0] = bit;
        return;
    }
    let half = n / 2;
    let mut sub = vec![0.0; half];
    for i in 0..half {
        sub[i] = f_combine(llrs[i], llrs[i + half]);
    }
    let (u_left, u_right) = u.split_at_mut(half);
    let (x_left, x_right) = x.split_at_mut(half);
    sc_recurse(&sub, &frozen[..half], u_left, x_left);
    for i in 0..half {
        sub[i] = g_combine(llrs[i], llrs[i + half], x_left[i]);
    }
    sc_recurse(&sub, &frozen[half..], u_right, x_right);
    for i in 0..half {
        x_left[i] ^= x_right[i];
    }
}

/// Shortens a mother codeword by dropping its last bits.
pub fn rate_match(codeword: &BitVector, target_length: usize) -> Result<BitVector> {
    if target_length > codeword.len() {
        return Err(Error::invalid(format!(
            "target length {target_length} exceeds mother length {}",
            codeword.len()
        )));
    }
    Ok(codeword.slice(0, target_length))
}

/// Inverse of [`rate_match`] on the LLR side: pads the dropped tail with
/// saturated known-zero LLRs.
pub fn rate_dematch_llrs(llrs: &[f64], mother_length: usize) -> Result<Vec<f64>> {
    if llrs.len() > mother_length {
        return Err(Error::invalid(format!(
            "LLR length {} exceeds mother length {mother_length}",
            llrs.len()
        )));
    }
    let mut out = Vec::with_capacity(mother_length);
    out.extend_from_slice(llrs);
    out.resize(mother_length, SATURATED_LLR);
    Ok(out)
}

/// A mother polar code shortened to a non-power-of-two coded length.
///
/// The input bits that generate the dropped tail coded bits are forced
/// frozen, so every shortened bit is structurally zero and the receiver
/// may treat it as perfectly known.
#[derive(Debug, Clone)]
pub struct ShortenedPolarCode {
    mother: PolarCode,
    coded_length: usize,
}

impl ShortenedPolarCode {
    pub fn construct(coded_length: usize, k: usize, design_snr_db: f64) -> Result<Self> {
        let mother_n = coded_length
            .checked_next_power_of_two()
            .ok_or_else(|| Error::invalid("coded length too large"))?;
        if k >= coded_length {
            return Err(Error::invalid(format!(
                "K = {k} must be below coded length {coded_length}"
            )));
        }
        // With the lower-triangular natural-order generator, coded bit i
        // depends only on input bits whose index is a bit-superset of i,
        // hence >= i. Freezing inputs [coded_length, mother_n) zeroes the
        // dropped tail.
        let forced: Vec<usize> = (coded_length..mother_n).collect();
        let mother = PolarCode::construct_with_forced_frozen(mother_n, k, design_snr_db, &forced)?;
        Ok(Self {
            mother,
            coded_length,
        })
    }

    pub fn mother(&self) -> &PolarCode {
        &self.mother
    }

    pub fn coded_length(&self) -> usize {
        self.coded_length
    }

    pub fn message_length(&self) -> usize {
        self.mother.k
    }

    pub fn encode(&self, msg: &BitVector) -> Result<BitVector> {
        rate_match(&self.mother.encode(msg)?, self.coded_length)
    }

    pub fn decode_sc(&self, llrs: &[f64]) -> Result<BitVector> {
        if llrs.len() != self.coded_length {
            return Err(Error::invalid(format!(
                "LLR length {} != coded length {}",
                llrs.len(),
                self.coded_length
            )));
        }
        let padded = rate_dematch_llrs(llrs, self.mother.n)?;
        self.mother.decode_sc(&padded)
    }
}
