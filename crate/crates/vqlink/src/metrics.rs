//! Reconstruction-quality metrics: BLEU, cosine sentence match with a
//! deterministic toy embedding, compression accounting, bit/symbol error
//! rates, and the float bit-flip fault injector.

use crate::error::{Error, Result};

/// Per-order BLEU breakdown for one hypothesis/reference pair.
#[derive(Debug, Clone)]
pub struct BleuReport {
    /// clipped n-gram precisions p_1..p_max_order (0 when no n-grams fit)
    pub precisions: Vec<f64>,
    /// brevity penalty, exp(1 - |ref|/|hyp|) when the hypothesis is
    /// shorter than the reference, else 1
    pub brevity_penalty: f64,
    /// geometric mean of the precisions with uniform weights, times BP;
    /// 0 whenever any contributing precision is 0 (no smoothing)
    pub combined: f64,
    /// BP * p_n for each order, i.e. the single-order scores
    pub per_order: Vec<f64>,
    /// set when the hypothesis is empty, which forces a 0 score
    pub empty_hypothesis: bool,
}

fn ngram_counts(tokens: &[String], n: usize) -> std::collections::HashMap<&[String], usize> {
    let mut map = std::collections::HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *map.entry(w).or_insert(0) += 1;
        }
    }
    map
}

/// Clipped-precision BLEU up to `max_order`, uniform weights, no
/// smoothing.
pub fn bleu(hypothesis: &[String], reference: &[String], max_order: usize) -> Result<BleuReport> {
    if max_order == 0 {
        return Err(Error::invalid("BLEU order must be >= 1"));
    }
    if hypothesis.is_empty() {
        return Ok(BleuReport {
            precisions: vec![0.0; max_order],
            brevity_penalty: 0.0,
            combined: 0.0,
            per_order: vec![0.0; max_order],
            empty_hypothesis: true,
        });
    }
    let mut precisions = Vec::with_capacity(max_order);
    for n in 1..=max_order {
        let hyp = ngram_counts(hypothesis, n);
        let rf = ngram_counts(reference, n);
        let total: usize = hyp.values().sum();
        if total == 0 {
            precisions.push(0.0);
            continue;
        }
        let matched: usize = hyp
            .iter()
            .map(|(g, &c)| c.min(rf.get(g).copied().unwrap_or(0)))
            .sum();
        precisions.push(matched as f64 / total as f64);
    }
    let brevity_penalty = if hypothesis.len() <= reference.len() {
        (1.0 - reference.len() as f64 / hypothesis.len() as f64).exp()
    } else {
        1.0
    };
    let per_order: Vec<f64> = precisions.iter().map(|p| brevity_penalty * p).collect();
    let combined = if precisions.iter().any(|&p| p == 0.0) {
        0.0
    } else {
        let log_mean: f64 =
            precisions.iter().map(|p| p.ln()).sum::<f64>() / max_order as f64;
        brevity_penalty * log_mean.exp()
    };
    Ok(BleuReport {
        precisions,
        brevity_penalty,
        combined,
        per_order,
        empty_hypothesis: false,
    })
}

/// Deterministic bag-of-tokens sentence embedding: each token hashes to a
/// bucket and a sign, the accumulated vector is L2-normalized. Dimension
/// must be at least 8.
pub fn toy_embed(tokens: &[String], dim: usize) -> Result<Vec<f64>> {
    if dim < 8 {
        return Err(Error::invalid(format!("embedding dim {dim} must be >= 8")));
    }
    let mut v = vec![0.0; dim];
    for tok in tokens {
        let h = fnv1a(tok.as_bytes());
        let bucket = (h % dim as u64) as usize;
        let sign = if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    Ok(v)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Cosine similarity of two embeddings; a zero-norm operand yields 0 and
/// sets the flag.
#[derive(Debug, Clone, Copy)]
pub struct MatchScore {
    pub value: f64,
    pub degenerate: bool,
}

pub fn sentence_match(a: &[f64], b: &[f64]) -> Result<MatchScore> {
    if a.len() != b.len() {
        return Err(Error::invalid("embedding dimension mismatch"));
    }
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(MatchScore {
            value: 0.0,
            degenerate: true,
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(MatchScore {
        value: dot / (na * nb),
        degenerate: false,
    })
}

/// How payload size is counted when forming the compression factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompressionAccounting {
    /// one transmitted word per code index: F = d_z (one d_z-dim code
    /// vector stands in for d_z latent words)
    Words,
    /// raw bits: a float latent word costs 32 bits, an index costs
    /// ceil(log2 K) bits, so F = 32 d_z / ceil(log2 K)
    Bits,
}

#[derive(Debug, Clone, Copy)]
pub struct CompressionReport {
    pub factor: f64,
    /// transmitted fraction 1/F
    pub rate: f64,
    pub accounting: CompressionAccounting,
}

/// Compression factor of index transport relative to sending the latent
/// directly.
pub fn compression_report(
    d_z: usize,
    codebook_size: usize,
    accounting: CompressionAccounting,
) -> Result<CompressionReport> {
    if d_z == 0 || codebook_size < 2 {
        return Err(Error::invalid("need d_z >= 1 and K >= 2"));
    }
    let index_bits = (usize::BITS - (codebook_size - 1).leading_zeros()) as f64;
    let factor = match accounting {
        CompressionAccounting::Words => d_z as f64,
        CompressionAccounting::Bits => 32.0 * d_z as f64 / index_bits,
    };
    Ok(CompressionReport {
        factor,
        rate: 1.0 / factor,
        accounting,
    })
}

/// Effectiveness of compression: semantic match per bit of compression,
/// match / log2(F). Requires F > 1.
pub fn compression_effectiveness(match_score: f64, factor: f64) -> Result<f64> {
    if factor <= 1.0 {
        return Err(Error::invalid(format!(
            "compression factor {factor} must exceed 1"
        )));
    }
    Ok(match_score / factor.log2())
}

/// Fraction of differing positions between equal-length sequences.
pub fn error_rate<T: PartialEq>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid("sequence length mismatch"));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let diff = a.iter().zip(b).filter(|(x, y)| x != y).count();
    Ok(diff as f64 / a.len() as f64)
}

/// Flips one bit of an IEEE-754 single. Position 0 is the sign bit,
/// position 1 the exponent MSB, position 31 the mantissa LSB.
pub fn float_bitflip(value: f32, position: u32) -> Result<f32> {
    if position > 31 {
        return Err(Error::invalid(format!("bit position {position} > 31")));
    }
    Ok(f32::from_bits(value.to_bits() ^ (1u32 << (31 - position))))
}
