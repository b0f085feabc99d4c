//! End-to-end link: payload framing, bit transport over the coded
//! OFDM/MIMO physical layer, the three latent transport modes, and
//! per-sentence scoring.

use super::config::{ChannelKind, PipelineConfig, TransportMode};
use crate::bits::BitVector;
use crate::channel::{
    self, awgn, ebn0_to_noise_var, lmmse_stats, tdl_convolve, tdl_draw, tdl_frequency_response,
    CMat, TapRealization,
};
use crate::codec::{self, ToyCodecParams, ToyVocab, TrainConfig};
use crate::error::{Error, Result};
use crate::fec::ShortenedPolarCode;
use crate::metrics;
use crate::modem::Constellation;
use crate::ofdm::{self, GridShape, ResourceGrid};
use crate::rng::{self, Rng};
use crate::vq::{self, Codebook, IndexMatrix, LatentMatrix};
use num_complex::Complex64;

/// Width of the payload-length prefix carried in the first code block.
const LENGTH_PREFIX_BITS: usize = 16;
/// Receive-side clamp for non-finite or oversized decoded floats.
const DIRECT_CLAMP: f64 = 1e6;

/// Trained link-side state shared by every trial of a sweep.
#[derive(Debug, Clone)]
pub struct LinkArtifacts {
    pub params: ToyCodecParams,
    pub codebook: Codebook,
    pub vocab: ToyVocab,
    pub eval_corpus: Vec<String>,
}

/// Builds and trains the codec (and codebook, in index mode) from the
/// configured synthetic corpus, deterministically from `master_seed`.
pub fn build_artifacts(cfg: &PipelineConfig, master_seed: u64) -> Result<LinkArtifacts> {
    cfg.validate()?;
    let corpus = match &cfg.corpus_file {
        Some(path) => codec::load_corpus(path)?,
        None => codec::toy_corpus(
            cfg.corpus_sentences,
            &mut rng::stream(master_seed, "train-corpus", &[]),
        ),
    };
    let vocab = ToyVocab::from_corpus(&corpus, cfg.vocab_size)?;
    let mut params = ToyCodecParams::init(
        vocab.len(),
        cfg.d_e,
        cfg.d_r,
        &mut rng::stream(master_seed, "codec-init", &[]),
    );
    let mut codebook = Codebook::random(
        cfg.codebook_size,
        cfg.d_z,
        &mut rng::stream(master_seed, "codebook-init", &[]),
    )?;
    match cfg.mode {
        TransportMode::Vq => {
            let tc = TrainConfig {
                epochs: cfg.train_epochs,
                lr: cfg.learning_rate,
                beta: cfg.beta,
                flip_prob: cfg.flip_prob,
            };
            codec::train(
                &mut params,
                &mut codebook,
                &vocab,
                &corpus,
                &tc,
                &mut rng::stream(master_seed, "train", &[]),
            )?;
        }
        TransportMode::Direct | TransportMode::Tanh => {
            codec::train_plain(&mut params, &vocab, &corpus, cfg.train_epochs, cfg.learning_rate)?;
        }
    }
    let eval_corpus = match &cfg.corpus_file {
        // file-backed corpora evaluate on their leading sentences so the
        // vocabulary always covers them
        Some(_) => corpus[..cfg.eval_sentences.min(corpus.len())].to_vec(),
        None => codec::toy_corpus(
            cfg.eval_sentences,
            &mut rng::stream(master_seed, "eval-corpus", &[]),
        ),
    };
    Ok(LinkArtifacts {
        params,
        codebook,
        vocab,
        eval_corpus,
    })
}

/// Prepends the 16-bit payload length and zero-pads to whole code blocks.
pub fn frame_payload(payload: &BitVector, message_length: usize) -> Result<Vec<BitVector>> {
    if payload.len() >= 1 << LENGTH_PREFIX_BITS {
        return Err(Error::invalid(format!(
            "payload of {} bits exceeds the length prefix range",
            payload.len()
        )));
    }
    let mut framed = BitVector::new();
    framed.push_uint(payload.len() as u64, LENGTH_PREFIX_BITS);
    framed.extend_from(payload);
    while framed.len() % message_length != 0 {
        framed.push(0);
    }
    let mut blocks = Vec::with_capacity(framed.len() / message_length);
    for b in 0..framed.len() / message_length {
        blocks.push(framed.slice(b * message_length, (b + 1) * message_length));
    }
    Ok(blocks)
}

/// Inverse of [`frame_payload`] on decoded blocks. A corrupted length
/// prefix is clamped to the bits actually present rather than failing.
pub fn deframe_payload(blocks: &[BitVector]) -> Result<BitVector> {
    let mut framed = BitVector::new();
    for b in blocks {
        framed.extend_from(b);
    }
    if framed.len() < LENGTH_PREFIX_BITS {
        return Err(Error::Corrupt("frame shorter than the length prefix".into()));
    }
    let declared = framed.read_uint(0, LENGTH_PREFIX_BITS)? as usize;
    let len = declared.min(framed.len() - LENGTH_PREFIX_BITS);
    Ok(framed.slice(LENGTH_PREFIX_BITS, LENGTH_PREFIX_BITS + len))
}

/// Per-antenna-pair impulse responses for one transmission (block
/// fading: one draw reused for the whole grid).
fn draw_channel(
    kind: &ChannelKind,
    num_streams: usize,
    rng: &mut Rng,
) -> Vec<Vec<Vec<TapRealization>>> {
    let mut h = Vec::with_capacity(num_streams);
    for r in 0..num_streams {
        let mut row = Vec::with_capacity(num_streams);
        for t in 0..num_streams {
            row.push(match kind {
                ChannelKind::Awgn => {
                    if r == t {
                        vec![TapRealization {
                            delay_samples: 0,
                            coefficient: Complex64::new(1.0, 0.0),
                        }]
                    } else {
                        Vec::new()
                    }
                }
                ChannelKind::RayleighFlat => vec![TapRealization {
                    delay_samples: 0,
                    coefficient: channel::complex_gaussian(rng),
                }],
                ChannelKind::Tdl(profile) => tdl_draw(profile, rng),
            });
        }
        h.push(row);
    }
    h
}

/// One grid over the air: OFDM, fading, noise, OFDM demodulation, and
/// per-resource-element LMMSE equalization with bias correction.
/// Returns the equalized payload symbols (fill order), the matching
/// per-symbol effective noise variances, and the symbol-error count
/// against the transmitted constellation points.
fn transport_grid(
    cfg: &PipelineConfig,
    constellation: &Constellation,
    symbols: &[Complex64],
    noise_var: f64,
    rng: &mut Rng,
) -> Result<(Vec<Complex64>, Vec<f64>, usize)> {
    let shape = GridShape {
        num_subcarriers: cfg.num_subcarriers,
        num_ofdm_symbols: cfg.num_ofdm_symbols,
        num_streams: cfg.num_streams,
    };
    let grid = ResourceGrid::map(symbols, shape)?;
    let tx_time = ofdm::modulate(&grid, cfg.fft_size, cfg.cp_length)?;
    let taps = draw_channel(&cfg.channel, cfg.num_streams, rng);
    let samples_per_stream = tx_time[0].len();
    let mut rx_time = Vec::with_capacity(cfg.num_streams);
    for row in taps.iter() {
        let mut acc = vec![Complex64::new(0.0, 0.0); samples_per_stream];
        for (t, pair) in row.iter().enumerate() {
            if pair.is_empty() {
                continue;
            }
            for (a, v) in acc.iter_mut().zip(tdl_convolve(&tx_time[t], pair)) {
                *a += v;
            }
        }
        awgn(&mut acc, noise_var, rng);
        rx_time.push(acc);
    }
    let rx_grid = ofdm::demodulate(&rx_time, cfg.fft_size, cfg.cp_length, shape, grid.occupied())?;

    // per-subcarrier frequency responses; the channel is constant over
    // the transmission, so each subcarrier needs one LMMSE solve
    let freq: Vec<Vec<Vec<Complex64>>> = taps
        .iter()
        .map(|row| {
            row.iter()
                .map(|pair| tdl_frequency_response(pair, cfg.fft_size))
                .collect()
        })
        .collect();
    let s = cfg.num_streams;
    let mut eq = vec![Complex64::new(0.0, 0.0); shape.capacity()];
    let mut nv = vec![noise_var; shape.capacity()];
    for k in 0..cfg.num_subcarriers {
        let bin = ofdm::active_bin(k, cfg.num_subcarriers, cfg.fft_size);
        let mut h = CMat::zeros(s, s);
        for r in 0..s {
            for t in 0..s {
                h.set(r, t, freq[r][t][bin]);
            }
        }
        let stats = lmmse_stats(&h, noise_var)?;
        for sym in 0..cfg.num_ofdm_symbols {
            let y: Vec<Complex64> = (0..s).map(|r| rx_grid.get(r, sym, k)).collect();
            let xh = stats.filter.mul_vec(&y)?;
            for i in 0..s {
                let idx = (i * cfg.num_ofdm_symbols + sym) * cfg.num_subcarriers + k;
                let mu = stats.bias[i];
                if mu.norm_sqr() < 1e-30 {
                    // stream unobservable in this fade: zero symbol,
                    // effectively infinite noise so its LLRs vanish
                    eq[idx] = Complex64::new(0.0, 0.0);
                    nv[idx] = 1e30;
                } else {
                    eq[idx] = xh[i] / mu;
                    nv[idx] = stats.effective_noise_var(i).max(1e-30);
                }
            }
        }
    }
    let occupied = grid.occupied();
    let eq_payload: Vec<Complex64> = eq[..occupied].to_vec();
    let nv_payload: Vec<f64> = nv[..occupied].to_vec();
    let mut symbol_errors = 0usize;
    for (tx, rx) in symbols.iter().zip(&eq_payload) {
        if constellation.nearest_label(*tx) != constellation.nearest_label(*rx) {
            symbol_errors += 1;
        }
    }
    Ok((eq_payload, nv_payload, symbol_errors))
}

/// Bit-transport result over the whole chain.
#[derive(Debug, Clone)]
pub struct PhyOutcome {
    /// recovered payload bits (length from the decoded prefix, clamped)
    pub bits: BitVector,
    /// uncoded symbol error rate after equalization
    pub ser: f64,
    /// payload bit error rate after decoding; missing tail bits count
    /// as errors
    pub ber: f64,
}

/// Carries a payload bit string across the full physical layer at the
/// given Eb/N0 and measures error rates against the transmitted copy.
pub fn phy_transport(
    cfg: &PipelineConfig,
    payload: &BitVector,
    ebn0_db: f64,
    rng: &mut Rng,
) -> Result<PhyOutcome> {
    let code = ShortenedPolarCode::construct(cfg.coded_length, cfg.message_length, cfg.design_snr_db)?;
    let constellation = Constellation::new(cfg.bits_per_symbol)?;
    let noise_var = ebn0_to_noise_var(ebn0_db, cfg.bits_per_symbol, cfg.coderate())?;

    let blocks = frame_payload(payload, cfg.message_length)?;
    let mut coded = BitVector::new();
    for b in &blocks {
        coded.extend_from(&code.encode(b)?);
    }
    let symbols = constellation.map(&coded)?;

    let shape_capacity = cfg.num_subcarriers * cfg.num_ofdm_symbols * cfg.num_streams;
    let mut eq_symbols = Vec::with_capacity(symbols.len());
    let mut noise_vars = Vec::with_capacity(symbols.len());
    let mut symbol_errors = 0usize;
    for chunk in symbols.chunks(shape_capacity) {
        let (eq, nv, errs) = transport_grid(cfg, &constellation, chunk, noise_var, rng)?;
        eq_symbols.extend(eq);
        noise_vars.extend(nv);
        symbol_errors += errs;
    }
    let llrs = constellation.demap_llr_per_symbol(&eq_symbols, &noise_vars)?;

    let mut decoded_blocks = Vec::with_capacity(blocks.len());
    for b in 0..blocks.len() {
        let slice = &llrs[b * cfg.coded_length..(b + 1) * cfg.coded_length];
        decoded_blocks.push(code.decode_sc(slice)?);
    }
    let rx_payload = deframe_payload(&decoded_blocks)?;

    let mut bit_errors = 0usize;
    for i in 0..payload.len() {
        let rx = if i < rx_payload.len() { rx_payload[i] } else { 1 - payload[i] };
        if rx != payload[i] {
            bit_errors += 1;
        }
    }
    let ber = if payload.is_empty() {
        0.0
    } else {
        bit_errors as f64 / payload.len() as f64
    };
    Ok(PhyOutcome {
        bits: rx_payload,
        ser: symbol_errors as f64 / symbols.len() as f64,
        ber,
    })
}

/// Serializes latent rows per the transport mode. In index mode also
/// returns the transmitted index matrix for index-error accounting.
pub fn latents_to_payload(
    cfg: &PipelineConfig,
    codebook: &Codebook,
    r: &LatentMatrix,
) -> Result<(BitVector, Option<IndexMatrix>)> {
    match cfg.mode {
        TransportMode::Direct => {
            let mut bits = BitVector::new();
            for &v in &r.values {
                bits.push_uint((v as f32).to_bits() as u64, 32);
            }
            Ok((bits, None))
        }
        TransportMode::Tanh => {
            let mut bits = BitVector::new();
            for &v in &r.values {
                let clamped = v.clamp(-1.0, 1.0);
                let u = ((clamped + 1.0) / 2.0 * 65535.0).round() as u64;
                bits.push_uint(u, 16);
            }
            Ok((bits, None))
        }
        TransportMode::Vq => {
            let segs = vq::segment(r, cfg.d_z)?;
            let t = vq::quantize(&segs, codebook, r.n)?;
            let bits = vq::pack_indices(&t, codebook);
            Ok((bits, Some(t)))
        }
    }
}

/// Inverse of [`latents_to_payload`] on (possibly corrupted) received
/// bits. Shapes are recovered from the bit count; trailing fragments
/// that no longer form a whole latent row are dropped. Direct-mode
/// floats that decode to non-finite or oversized values are clamped.
pub fn payload_to_latents(
    cfg: &PipelineConfig,
    codebook: &Codebook,
    bits: &BitVector,
) -> Result<(LatentMatrix, Option<IndexMatrix>)> {
    match cfg.mode {
        TransportMode::Direct => {
            let n = bits.len() / 32 / cfg.d_r;
            let mut values = Vec::with_capacity(n * cfg.d_r);
            for i in 0..n * cfg.d_r {
                let raw = bits.read_uint(i * 32, 32)? as u32;
                let v = f32::from_bits(raw) as f64;
                values.push(if v.is_nan() {
                    0.0
                } else {
                    v.clamp(-DIRECT_CLAMP, DIRECT_CLAMP)
                });
            }
            Ok((LatentMatrix::new(n, cfg.d_r, values)?, None))
        }
        TransportMode::Tanh => {
            let n = bits.len() / 16 / cfg.d_r;
            let mut values = Vec::with_capacity(n * cfg.d_r);
            for i in 0..n * cfg.d_r {
                let u = bits.read_uint(i * 16, 16)? as f64;
                values.push(u / 65535.0 * 2.0 - 1.0);
            }
            Ok((LatentMatrix::new(n, cfg.d_r, values)?, None))
        }
        TransportMode::Vq => {
            let width = codebook.index_bits();
            let s = cfg.d_r / cfg.d_z;
            let n = bits.len() / width / s;
            let report = vq::unpack_indices(bits, codebook, n, s)?;
            let r = vq::dequantize(&report.indices, codebook, cfg.d_r)?;
            Ok((r, Some(report.indices)))
        }
    }
}

/// Scores for one sentence through the full chain.
#[derive(Debug, Clone, Copy)]
pub struct SentenceOutcome {
    pub token_accuracy: f64,
    /// cumulative BLEU-1..4
    pub bleu: [f64; 4],
    pub match_score: f64,
    pub ber: f64,
    pub ser: f64,
    /// NaN outside index mode
    pub index_error_rate: f64,
}

/// Runs one sentence end to end at the given Eb/N0.
pub fn run_sentence(
    cfg: &PipelineConfig,
    art: &LinkArtifacts,
    sentence: &str,
    ebn0_db: f64,
    rng: &mut Rng,
) -> Result<SentenceOutcome> {
    let ids = art.vocab.tokenize(sentence);
    if ids.is_empty() {
        return Err(Error::invalid("sentence has no tokens"));
    }
    let r = art.params.encode(&ids)?;
    let (payload, tx_indices) = latents_to_payload(cfg, &art.codebook, &r)?;
    let phy = phy_transport(cfg, &payload, ebn0_db, rng)?;
    let (r_hat, rx_indices) = payload_to_latents(cfg, &art.codebook, &phy.bits)?;

    let index_error_rate = match (&tx_indices, &rx_indices) {
        (Some(tx), Some(rx)) => {
            let mut errors = 0usize;
            for (i, &t) in tx.indices.iter().enumerate() {
                let got = rx.indices.get(i).copied();
                if got != Some(t) {
                    errors += 1;
                }
            }
            errors as f64 / tx.indices.len() as f64
        }
        _ => f64::NAN,
    };

    let out_ids = if r_hat.n > 0 {
        art.params.decode(&r_hat)?
    } else {
        Vec::new()
    };
    let hits = out_ids.iter().zip(&ids).filter(|(a, b)| a == b).count();
    let token_accuracy = hits as f64 / ids.len() as f64;

    let reference: Vec<String> = ids.iter().map(|&i| art.vocab.token(i).to_string()).collect();
    let hypothesis: Vec<String> = out_ids
        .iter()
        .map(|&i| art.vocab.token(i).to_string())
        .collect();
    let mut bleu = [0.0; 4];
    for (n, slot) in bleu.iter_mut().enumerate() {
        *slot = metrics::bleu(&hypothesis, &reference, n + 1)?.combined;
    }
    let ea = metrics::toy_embed(&hypothesis, 64)?;
    let eb = metrics::toy_embed(&reference, 64)?;
    let match_score = metrics::sentence_match(&ea, &eb)?.value;

    Ok(SentenceOutcome {
        token_accuracy,
        bleu,
        match_score,
        ber: phy.ber,
        ser: phy.ser,
        index_error_rate,
    })
}

/// Word-accounting compression factor of the configured mode.
pub fn compression_factor(cfg: &PipelineConfig) -> f64 {
    match cfg.mode {
        TransportMode::Direct => 1.0,
        // 32-bit floats become 16-bit fixed point
        TransportMode::Tanh => 2.0,
        // one index replaces d_z latent words
        TransportMode::Vq => cfg.d_z as f64,
    }
}
