//! Trainable toy text codec: embedding + one-layer tanh encoder to a
//! latent row per token, and a linear softmax decoder back to token ids.
//!
//! Training pushes latents through segmentation, codebook quantization,
//! and an optional index-corruption hook (noise tuning), then applies a
//! straight-through estimator so the cross-entropy gradient reaches the
//! encoder as if the quantizer were the identity. Plain gradient descent
//! updates every parameter block, codebook included.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::vq::{self, Codebook, IndexMatrix, LatentMatrix};
use rand::Rng as _;
use std::collections::HashMap;

/// Reserved padding token id.
pub const PAD_ID: usize = 0;
/// Reserved unknown-token id.
pub const UNK_ID: usize = 1;

/// Whitespace/lowercase word tokenizer shared by the codec and metrics.
pub fn tokenize_words(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_lowercase()).collect()
}

/// Closed vocabulary with reserved PAD and UNK entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl ToyVocab {
    /// Builds a vocabulary from corpus sentences, keeping the most
    /// frequent words (ties by first appearance) up to `max_size` total
    /// entries including PAD and UNK.
    pub fn from_corpus(sentences: &[String], max_size: usize) -> Result<Self> {
        if max_size < 3 {
            return Err(Error::invalid("vocabulary size must be >= 3"));
        }
        let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
        let mut order = 0usize;
        for s in sentences {
            for w in tokenize_words(s) {
                let e = counts.entry(w).or_insert((0, order));
                e.0 += 1;
                order += 1;
            }
        }
        let mut words: Vec<(String, (usize, usize))> = counts.into_iter().collect();
        words.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
        let mut tokens = vec!["<pad>".to_string(), "<unk>".to_string()];
        tokens.extend(words.into_iter().take(max_size - 2).map(|(w, _)| w));
        Self::from_tokens(tokens)
    }

    /// Builds from an explicit token list whose first two entries are the
    /// PAD and UNK markers.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 3 {
            return Err(Error::invalid("vocabulary needs PAD, UNK and a word"));
        }
        let mut index = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK_ID)
    }

    /// Lowercases, splits on whitespace, and maps unknown words to UNK.
    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        tokenize_words(text).iter().map(|w| self.id(w)).collect()
    }

    /// Joins token strings with single spaces.
    pub fn detokenize(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// All trainable parameter blocks, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyCodecParams {
    pub vocab_size: usize,
    pub d_e: usize,
    pub d_r: usize,
    /// vocab_size x d_e token embeddings
    pub e: Vec<f64>,
    /// d_e x d_r encoder weights
    pub w1: Vec<f64>,
    /// d_r encoder bias
    pub b1: Vec<f64>,
    /// d_r x vocab_size decoder weights
    pub w2: Vec<f64>,
    /// vocab_size decoder bias
    pub b2: Vec<f64>,
}

impl ToyCodecParams {
    /// Small uniform random initialization.
    pub fn init(vocab_size: usize, d_e: usize, d_r: usize, rng: &mut Rng) -> Self {
        let u = |rng: &mut Rng, n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect()
        };
        Self {
            vocab_size,
            d_e,
            d_r,
            e: u(rng, vocab_size * d_e),
            w1: u(rng, d_e * d_r),
            b1: vec![0.0; d_r],
            w2: u(rng, d_r * vocab_size),
            b2: vec![0.0; vocab_size],
        }
    }

    /// Encodes token ids to latent rows: r_i = tanh(E[id_i] W1 + b1).
    pub fn encode(&self, ids: &[usize]) -> Result<LatentMatrix> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.vocab_size) {
            return Err(Error::invalid(format!("token id {bad} out of range")));
        }
        let mut values = Vec::with_capacity(ids.len() * self.d_r);
        for &id in ids {
            let emb = &self.e[id * self.d_e..(id + 1) * self.d_e];
            for j in 0..self.d_r {
                let mut acc = self.b1[j];
                for (k, &x) in emb.iter().enumerate() {
                    acc += x * self.w1[k * self.d_r + j];
                }
                values.push(acc.tanh());
            }
        }
        LatentMatrix::new(ids.len(), self.d_r, values)
    }

    /// Decoder logits per latent row: logits_i = r_i W2 + b2.
    pub fn decode_logits(&self, r_hat: &LatentMatrix) -> Result<Vec<Vec<f64>>> {
        if r_hat.d_r != self.d_r {
            return Err(Error::invalid("latent dimension mismatch"));
        }
        let mut out = Vec::with_capacity(r_hat.n);
        for i in 0..r_hat.n {
            let row = r_hat.row(i);
            let mut logits = self.b2.clone();
            for (j, &r) in row.iter().enumerate() {
                for v in 0..self.vocab_size {
                    logits[v] += r * self.w2[j * self.vocab_size + v];
                }
            }
            out.push(logits);
        }
        Ok(out)
    }

    /// Argmax decode; ties break to the lowest token id.
    pub fn decode(&self, r_hat: &LatentMatrix) -> Result<Vec<usize>> {
        Ok(self
            .decode_logits(r_hat)?
            .iter()
            .map(|logits| argmax_lowest(logits))
            .collect())
    }
}

fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Cross-entropy value and gradient with respect to the logits.
#[derive(Debug, Clone)]
pub struct CeLoss {
    /// mean over positions of -log softmax(target)
    pub value: f64,
    /// (softmax - onehot) / n, same shape as the logits
    pub grad: Vec<Vec<f64>>,
}

/// Mean categorical cross-entropy over positions (log-sum-exp stable).
pub fn ce_loss(logits: &[Vec<f64>], targets: &[usize]) -> Result<CeLoss> {
    if logits.len() != targets.len() || logits.is_empty() {
        return Err(Error::invalid("logits/targets shape mismatch or empty"));
    }
    let n = logits.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &t) in logits.iter().zip(targets) {
        if t >= row.len() {
            return Err(Error::invalid("target id out of range"));
        }
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|&l| (l - m).exp()).sum::<f64>().ln();
        value += (lse - row[t]) / n;
        let mut g: Vec<f64> = row.iter().map(|&l| (l - lse).exp() / n).collect();
        g[t] -= 1.0 / n;
        grad.push(g);
    }
    Ok(CeLoss { value, grad })
}

/// Replaces each index, independently with probability `p`, by a uniform
/// draw over the other K-1 entries. With p = 1 every index changes.
pub fn surrogate_corrupt(t: &mut IndexMatrix, k: usize, p: f64, rng: &mut Rng) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("flip probability {p} not in [0, 1]")));
    }
    if k < 2 {
        return Err(Error::invalid("need K >= 2"));
    }
    for idx in &mut t.indices {
        if rng.gen_bool(p) {
            let draw = rng.gen_range(0..k - 1);
            *idx = if draw >= *idx { draw + 1 } else { draw };
        }
    }
    Ok(())
}

/// Gradients for one training step, same shapes as the parameter blocks.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub e: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// per-entry codebook gradients
    pub codebook: Vec<Vec<f64>>,
}

/// Scalars observed during one step.
#[derive(Debug, Clone, Copy)]
pub struct StepStats {
    pub loss: f64,
    pub ce: f64,
    pub vq_codebook: f64,
    pub vq_commitment: f64,
    /// fraction of indices changed by the corruption hook
    pub index_error_rate: f64,
}

/// One forward/backward pass over a token-id sequence. The corruption
/// hook, when present, mutates the transmitted index matrix in place
/// (noise tuning); commitment and codebook terms always use the clean
/// transmit-side assignment. Returns the gradients without applying them.
pub fn compute_gradients(
    params: &ToyCodecParams,
    codebook: &Codebook,
    ids: &[usize],
    beta: f64,
    corrupt: Option<&mut dyn FnMut(&mut IndexMatrix) -> Result<()>>,
) -> Result<(Gradients, StepStats)> {
    if ids.is_empty() {
        return Err(Error::invalid("empty training sequence"));
    }
    let d_z = codebook.code_dim();
    let d_r = params.d_r;
    let v = params.vocab_size;
    let n = ids.len();

    // forward
    let r = params.encode(ids)?;
    let segs = vq::segment(&r, d_z)?;
    let clean = vq::quantize(&segs, codebook, n)?;
    let mut sent = clean.clone();
    if let Some(hook) = corrupt {
        hook(&mut sent)?;
    }
    let index_error_rate = crate::metrics::error_rate(&clean.indices, &sent.indices)?;
    let r_hat = vq::dequantize(&sent, codebook, d_r)?;
    let logits = params.decode_logits(&r_hat)?;
    let ce = ce_loss(&logits, ids)?;
    let vq_loss = vq::vqvae_loss(&segs, &clean, codebook, beta)?;
    let loss = ce.value + vq_loss.total;
    if !loss.is_finite() {
        return Err(Error::Training(format!("non-finite loss {loss}")));
    }

    // backward: decoder
    let mut g_w2 = vec![0.0; d_r * v];
    let mut g_b2 = vec![0.0; v];
    let mut d_r_hat = vec![0.0; n * d_r];
    for i in 0..n {
        let x = r_hat.row(i);
        let dl = &ce.grad[i];
        for (t, &g) in dl.iter().enumerate() {
            g_b2[t] += g;
            for j in 0..d_r {
                g_w2[j * v + t] += x[j] * g;
                d_r_hat[i * d_r + j] += g * params.w2[j * v + t];
            }
        }
    }

    // straight-through: gradient at the dequantized latent is copied to
    // the encoder output, then the commitment term is added
    let s = d_r / d_z;
    let mut d_r_enc = d_r_hat;
    for (seg_idx, g_seg) in vq_loss.grad_encoder.iter().enumerate() {
        let base = seg_idx * d_z;
        let row = base / d_r;
        let off = base % d_r;
        for j in 0..d_z {
            d_r_enc[row * d_r + off + j] += g_seg[j];
        }
    }
    let _ = s;

    // backward: tanh encoder
    let mut g_e = vec![0.0; params.vocab_size * params.d_e];
    let mut g_w1 = vec![0.0; params.d_e * d_r];
    let mut g_b1 = vec![0.0; d_r];
    for (i, &id) in ids.iter().enumerate() {
        let row = r.row(i);
        let emb = &params.e[id * params.d_e..(id + 1) * params.d_e];
        for j in 0..d_r {
            let dpre = d_r_enc[i * d_r + j] * (1.0 - row[j] * row[j]);
            g_b1[j] += dpre;
            for k in 0..params.d_e {
                g_w1[k * d_r + j] += emb[k] * dpre;
                g_e[id * params.d_e + k] += params.w1[k * d_r + j] * dpre;
            }
        }
    }

    Ok((
        Gradients {
            e: g_e,
            w1: g_w1,
            b1: g_b1,
            w2: g_w2,
            b2: g_b2,
            codebook: vq_loss.grad_codebook,
        },
        StepStats {
            loss,
            ce: ce.value,
            vq_codebook: vq_loss.codebook_term,
            vq_commitment: vq_loss.commitment_term,
            index_error_rate,
        },
    ))
}

/// Computes gradients and applies one plain gradient-descent update with
/// rate `lr` to every parameter block and the codebook.
pub fn train_step(
    params: &mut ToyCodecParams,
    codebook: &mut Codebook,
    ids: &[usize],
    beta: f64,
    lr: f64,
    corrupt: Option<&mut dyn FnMut(&mut IndexMatrix) -> Result<()>>,
) -> Result<StepStats> {
    if lr < 0.0 {
        return Err(Error::invalid(format!("learning rate {lr} must be >= 0")));
    }
    let (g, stats) = compute_gradients(params, codebook, ids, beta, corrupt)?;
    let apply = |block: &mut [f64], grad: &[f64]| {
        for (p, d) in block.iter_mut().zip(grad) {
            *p -= lr * d;
        }
    };
    apply(&mut params.e, &g.e);
    apply(&mut params.w1, &g.w1);
    apply(&mut params.b1, &g.b1);
    apply(&mut params.w2, &g.w2);
    apply(&mut params.b2, &g.b2);
    for (k, grad) in g.codebook.iter().enumerate() {
        apply(codebook.entry_mut(k), grad);
    }
    Ok(stats)
}

/// One gradient-descent step of the plain autoencoder (no quantizer in
/// the loop): cross-entropy of decode(encode(ids)) only. Used by
/// transport modes that send the latent itself rather than indices.
pub fn train_step_plain(params: &mut ToyCodecParams, ids: &[usize], lr: f64) -> Result<f64> {
    if ids.is_empty() {
        return Err(Error::invalid("empty training sequence"));
    }
    if lr < 0.0 {
        return Err(Error::invalid(format!("learning rate {lr} must be >= 0")));
    }
    let d_r = params.d_r;
    let v = params.vocab_size;
    let n = ids.len();
    let r = params.encode(ids)?;
    let logits = params.decode_logits(&r)?;
    let ce = ce_loss(&logits, ids)?;
    if !ce.value.is_finite() {
        return Err(Error::Training(format!("non-finite loss {}", ce.value)));
    }
    let mut g_w2 = vec![0.0; d_r * v];
    let mut g_b2 = vec![0.0; v];
    let mut d_r_enc = vec![0.0; n * d_r];
    for i in 0..n {
        let x = r.row(i);
        for (t, &g) in ce.grad[i].iter().enumerate() {
            g_b2[t] += g;
            for j in 0..d_r {
                g_w2[j * v + t] += x[j] * g;
                d_r_enc[i * d_r + j] += g * params.w2[j * v + t];
            }
        }
    }
    let mut g_e = vec![0.0; params.vocab_size * params.d_e];
    let mut g_w1 = vec![0.0; params.d_e * d_r];
    let mut g_b1 = vec![0.0; d_r];
    for (i, &id) in ids.iter().enumerate() {
        let row = r.row(i);
        let emb = &params.e[id * params.d_e..(id + 1) * params.d_e];
        for j in 0..d_r {
            let dpre = d_r_enc[i * d_r + j] * (1.0 - row[j] * row[j]);
            g_b1[j] += dpre;
            for k in 0..params.d_e {
                g_w1[k * d_r + j] += emb[k] * dpre;
                g_e[id * params.d_e + k] += params.w1[k * d_r + j] * dpre;
            }
        }
    }
    let apply = |block: &mut [f64], grad: &[f64]| {
        for (p, d) in block.iter_mut().zip(grad) {
            *p -= lr * d;
        }
    };
    apply(&mut params.e, &g_e);
    apply(&mut params.w1, &g_w1);
    apply(&mut params.b1, &g_b1);
    apply(&mut params.w2, &g_w2);
    apply(&mut params.b2, &g_b2);
    Ok(ce.value)
}

/// Epoch loop for [`train_step_plain`]; returns per-epoch mean loss.
pub fn train_plain(
    params: &mut ToyCodecParams,
    vocab: &ToyVocab,
    corpus: &[String],
    epochs: usize,
    lr: f64,
) -> Result<Vec<f64>> {
    if corpus.is_empty() {
        return Err(Error::invalid("empty training corpus"));
    }
    let mut trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let mut acc = 0.0;
        let mut count = 0usize;
        for sentence in corpus {
            let ids = vocab.tokenize(sentence);
            if ids.is_empty() {
                continue;
            }
            acc += train_step_plain(params, &ids, lr)?;
            count += 1;
        }
        if count == 0 {
            return Err(Error::invalid("corpus contains no tokens"));
        }
        trace.push(acc / count as f64);
    }
    Ok(trace)
}

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub beta: f64,
    /// surrogate index-flip probability; 0 disables corruption
    pub flip_prob: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            lr: 0.3,
            beta: 0.25,
            flip_prob: 0.0,
        }
    }
}

/// Runs `epochs` passes over the corpus, one gradient step per sentence.
/// Returns the mean loss of each epoch.
pub fn train(
    params: &mut ToyCodecParams,
    codebook: &mut Codebook,
    vocab: &ToyVocab,
    corpus: &[String],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if corpus.is_empty() {
        return Err(Error::invalid("empty training corpus"));
    }
    let k = codebook.len();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let mut acc = 0.0;
        let mut count = 0usize;
        for sentence in corpus {
            let ids = vocab.tokenize(sentence);
            if ids.is_empty() {
                continue;
            }
            let stats = if cfg.flip_prob > 0.0 {
                let mut hook =
                    |t: &mut IndexMatrix| surrogate_corrupt(t, k, cfg.flip_prob, rng);
                train_step(params, codebook, &ids, cfg.beta, cfg.lr, Some(&mut hook))?
            } else {
                train_step(params, codebook, &ids, cfg.beta, cfg.lr, None)?
            };
            acc += stats.loss;
            count += 1;
        }
        if count == 0 {
            return Err(Error::invalid("corpus contains no tokens"));
        }
        trace.push(acc / count as f64);
    }
    Ok(trace)
}

/// Greedy reconstruction accuracy of the codec through its own quantizer
/// on a corpus, without channel effects.
pub fn clean_token_accuracy(
    params: &ToyCodecParams,
    codebook: &Codebook,
    vocab: &ToyVocab,
    corpus: &[String],
) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for s in corpus {
        let ids = vocab.tokenize(s);
        if ids.is_empty() {
            continue;
        }
        let r = params.encode(&ids)?;
        let segs = vq::segment(&r, codebook.code_dim())?;
        let t = vq::quantize(&segs, codebook, ids.len())?;
        let r_hat = vq::dequantize(&t, codebook, params.d_r)?;
        let out = params.decode(&r_hat)?;
        hits += out.iter().zip(&ids).filter(|(a, b)| a == b).count();
        total += ids.len();
    }
    if total == 0 {
        return Err(Error::invalid("no tokens to score"));
    }
    Ok(hits as f64 / total as f64)
}

const CHECKPOINT_MAGIC: &str = "toycodec-v1";

/// Serializes vocabulary, parameters, and codebook as versioned text.
/// Floats use shortest round-trip formatting, so a reload is bit-exact.
pub fn checkpoint_to_string(
    params: &ToyCodecParams,
    codebook: &Codebook,
    vocab: &ToyVocab,
) -> String {
    let mut s = String::new();
    s.push_str(CHECKPOINT_MAGIC);
    s.push('\n');
    s.push_str(&format!("vocab {}\n", vocab.len()));
    for t in vocab.tokens() {
        s.push_str(t);
        s.push('\n');
    }
    s.push_str(&format!("dims {} {} {}\n", params.vocab_size, params.d_e, params.d_r));
    let row = |s: &mut String, name: &str, data: &[f64]| {
        s.push_str(name);
        s.push(' ');
        let vals: Vec<String> = data.iter().map(|v| format!("{v}")).collect();
        s.push_str(&vals.join(" "));
        s.push('\n');
    };
    row(&mut s, "e", &params.e);
    row(&mut s, "w1", &params.w1);
    row(&mut s, "b1", &params.b1);
    row(&mut s, "w2", &params.w2);
    row(&mut s, "b2", &params.b2);
    s.push_str("codebook\n");
    s.push_str(&codebook.to_file_string());
    s
}

/// Inverse of [`checkpoint_to_string`].
pub fn checkpoint_from_string(text: &str) -> Result<(ToyCodecParams, Codebook, ToyVocab)> {
    let mut lines = text.lines();
    let magic = lines.next().unwrap_or("");
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Corrupt(format!("unknown checkpoint header {magic:?}")));
    }
    let vocab_line = lines
        .next()
        .ok_or_else(|| Error::Corrupt("truncated checkpoint".into()))?;
    let vsize: usize = vocab_line
        .strip_prefix("vocab ")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Corrupt("bad vocab header".into()))?;
    let mut tokens = Vec::with_capacity(vsize);
    for _ in 0..vsize {
        tokens.push(
            lines
                .next()
                .ok_or_else(|| Error::Corrupt("truncated vocabulary".into()))?
                .to_string(),
        );
    }
    let vocab = ToyVocab::from_tokens(tokens)?;
    let dims = lines
        .next()
        .and_then(|l| l.strip_prefix("dims "))
        .ok_or_else(|| Error::Corrupt("missing dims line".into()))?;
    let mut it = dims.split_whitespace().map(|v| v.parse::<usize>());
    let vocab_size = it
        .next()
        .and_then(|r| r.ok())
        .ok_or_else(|| Error::Corrupt("bad dims".into()))?;
    let d_e = it
        .next()
        .and_then(|r| r.ok())
        .ok_or_else(|| Error::Corrupt("bad dims".into()))?;
    let d_r = it
        .next()
        .and_then(|r| r.ok())
        .ok_or_else(|| Error::Corrupt("bad dims".into()))?;
    let mut read_block = |name: &str, len: usize| -> Result<Vec<f64>> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Corrupt(format!("missing block {name}")))?;
        let body = line
            .strip_prefix(name)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| Error::Corrupt(format!("expected block {name}")))?;
        let vals: Vec<f64> = body
            .split_whitespace()
            .map(|v| v.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Corrupt(format!("bad value in block {name}")))?;
        if vals.len() != len {
            return Err(Error::Corrupt(format!(
                "block {name} has {} values, expected {len}",
                vals.len()
            )));
        }
        Ok(vals)
    };
    let e = read_block("e", vocab_size * d_e)?;
    let w1 = read_block("w1", d_e * d_r)?;
    let b1 = read_block("b1", d_r)?;
    let w2 = read_block("w2", d_r * vocab_size)?;
    let b2 = read_block("b2", vocab_size)?;
    drop(read_block);
    let marker = lines.next();
    if marker != Some("codebook") {
        return Err(Error::Corrupt("missing codebook section".into()));
    }
    let rest: Vec<&str> = lines.collect();
    let codebook = Codebook::parse(&rest.join("\n"))?;
    if vocab.len() != vocab_size {
        return Err(Error::Corrupt("vocab size disagreement".into()));
    }
    Ok((
        ToyCodecParams {
            vocab_size,
            d_e,
            d_r,
            e,
            w1,
            b1,
            w2,
            b2,
        },
        codebook,
        vocab,
    ))
}

/// Loads a corpus file: one sentence per line, blank lines skipped.
pub fn load_corpus(path: &std::path::Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    let sentences: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if sentences.is_empty() {
        return Err(Error::invalid(format!(
            "corpus {} contains no sentences",
            path.display()
        )));
    }
    Ok(sentences)
}

/// Deterministic synthetic corpus: sentences of 3..=8 words drawn from a
/// fixed small word list, reproducible from the stream.
pub fn toy_corpus(num_sentences: usize, rng: &mut Rng) -> Vec<String> {
    const WORDS: [&str; 24] = [
        "the", "a", "robot", "sensor", "relay", "link", "signal", "node", "sends", "reads",
        "drops", "holds", "data", "power", "state", "frame", "now", "again", "slowly", "fast",
        "red", "green", "cold", "warm",
    ];
    (0..num_sentences)
        .map(|_| {
            let len = rng.gen_range(3..=8);
            (0..len)
                .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn tiny_params() -> ToyCodecParams {
        let mut rng = rng::stream(70, "codec-init", &[]);
        ToyCodecParams::init(6, 3, 4, &mut rng)
    }

    #[test]
    fn vocab_tokenize_round_trip_and_unk() {
        let corpus = vec!["The cat sat".to_string(), "the dog ran".to_string()];
        let v = ToyVocab::from_corpus(&corpus, 16).unwrap();
        assert_eq!(v.token(PAD_ID), "<pad>");
        assert_eq!(v.token(UNK_ID), "<unk>");
        let ids = v.tokenize("The CAT flew");
        assert_eq!(ids[0], v.id("the"));
        assert_eq!(ids[1], v.id("cat"));
        assert_eq!(ids[2], UNK_ID);
        assert_eq!(v.detokenize(&v.tokenize("the dog sat")), "the dog sat");
    }

    #[test]
    fn vocab_caps_at_max_size_by_frequency() {
        let corpus = vec!["a a a b b c".to_string()];
        let v = ToyVocab::from_corpus(&corpus, 4).unwrap();
        assert_eq!(v.len(), 4);
        assert_ne!(v.id("a"), UNK_ID);
        assert_ne!(v.id("b"), UNK_ID);
        assert_eq!(v.id("c"), UNK_ID);
    }

    // Oracle: explicit matrix arithmetic for a 2-token batch.
    #[test]
    fn encode_matches_matrix_oracle() {
        let p = tiny_params();
        let ids = [2usize, 5];
        let r = p.encode(&ids).unwrap();
        for (i, &id) in ids.iter().enumerate() {
            for j in 0..p.d_r {
                let mut acc = p.b1[j];
                for k in 0..p.d_e {
                    acc += p.e[id * p.d_e + k] * p.w1[k * p.d_r + j];
                }
                assert!((r.row(i)[j] - acc.tanh()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn decode_ties_break_to_lowest_id() {
        assert_eq!(argmax_lowest(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax_lowest(&[5.0, 5.0]), 0);
    }

    #[test]
    fn ce_uniform_logits_is_log_v() {
        let logits = vec![vec![0.7; 4]];
        let l = ce_loss(&logits, &[2]).unwrap();
        assert!((l.value - 4.0f64.ln()).abs() < 1e-12);
    }

    // Oracle: central finite differences on the logits.
    #[test]
    fn ce_gradient_matches_finite_differences() {
        let logits = vec![vec![0.3, -1.2, 0.8], vec![2.0, 0.1, -0.4]];
        let targets = [2usize, 0];
        let base = ce_loss(&logits, &targets).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            for v in 0..3 {
                let mut lp = logits.clone();
                lp[i][v] += h;
                let mut lm = logits.clone();
                lm[i][v] -= h;
                let fd = (ce_loss(&lp, &targets).unwrap().value
                    - ce_loss(&lm, &targets).unwrap().value)
                    / (2.0 * h);
                assert!(
                    (fd - base.grad[i][v]).abs() < 1e-6,
                    "pos {i} class {v}: fd {fd} vs {}",
                    base.grad[i][v]
                );
            }
        }
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let mut p = tiny_params();
        let before = p.clone();
        let mut rng = rng::stream(71, "codec-cb", &[]);
        let mut cb = Codebook::random(4, 2, &mut rng).unwrap();
        let cb_before = cb.clone();
        train_step(&mut p, &mut cb, &[2, 3, 4], 0.25, 0.0, None).unwrap();
        assert_eq!(p, before);
        assert_eq!(cb, cb_before);
    }

    // Oracle: the straight-through gradient of the cross-entropy at the
    // encoder side equals the exact gradient of the shifted objective
    // CE(decode(q0 + r(theta) - r0)) at theta0, with q0 and r0 held
    // constant. The commitment and codebook terms are checked against
    // the fixed-assignment loss the same way.
    #[test]
    fn straight_through_gradients_match_shifted_objective() {
        let p = tiny_params();
        let mut rng = rng::stream(72, "codec-st", &[]);
        let cb = Codebook::random(4, 2, &mut rng).unwrap();
        let ids = [1usize, 3, 5];
        let beta = 0.25;
        let (g, _) = compute_gradients(&p, &cb, &ids, beta, None).unwrap();

        let r0 = p.encode(&ids).unwrap();
        let segs0 = vq::segment(&r0, 2).unwrap();
        let assign = vq::quantize(&segs0, &cb, ids.len()).unwrap();
        let q0 = vq::dequantize(&assign, &cb, p.d_r).unwrap();

        // shifted objective as a function of a parameter vector; the
        // stop-gradients become explicit constants: the commitment term
        // sees q0 fixed, the codebook term sees r0 fixed
        let count = (ids.len() * p.d_r / 2) as f64;
        let eval = |p2: &ToyCodecParams, cb2: &Codebook| -> f64 {
            let r = p2.encode(&ids).unwrap();
            // decode input: q0 + (r - r0), elementwise
            let shifted: Vec<f64> = q0
                .values
                .iter()
                .zip(&r.values)
                .zip(&r0.values)
                .map(|((q, rv), r0v)| q + rv - r0v)
                .collect();
            let r_hat = LatentMatrix::new(ids.len(), p2.d_r, shifted).unwrap();
            let logits = p2.decode_logits(&r_hat).unwrap();
            let ce = ce_loss(&logits, &ids).unwrap().value;
            let commitment: f64 = beta
                * r.values
                    .iter()
                    .zip(&q0.values)
                    .map(|(rv, qv)| (rv - qv) * (rv - qv))
                    .sum::<f64>()
                / count;
            let codebook_term: f64 = assign
                .indices
                .iter()
                .enumerate()
                .map(|(seg, &k)| {
                    let z = cb2.entry(k);
                    r0.values[seg * 2..seg * 2 + 2]
                        .iter()
                        .zip(z)
                        .map(|(rv, zv)| (rv - zv) * (rv - zv))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / count;
            ce + commitment + codebook_term
        };

        let h = 1e-6;
        let check = |name: &str,
                     grad: &[f64],
                     get: &dyn Fn(&mut ToyCodecParams) -> &mut Vec<f64>| {
            for (i, &an) in grad.iter().enumerate() {
                let mut pp = p.clone();
                get(&mut pp)[i] += h;
                let mut pm = p.clone();
                get(&mut pm)[i] -= h;
                let fd = (eval(&pp, &cb) - eval(&pm, &cb)) / (2.0 * h);
                let scale = fd.abs().max(an.abs()).max(1e-6);
                assert!(
                    (fd - an).abs() / scale < 1e-4,
                    "{name}[{i}]: fd {fd} vs analytic {an}"
                );
            }
        };
        check("e", &g.e, &|p| &mut p.e);
        check("w1", &g.w1, &|p| &mut p.w1);
        check("b1", &g.b1, &|p| &mut p.b1);
        check("w2", &g.w2, &|p| &mut p.w2);
        check("b2", &g.b2, &|p| &mut p.b2);
        for k in 0..cb.len() {
            for j in 0..cb.code_dim() {
                let mut cp = cb.clone();
                cp.entry_mut(k)[j] += h;
                let mut cm = cb.clone();
                cm.entry_mut(k)[j] -= h;
                let fd = (eval(&p, &cp) - eval(&p, &cm)) / (2.0 * h);
                let an = g.codebook[k][j];
                let scale = fd.abs().max(an.abs()).max(1e-6);
                assert!(
                    (fd - an).abs() / scale < 1e-4,
                    "codebook[{k}][{j}]: fd {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn surrogate_corrupt_extremes() {
        let mut rng = rng::stream(73, "codec-corrupt", &[]);
        let base = IndexMatrix::new(4, 2, vec![0, 1, 0, 1, 0, 1, 0, 1]).unwrap();
        let mut t = base.clone();
        surrogate_corrupt(&mut t, 2, 0.0, &mut rng).unwrap();
        assert_eq!(t, base);
        // p = 1, K = 2: every index must flip
        surrogate_corrupt(&mut t, 2, 1.0, &mut rng).unwrap();
        assert_eq!(t.indices, vec![1, 0, 1, 0, 1, 0, 1, 0]);
        assert!(surrogate_corrupt(&mut t, 2, 1.5, &mut rng).is_err());
    }

    #[test]
    fn surrogate_corrupt_rate_statistical() {
        let mut rng = rng::stream(74, "codec-corrupt-rate", &[]);
        let n = 20_000;
        let mut t = IndexMatrix::new(n, 1, vec![3; n]).unwrap();
        surrogate_corrupt(&mut t, 8, 0.3, &mut rng).unwrap();
        let changed = t.indices.iter().filter(|&&i| i != 3).count() as f64 / n as f64;
        assert!((changed - 0.3).abs() < 0.02, "flip rate {changed}");
        // replacements spread over the other 7 values only
        assert!(t.indices.iter().all(|&i| i < 8));
    }

    #[test]
    fn training_reduces_loss_and_learns_identity() {
        let mut rng = rng::stream(75, "codec-train", &[]);
        let corpus = toy_corpus(20, &mut rng);
        let vocab = ToyVocab::from_corpus(&corpus, 32).unwrap();
        let mut params = ToyCodecParams::init(vocab.len(), 8, 8, &mut rng);
        let mut cb = Codebook::random(32, 2, &mut rng).unwrap();
        let cfg = TrainConfig {
            epochs: 80,
            lr: 0.3,
            beta: 0.25,
            flip_prob: 0.0,
        };
        let trace = train(&mut params, &mut cb, &vocab, &corpus, &cfg, &mut rng).unwrap();
        assert!(trace.last().unwrap() < &(trace[0] * 0.5), "loss trace {trace:?}");
        let acc = clean_token_accuracy(&params, &cb, &vocab, &corpus).unwrap();
        assert!(acc > 0.8, "clean accuracy {acc}");
    }

    #[test]
    fn plain_training_learns_identity() {
        let mut rng = rng::stream(78, "codec-plain", &[]);
        let corpus = toy_corpus(20, &mut rng);
        let vocab = ToyVocab::from_corpus(&corpus, 32).unwrap();
        let mut params = ToyCodecParams::init(vocab.len(), 8, 8, &mut rng);
        let trace = train_plain(&mut params, &vocab, &corpus, 80, 0.3).unwrap();
        assert!(trace.last().unwrap() < &(trace[0] * 0.5));
        let mut hits = 0;
        let mut total = 0;
        for s in &corpus {
            let ids = vocab.tokenize(s);
            let out = params.decode(&params.encode(&ids).unwrap()).unwrap();
            hits += out.iter().zip(&ids).filter(|(a, b)| a == b).count();
            total += ids.len();
        }
        assert!(hits as f64 / total as f64 > 0.9);
    }

    #[test]
    fn non_finite_loss_is_a_training_error() {
        let mut p = tiny_params();
        // an infinite bias drives one logit to +inf, so the stable
        // log-sum-exp produces inf - inf = NaN and the loss is non-finite
        p.b2[0] = f64::INFINITY;
        let mut rng = rng::stream(76, "codec-nan", &[]);
        let cb = Codebook::random(4, 2, &mut rng).unwrap();
        match compute_gradients(&p, &cb, &[1, 2], 0.25, None) {
            Err(Error::Training(_)) => {}
            other => panic!("expected training error, got {other:?}"),
        }
    }

    #[test]
    fn checkpoint_round_trip_bit_exact() {
        let mut rng = rng::stream(77, "codec-ckpt", &[]);
        let corpus = toy_corpus(5, &mut rng);
        let vocab = ToyVocab::from_corpus(&corpus, 16).unwrap();
        let params = ToyCodecParams::init(vocab.len(), 4, 6, &mut rng);
        let cb = Codebook::random(8, 3, &mut rng).unwrap();
        let text = checkpoint_to_string(&params, &cb, &vocab);
        let (p2, cb2, v2) = checkpoint_from_string(&text).unwrap();
        assert_eq!(p2, params);
        assert_eq!(cb2, cb);
        assert_eq!(v2, vocab);
        assert!(checkpoint_from_string("bogus\n").is_err());
    }

    #[test]
    fn toy_corpus_is_deterministic() {
        let a = toy_corpus(10, &mut rng::stream(9, "corpus", &[]));
        let b = toy_corpus(10, &mut rng::stream(9, "corpus", &[]));
        assert_eq!(a, b);
        for s in &a {
            let n = s.split_whitespace().count();
            assert!((3..=8).contains(&n));
        }
    }
}
