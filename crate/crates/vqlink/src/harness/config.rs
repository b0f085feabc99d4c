//! Sectioned key-value configuration for the end-to-end link.
//!
//! Files look like INI: `[section]` headers followed by `key = value`
//! lines; `#` starts a comment. Unknown sections or keys are errors so
//! typos fail loudly, and every field has a default matching the
//! reference link parameters.

use crate::channel::ChannelProfile;
use crate::error::{Error, Result};
use std::path::Path;

/// How latent rows are carried as payload bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportMode {
    /// raw IEEE-754 single-precision bit patterns, 32 bits per value
    Direct,
    /// 16-bit uniform fixed point over [-1, 1] per value
    Tanh,
    /// codebook indices, ceil(log2 K) bits per segment
    Vq,
}

impl TransportMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Self::Direct),
            "tanh" => Ok(Self::Tanh),
            "vq" => Ok(Self::Vq),
            other => Err(Error::config(format!(
                "unknown mode {other:?} (expected direct, tanh, or vq)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Direct => "direct",
            Self::Tanh => "tanh",
            Self::Vq => "vq",
        }
    }
}

/// Fading model applied per transmission.
#[derive(Debug, Clone)]
pub enum ChannelKind {
    /// no fading, identity spatial channel
    Awgn,
    /// single-tap CN(0,1) per antenna pair
    RayleighFlat,
    /// tapped delay line drawn from a power-delay profile
    Tdl(ChannelProfile),
}

impl ChannelKind {
    pub fn name(&self) -> String {
        match self {
            Self::Awgn => "awgn".into(),
            Self::RayleighFlat => "flat".into(),
            Self::Tdl(p) => p.name().to_string(),
        }
    }

    /// Largest tap delay in samples (0 for the non-dispersive kinds).
    pub fn max_delay(&self) -> usize {
        match self {
            Self::Tdl(p) => p.max_delay(),
            _ => 0,
        }
    }
}

/// Everything needed to run the link end to end.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    // fec
    pub coded_length: usize,
    pub message_length: usize,
    pub design_snr_db: f64,
    // modem
    pub bits_per_symbol: usize,
    // ofdm
    pub num_subcarriers: usize,
    pub num_ofdm_symbols: usize,
    pub fft_size: usize,
    pub cp_length: usize,
    // antennas: spatial streams, equal on both ends
    pub num_streams: usize,
    // channel
    pub channel: ChannelKind,
    // codec
    pub vocab_size: usize,
    pub d_e: usize,
    pub d_r: usize,
    pub d_z: usize,
    pub codebook_size: usize,
    pub beta: f64,
    pub train_epochs: usize,
    pub learning_rate: f64,
    /// surrogate index-flip probability during training (noise tuning)
    pub flip_prob: f64,
    pub corpus_sentences: usize,
    /// when set, train on this file (one sentence per line) instead of
    /// the synthetic corpus
    pub corpus_file: Option<std::path::PathBuf>,
    // harness
    pub mode: TransportMode,
    pub ebn0_points_db: Vec<f64>,
    pub trials: usize,
    pub eval_sentences: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            coded_length: 960,
            message_length: 480,
            design_snr_db: 2.0,
            bits_per_symbol: 4,
            num_subcarriers: 72,
            num_ofdm_symbols: 14,
            fft_size: 128,
            cp_length: 9,
            num_streams: 1,
            channel: ChannelKind::Awgn,
            vocab_size: 32,
            d_e: 8,
            d_r: 16,
            d_z: 2,
            codebook_size: 64,
            beta: 0.25,
            train_epochs: 60,
            learning_rate: 0.3,
            flip_prob: 0.0,
            corpus_sentences: 24,
            corpus_file: None,
            mode: TransportMode::Vq,
            ebn0_points_db: vec![0.0, 2.0, 4.0, 6.0],
            trials: 4,
            eval_sentences: 8,
        }
    }
}

impl PipelineConfig {
    /// Code rate of the shortened outer code.
    pub fn coderate(&self) -> f64 {
        self.message_length as f64 / self.coded_length as f64
    }

    /// True when the channel's delay spread is not covered by the CP.
    pub fn isi_flag(&self) -> bool {
        self.channel.max_delay() >= self.cp_length.max(1)
    }

    /// Parses a config file; relative TDL profile paths resolve against
    /// the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text. `base` anchors relative profile paths.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut section = String::new();
        let mut channel_kind = String::from("awgn");
        let mut profile_path: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                match section.as_str() {
                    "fec" | "modem" | "ofdm" | "antenna" | "channel" | "codec" | "harness" => {}
                    other => {
                        return Err(Error::config(format!(
                            "line {}: unknown section [{other}]",
                            lineno + 1
                        )))
                    }
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad_key = || {
                Error::config(format!(
                    "line {}: unknown key {key:?} in section [{section}]",
                    lineno + 1
                ))
            };
            let bad_value =
                |e: String| Error::config(format!("line {}: {key}: {e}", lineno + 1));
            macro_rules! set {
                ($field:expr) => {
                    $field = value.parse().map_err(|e| bad_value(format!("{e}")))?
                };
            }
            match (section.as_str(), key) {
                ("fec", "coded_length") => set!(cfg.coded_length),
                ("fec", "message_length") => set!(cfg.message_length),
                ("fec", "design_snr_db") => set!(cfg.design_snr_db),
                ("modem", "bits_per_symbol") => set!(cfg.bits_per_symbol),
                ("ofdm", "num_subcarriers") => set!(cfg.num_subcarriers),
                ("ofdm", "num_ofdm_symbols") => set!(cfg.num_ofdm_symbols),
                ("ofdm", "fft_size") => set!(cfg.fft_size),
                ("ofdm", "cp_length") => set!(cfg.cp_length),
                ("antenna", "num_streams") => set!(cfg.num_streams),
                ("channel", "kind") => channel_kind = value.to_string(),
                ("channel", "profile") => profile_path = Some(value.to_string()),
                ("codec", "vocab_size") => set!(cfg.vocab_size),
                ("codec", "d_e") => set!(cfg.d_e),
                ("codec", "d_r") => set!(cfg.d_r),
                ("codec", "d_z") => set!(cfg.d_z),
                ("codec", "codebook_size") => set!(cfg.codebook_size),
                ("codec", "beta") => set!(cfg.beta),
                ("codec", "train_epochs") => set!(cfg.train_epochs),
                ("codec", "learning_rate") => set!(cfg.learning_rate),
                ("codec", "flip_prob") => set!(cfg.flip_prob),
                ("codec", "corpus_sentences") => set!(cfg.corpus_sentences),
                ("codec", "corpus_file") => cfg.corpus_file = Some(base.join(value)),
                ("harness", "mode") => cfg.mode = TransportMode::parse(value)?,
                ("harness", "ebn0_db") => {
                    cfg.ebn0_points_db = value
                        .split(',')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| bad_value(format!("{e}")))?
                }
                ("harness", "trials") => set!(cfg.trials),
                ("harness", "eval_sentences") => set!(cfg.eval_sentences),
                _ => return Err(bad_key()),
            }
        }
        cfg.channel = match channel_kind.as_str() {
            "awgn" => ChannelKind::Awgn,
            "flat" => ChannelKind::RayleighFlat,
            "tdl" => {
                let rel = profile_path
                    .ok_or_else(|| Error::config("channel kind tdl needs a profile path"))?;
                let path = base.join(rel);
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    Error::config(format!("cannot read profile {}: {e}", path.display()))
                })?;
                ChannelKind::Tdl(ChannelProfile::parse(&text)?)
            }
            other => return Err(Error::config(format!("unknown channel kind {other:?}"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-field sanity checks.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::config(msg));
        if self.message_length == 0 || self.message_length >= self.coded_length {
            return fail(format!(
                "message length {} must be in (0, coded length {})",
                self.message_length, self.coded_length
            ));
        }
        let mother = self.coded_length.next_power_of_two();
        if self.message_length > self.coded_length {
            return fail("message longer than codeword".into());
        }
        let _ = mother;
        if !matches!(self.bits_per_symbol, 2 | 4 | 6) {
            return fail(format!(
                "bits_per_symbol {} must be 2, 4, or 6",
                self.bits_per_symbol
            ));
        }
        if self.coded_length % self.bits_per_symbol != 0 {
            return fail(format!(
                "coded length {} must be a multiple of bits_per_symbol {}",
                self.coded_length, self.bits_per_symbol
            ));
        }
        if self.fft_size < self.num_subcarriers {
            return fail(format!(
                "fft_size {} below num_subcarriers {}",
                self.fft_size, self.num_subcarriers
            ));
        }
        if self.cp_length >= self.fft_size {
            return fail("cp_length must be below fft_size".into());
        }
        if self.num_streams == 0 || self.num_ofdm_symbols == 0 || self.num_subcarriers == 0 {
            return fail("grid dimensions must be positive".into());
        }
        if self.d_z == 0 || self.d_r % self.d_z != 0 {
            return fail(format!("d_z {} must divide d_r {}", self.d_z, self.d_r));
        }
        if self.codebook_size < 2 {
            return fail("codebook_size must be >= 2".into());
        }
        if self.vocab_size < 3 || self.d_e == 0 {
            return fail("codec dimensions too small".into());
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return fail(format!("flip_prob {} not in [0, 1]", self.flip_prob));
        }
        if self.beta < 0.0 || self.learning_rate < 0.0 {
            return fail("beta and learning_rate must be >= 0".into());
        }
        if self.trials == 0 || self.eval_sentences == 0 || self.ebn0_points_db.is_empty() {
            return fail("sweep needs trials, eval sentences, and points".into());
        }
        if self.corpus_sentences == 0 || self.train_epochs == 0 {
            return fail("training needs a corpus and at least one epoch".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
        let d = PipelineConfig::default();
        assert_eq!(d.coderate(), 0.5);
        assert!(!d.isi_flag());
    }

    #[test]
    fn parse_overrides_and_comments() {
        let text = "
# link setup
[modem]
bits_per_symbol = 2
[harness]
mode = tanh
ebn0_db = 1.5, 3, 4.5
[channel]
kind = flat
";
        let cfg = PipelineConfig::parse(text, Path::new(".")).unwrap();
        assert_eq!(cfg.bits_per_symbol, 2);
        assert_eq!(cfg.mode, TransportMode::Tanh);
        assert_eq!(cfg.ebn0_points_db, vec![1.5, 3.0, 4.5]);
        assert!(matches!(cfg.channel, ChannelKind::RayleighFlat));
        // untouched fields keep defaults
        assert_eq!(cfg.coded_length, 960);
    }

    #[test]
    fn unknown_key_and_section_rejected() {
        assert!(PipelineConfig::parse("[fec]\nbogus = 1\n", Path::new(".")).is_err());
        assert!(PipelineConfig::parse("[warp]\nx = 1\n", Path::new(".")).is_err());
        assert!(PipelineConfig::parse("[fec]\nno equals sign\n", Path::new(".")).is_err());
        assert!(PipelineConfig::parse("[modem]\nbits_per_symbol = seven\n", Path::new(".")).is_err());
    }

    #[test]
    fn validation_catches_bad_combinations() {
        let mut cfg = PipelineConfig::default();
        cfg.bits_per_symbol = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.d_z = 5;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.message_length = 960;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn tdl_profile_loads_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("prof.txt"),
            "name = test-prof\ntaps = [(0, 0.5), (3, 0.5)]\n",
        )
        .unwrap();
        let text = "[channel]\nkind = tdl\nprofile = prof.txt\n";
        let cfg = PipelineConfig::parse(text, dir.path()).unwrap();
        match &cfg.channel {
            ChannelKind::Tdl(p) => {
                assert_eq!(p.name(), "test-prof");
                assert_eq!(p.max_delay(), 3);
            }
            other => panic!("expected tdl, got {other:?}"),
        }
        assert!(!cfg.isi_flag()); // 3 < cp 9
    }

    #[test]
    fn config_errors_map_to_exit_code_two() {
        let err = PipelineConfig::parse("[fec]\nbogus = 1\n", Path::new(".")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
