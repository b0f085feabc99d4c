//! Link-level simulator for transporting learned text representations
//! over a bit-level physical layer.
//!
//! The transmit side runs a small trainable text codec, quantizes its
//! latent vectors against a shared codebook, packs the indices into
//! bits, and pushes them through Polar coding, Gray-mapped QAM, CP-OFDM,
//! and a fading channel. The receive side inverts the chain and scores
//! the reconstruction with BLEU, cosine semantic match, and compression
//! metrics.

pub mod bits;
pub mod channel;
pub mod codec;
pub mod error;
pub mod fec;
pub mod harness;
pub mod modem;
pub mod metrics;
pub mod ofdm;
pub mod rng;
pub mod vq;

pub use bits::BitVector;
pub use error::{Error, Result};
