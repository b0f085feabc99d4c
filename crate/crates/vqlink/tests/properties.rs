//! Randomized property tests for structural invariants: code linearity,
//! index packing round trips, score bounds, and bit-flip involution.

use proptest::prelude::*;
use std::sync::OnceLock;
use vqlink::bits::BitVector;
use vqlink::fec::ShortenedPolarCode;
use vqlink::metrics;
use vqlink::rng;
use vqlink::vq::{self, Codebook, IndexMatrix};

fn shared_code() -> &'static ShortenedPolarCode {
    static CODE: OnceLock<ShortenedPolarCode> = OnceLock::new();
    CODE.get_or_init(|| ShortenedPolarCode::construct(960, 480, 2.0).unwrap())
}

fn bitvec(bits: &[u8]) -> BitVector {
    let mut v = BitVector::new();
    for &b in bits {
        v.push(b);
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// The encoder is linear over GF(2): encoding a sum of messages
    /// equals the sum of the encodings.
    #[test]
    fn polar_encode_is_linear(
        a in prop::collection::vec(0u8..2, 480),
        b in prop::collection::vec(0u8..2, 480),
    ) {
        let code = shared_code();
        let sum: Vec<u8> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
        let ea = code.encode(&bitvec(&a)).unwrap();
        let eb = code.encode(&bitvec(&b)).unwrap();
        let esum = code.encode(&bitvec(&sum)).unwrap();
        let xored: Vec<u8> = ea.as_slice().iter().zip(eb.as_slice()).map(|(x, y)| x ^ y).collect();
        prop_assert_eq!(esum.as_slice(), &xored[..]);
    }

    /// Decoding a noiselessly transmitted codeword recovers the message.
    #[test]
    fn polar_noiseless_round_trip(a in prop::collection::vec(0u8..2, 480)) {
        let code = shared_code();
        let coded = code.encode(&bitvec(&a)).unwrap();
        let llrs: Vec<f64> = coded.iter().map(|b| if b == 0 { 8.0 } else { -8.0 }).collect();
        let decoded = code.decode_sc(&llrs).unwrap();
        prop_assert_eq!(decoded.as_slice(), &a[..]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Packing indices to bits and unpacking restores them exactly, with
    /// no clamping, for any codebook size and index-matrix shape.
    #[test]
    fn pack_unpack_round_trip(
        k in 2usize..=64,
        n in 1usize..8,
        s in 1usize..4,
        seed in 0u64..1000,
    ) {
        let mut r = rng::stream(seed, "prop-pack", &[]);
        let codebook = Codebook::random(k, 2, &mut r).unwrap();
        let indices: Vec<usize> = (0..n * s)
            .map(|_| rand::Rng::gen_range(&mut r, 0..k))
            .collect();
        let t = IndexMatrix::new(n, s, indices).unwrap();
        let bits = vq::pack_indices(&t, &codebook);
        prop_assert_eq!(bits.len(), n * s * codebook.index_bits());
        let report = vq::unpack_indices(&bits, &codebook, n, s).unwrap();
        prop_assert_eq!(report.clamped, 0);
        prop_assert_eq!(report.indices, t);
    }

    /// BLEU stays in [0, 1], and a hypothesis identical to the reference
    /// scores exactly 1 whenever it is long enough to contain an n-gram
    /// of every scored order.
    #[test]
    fn bleu_bounds_and_identity(
        hyp in prop::collection::vec("[a-d]{1,3}", 0..12),
        rf in prop::collection::vec("[a-d]{1,3}", 1..12),
    ) {
        let report = metrics::bleu(&hyp, &rf, 4).unwrap();
        prop_assert!((0.0..=1.0).contains(&report.combined));
        for p in &report.precisions {
            prop_assert!((0.0..=1.0).contains(p));
        }
        prop_assert!((0.0..=1.0).contains(&report.brevity_penalty));
        if rf.len() >= 4 {
            let same = metrics::bleu(&rf, &rf, 4).unwrap();
            prop_assert!((same.combined - 1.0).abs() < 1e-12);
        }
    }

    /// Flipping the same bit twice restores the original bit pattern,
    /// even when the intermediate value is infinite or NaN.
    #[test]
    fn float_bitflip_is_involution(value in any::<f32>(), position in 0u32..32) {
        let once = metrics::float_bitflip(value, position).unwrap();
        let twice = metrics::float_bitflip(once, position).unwrap();
        prop_assert_eq!(twice.to_bits(), value.to_bits());
    }
}
