//! Monte-Carlo invariants that hold with overwhelming probability at the
//! configured sample sizes and fixed seeds.

use vqlink::bits::BitVector;
use vqlink::channel::{awgn, ebn0_to_noise_var};
use vqlink::fec::ShortenedPolarCode;
use vqlink::modem::Constellation;
use vqlink::rng;

/// Post-decoding BER for the rate-1/2 shortened code over 16-QAM AWGN.
fn coded_ber(ebn0_db: f64, codewords: usize, seed: u64) -> f64 {
    let code = ShortenedPolarCode::construct(960, 480, 2.0).unwrap();
    let constellation = Constellation::new(4).unwrap();
    let noise_var = ebn0_to_noise_var(ebn0_db, 4, 0.5).unwrap();
    let mut rng = rng::stream(seed, "stat-waterfall", &[]);
    let mut errors = 0usize;
    for _ in 0..codewords {
        let mut msg = BitVector::new();
        for _ in 0..480 {
            msg.push(rand::Rng::gen_range(&mut rng, 0..2u8));
        }
        let coded = code.encode(&msg).unwrap();
        let mut sym = constellation.map(&coded).unwrap();
        awgn(&mut sym, noise_var, &mut rng);
        let llrs = constellation.demap_llr(&sym, noise_var).unwrap();
        let decoded = code.decode_sc(&llrs).unwrap();
        errors += decoded.hamming_distance(&msg).unwrap();
    }
    errors as f64 / (codewords * 480) as f64
}

/// Raising Eb/N0 by 2 dB never degrades post-decoding BER. The lower
/// point sits in the waterfall (BER near 0.25) and the upper point is
/// past it (BER below 0.01), so the gap dwarfs Monte-Carlo noise.
#[test]
fn polar_ber_improves_with_snr() {
    let low = coded_ber(4.0, 10_000, 2024);
    let high = coded_ber(6.0, 10_000, 2024);
    assert!(
        high <= low,
        "BER rose with SNR: {low:.5} at 4 dB -> {high:.5} at 6 dB"
    );
    assert!(low > 0.1, "4 dB point unexpectedly left the waterfall: {low:.5}");
    assert!(high < 0.01, "6 dB point unexpectedly poor: {high:.5}");
}
