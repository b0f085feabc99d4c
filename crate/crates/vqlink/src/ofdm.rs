//! Resource-grid mapping and CP-OFDM (de)modulation.
//!
//! The transform is implemented in-repo: an iterative radix-2 FFT for
//! power-of-two sizes and a naive DFT otherwise, both with unitary
//! scaling so Parseval holds exactly between grid and time domains.

use crate::error::{Error, Result};
use num_complex::Complex64;

/// Unitary DFT. `inverse` selects the e^{+j...} kernel.
pub fn dft(input: &[Complex64], inverse: bool) -> Vec<Complex64> {
    let n = input.len();
    if n == 0 {
        return Vec::new();
    }
    let mut out = if n.is_power_of_two() {
        radix2(input, inverse)
    } else {
        naive(input, inverse)
    };
    let scale = 1.0 / (n as f64).sqrt();
    for v in &mut out {
        *v *= scale;
    }
    out
}

fn naive(input: &[Complex64], inverse: bool) -> Vec<Complex64> {
    let n = input.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    (0..n)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, &x) in input.iter().enumerate() {
                let phase = sign * 2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                acc += x * Complex64::from_polar(1.0, phase);
            }
            acc
        })
        .collect()
}

fn radix2(input: &[Complex64], inverse: bool) -> Vec<Complex64> {
    let n = input.len();
    let mut a = input.to_vec();
    // bit-reversal permutation
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = (i.reverse_bits() >> (usize::BITS - bits)) as usize;
        if i < j {
            a.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * std::f64::consts::PI / len as f64;
        let wl = Complex64::from_polar(1.0, ang);
        for base in (0..n).step_by(len) {
            let mut w = Complex64::new(1.0, 0.0);
            for j in 0..len / 2 {
                let u = a[base + j];
                let v = a[base + j + len / 2] * w;
                a[base + j] = u + v;
                a[base + j + len / 2] = u - v;
                w *= wl;
            }
        }
        len <<= 1;
    }
    a
}

/// Grid shape: subcarriers x OFDM symbols x spatial streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridShape {
    pub num_subcarriers: usize,
    pub num_ofdm_symbols: usize,
    pub num_streams: usize,
}

impl GridShape {
    pub fn capacity(&self) -> usize {
        self.num_subcarriers * self.num_ofdm_symbols * self.num_streams
    }
}

/// Complex data symbols arranged stream x OFDM symbol x subcarrier.
#[derive(Debug, Clone)]
pub struct ResourceGrid {
    shape: GridShape,
    /// stream-major, then symbol, then subcarrier
    data: Vec<Complex64>,
    occupied: usize,
}

impl ResourceGrid {
    /// Fills subcarrier-fastest, then OFDM symbol, then stream; the
    /// remainder stays zero and `occupied` records the payload count.
    pub fn map(symbols: &[Complex64], shape: GridShape) -> Result<Self> {
        if symbols.len() > shape.capacity() {
            return Err(Error::invalid(format!(
                "{} symbols exceed grid capacity {}",
                symbols.len(),
                shape.capacity()
            )));
        }
        let mut data = vec![Complex64::new(0.0, 0.0); shape.capacity()];
        data[..symbols.len()].copy_from_slice(symbols);
        Ok(Self {
            shape,
            data,
            occupied: symbols.len(),
        })
    }

    /// Inverse of [`map`](Self::map): returns the occupied symbols in fill order.
    pub fn unmap(&self) -> Vec<Complex64> {
        self.data[..self.occupied].to_vec()
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn occupied(&self) -> usize {
        self.occupied
    }

    pub fn get(&self, stream: usize, symbol: usize, subcarrier: usize) -> Complex64 {
        self.data[self.index(stream, symbol, subcarrier)]
    }

    pub fn set(&mut self, stream: usize, symbol: usize, subcarrier: usize, v: Complex64) {
        let i = self.index(stream, symbol, subcarrier);
        self.data[i] = v;
    }

    fn index(&self, stream: usize, symbol: usize, subcarrier: usize) -> usize {
        debug_assert!(stream < self.shape.num_streams);
        debug_assert!(symbol < self.shape.num_ofdm_symbols);
        debug_assert!(subcarrier < self.shape.num_subcarriers);
        (stream * self.shape.num_ofdm_symbols + symbol) * self.shape.num_subcarriers + subcarrier
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Empty grid with explicit zeros, carrying an occupied count for
    /// round-tripping receiver-side grids.
    pub fn zeros(shape: GridShape, occupied: usize) -> Self {
        Self {
            data: vec![Complex64::new(0.0, 0.0); shape.capacity()],
            shape,
            occupied,
        }
    }
}

/// Absolute FFT bin for active subcarrier `k` under DC-centered mapping.
pub fn active_bin(k: usize, num_subcarriers: usize, fft_size: usize) -> usize {
    let offset = k as isize - (num_subcarriers / 2) as isize;
    offset.rem_euclid(fft_size as isize) as usize
}

/// OFDM-modulates a grid: per symbol, centers the active subcarriers in
/// `fft_size` bins, applies the unitary inverse DFT, and prepends a
/// cyclic prefix. Returns one time-sample vector per stream.
pub fn modulate(grid: &ResourceGrid, fft_size: usize, cp_length: usize) -> Result<Vec<Vec<Complex64>>> {
    let shape = grid.shape();
    if fft_size < shape.num_subcarriers {
        return Err(Error::invalid(format!(
            "fft_size {fft_size} below active subcarrier count {}",
            shape.num_subcarriers
        )));
    }
    if cp_length >= fft_size {
        return Err(Error::invalid(format!(
            "cp_length {cp_length} must be below fft_size {fft_size}"
        )));
    }
    let mut streams = Vec::with_capacity(shape.num_streams);
    for s in 0..shape.num_streams {
        let mut time = Vec::with_capacity(shape.num_ofdm_symbols * (fft_size + cp_length));
        for sym in 0..shape.num_ofdm_symbols {
            let mut freq = vec![Complex64::new(0.0, 0.0); fft_size];
            for k in 0..shape.num_subcarriers {
                freq[active_bin(k, shape.num_subcarriers, fft_size)] = grid.get(s, sym, k);
            }
            let td = dft(&freq, true);
            time.extend_from_slice(&td[fft_size - cp_length..]);
            time.extend_from_slice(&td);
        }
        streams.push(time);
    }
    Ok(streams)
}

/// Inverse of [`modulate`]: strips CPs, applies the forward DFT, and
/// extracts the centered active subcarriers.
pub fn demodulate(
    streams: &[Vec<Complex64>],
    fft_size: usize,
    cp_length: usize,
    shape: GridShape,
    occupied: usize,
) -> Result<ResourceGrid> {
    if streams.len() != shape.num_streams {
        return Err(Error::invalid(format!(
            "{} streams given for a {}-stream grid",
            streams.len(),
            shape.num_streams
        )));
    }
    let symbol_len = fft_size + cp_length;
    let expected = shape.num_ofdm_symbols * symbol_len;
    let mut grid = ResourceGrid::zeros(shape, occupied);
    for (s, samples) in streams.iter().enumerate() {
        if samples.len() != expected {
            return Err(Error::invalid(format!(
                "stream {s}: {} samples, expected {expected}",
                samples.len()
            )));
        }
        for sym in 0..shape.num_ofdm_symbols {
            let start = sym * symbol_len + cp_length;
            let fd = dft(&samples[start..start + fft_size], false);
            for k in 0..shape.num_subcarriers {
                grid.set(s, sym, k, fd[active_bin(k, shape.num_subcarriers, fft_size)]);
            }
        }
    }
    Ok(grid)
}
