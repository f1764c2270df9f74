//! Orthonormal multilevel 1-D DWT along the spectral axis.
//!
//! Each level uses periodic extension of the even-length prefix being split, so
//! every level (and the whole pyramid) is an orthogonal matrix. Coefficients
//! are laid out `[approx_L | detail_L | … | detail_1]` per pixel.
//!
//! Spectra whose length is not a multiple of `2^L` are extended at the end by
//! half-sample symmetric reflection before the transform; the extension is
//! recorded in [`CoeffCube`] and stripped on the way back. Parseval holds
//! against the extended spectrum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::HyperCube;
use crate::error::{Error, Result};
use crate::iwgs::SelectionMask;

const HAAR: [f64; 2] = [
    std::f64::consts::FRAC_1_SQRT_2,
    std::f64::consts::FRAC_1_SQRT_2,
];

/// Daubechies scaling filter with four vanishing moments (8 taps).
const DAUBECHIES4: [f64; 8] = [
    0.230_377_813_308_896_5,
    0.714_846_570_552_915_7,
    0.630_880_767_929_858_9,
    -0.027_983_769_416_859_854,
    -0.187_034_811_719_093_09,
    0.030_841_381_835_560_764,
    0.032_883_011_666_885_2,
    -0.010_597_401_785_069_032,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Haar,
    Daubechies4,
}

impl Family {
    pub fn scaling_filter(self) -> &'static [f64] {
        match self {
            Family::Haar => &HAAR,
            Family::Daubechies4 => &DAUBECHIES4,
        }
    }

    /// Quadrature mirror of the scaling filter: `g[t] = (-1)^t h[n-1-t]`.
    pub fn wavelet_filter(self) -> Vec<f64> {
        let h = self.scaling_filter();
        let n = h.len();
        (0..n)
            .map(|t| {
                if t % 2 == 0 {
                    h[n - 1 - t]
                } else {
                    -h[n - 1 - t]
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveletSpec {
    pub family: Family,
    pub levels: usize,
}

impl Default for WaveletSpec {
    fn default() -> Self {
        Self {
            family: Family::Haar,
            levels: 2,
        }
    }
}

impl WaveletSpec {
    pub fn new(family: Family, levels: usize) -> Self {
        Self { family, levels }
    }

    /// Transform length for a spectrum of `bands` samples.
    pub fn padded_len(&self, bands: usize) -> Result<usize> {
        let max_levels = if bands == 0 {
            0
        } else {
            bands.ilog2() as usize
        };
        if self.levels == 0 || self.levels > max_levels {
            return Err(Error::Config(format!(
                "{} wavelet levels invalid for {bands} bands (1..={max_levels})",
                self.levels
            )));
        }
        let block = 1usize << self.levels;
        Ok(bands.div_ceil(block) * block)
    }
}

/// Whether selection masks act on wavelet coefficients or on raw bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    #[default]
    Wavelet,
    Spectral,
}

/// Per-pixel channel representation of a cube.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffCube {
    height: usize,
    width: usize,
    source_bands: usize,
    channels: usize,
    domain: Domain,
    spec: WaveletSpec,
    values: Vec<f64>,
}

impl CoeffCube {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn source_bands(&self) -> usize {
        self.source_bands
    }

    /// Channel count `B′` (padded spectral length).
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn spec(&self) -> WaveletSpec {
        self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.values[index * self.channels..(index + 1) * self.channels]
    }

    fn check_spec(&self, spec: &WaveletSpec) -> Result<()> {
        if self.domain == Domain::Wavelet && *spec != self.spec {
            return Err(Error::Config(format!(
                "coefficients were produced with {:?}, got {:?}",
                self.spec, spec
            )));
        }
        Ok(())
    }
}

fn forward_level(signal: &mut [f64], scratch: &mut [f64], h: &[f64], g: &[f64]) {
    let n = signal.len();
    let half = n / 2;
    for k in 0..half {
        let (mut a, mut d) = (0.0, 0.0);
        for (t, (&ht, &gt)) in h.iter().zip(g).enumerate() {
            let x = signal[(2 * k + t) % n];
            a += ht * x;
            d += gt * x;
        }
        scratch[k] = a;
        scratch[half + k] = d;
    }
    signal.copy_from_slice(&scratch[..n]);
}

fn inverse_level(coeffs: &mut [f64], scratch: &mut [f64], h: &[f64], g: &[f64]) {
    let n = coeffs.len();
    let half = n / 2;
    scratch[..n].fill(0.0);
    for k in 0..half {
        let (a, d) = (coeffs[k], coeffs[half + k]);
        for (t, (&ht, &gt)) in h.iter().zip(g).enumerate() {
            scratch[(2 * k + t) % n] += ht * a + gt * d;
        }
    }
    coeffs.copy_from_slice(&scratch[..n]);
}

/// In-place multilevel DWT of a signal whose length is a multiple of `2^levels`.
pub fn dwt_in_place(signal: &mut [f64], family: Family, levels: usize) {
    let h = family.scaling_filter();
    let g = family.wavelet_filter();
    let mut scratch = vec![0.0; signal.len()];
    let mut len = signal.len();
    for _ in 0..levels {
        forward_level(&mut signal[..len], &mut scratch, h, &g);
        len /= 2;
    }
}

/// Exact inverse of [`dwt_in_place`].
pub fn idwt_in_place(coeffs: &mut [f64], family: Family, levels: usize) {
    let h = family.scaling_filter();
    let g = family.wavelet_filter();
    let mut scratch = vec![0.0; coeffs.len()];
    let n = coeffs.len();
    for level in (0..levels).rev() {
        let len = n >> level;
        inverse_level(&mut coeffs[..len], &mut scratch, h, &g);
    }
}

/// Pixel–level representation: forward, reconstruction and the adjoint of
/// reconstruction used when differentiating through a mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelTransform {
    #[serde(default)]
    pub domain: Domain,
    #[serde(default)]
    pub wavelet: WaveletSpec,
}

impl ChannelTransform {
    pub fn wavelet(spec: WaveletSpec) -> Self {
        Self {
            domain: Domain::Wavelet,
            wavelet: spec,
        }
    }

    pub fn spectral() -> Self {
        Self {
            domain: Domain::Spectral,
            wavelet: WaveletSpec::default(),
        }
    }

    pub fn channels(&self, bands: usize) -> Result<usize> {
        match self.domain {
            Domain::Wavelet => self.wavelet.padded_len(bands),
            Domain::Spectral => Ok(bands),
        }
    }

    fn forward_pixel(&self, spectrum: &[f64], out: &mut [f64]) {
        let b = spectrum.len();
        out[..b].copy_from_slice(spectrum);
        if self.domain == Domain::Spectral {
            return;
        }
        for k in 0..out.len() - b {
            out[b + k] = spectrum[b - 1 - k];
        }
        dwt_in_place(out, self.wavelet.family, self.wavelet.levels);
    }

    fn inverse_pixel(&self, coeffs: &mut [f64], out: &mut [f64]) {
        if self.domain == Domain::Wavelet {
            idwt_in_place(coeffs, self.wavelet.family, self.wavelet.levels);
        }
        out.copy_from_slice(&coeffs[..out.len()]);
    }

    /// `Sᵀ v` where `S` maps channels to the (stripped) spectrum; `v` has length `bands`.
    pub fn reconstruction_adjoint(&self, v: &[f64], channels: usize) -> Vec<f64> {
        let mut out = vec![0.0; channels];
        out[..v.len()].copy_from_slice(v);
        if self.domain == Domain::Wavelet {
            dwt_in_place(&mut out, self.wavelet.family, self.wavelet.levels);
        }
        out
    }

    pub fn forward(&self, cube: &HyperCube) -> Result<CoeffCube> {
        let bands = cube.bands();
        let channels = self.channels(bands)?;
        let mut values = vec![0.0; cube.pixels() * channels];
        values
            .par_chunks_mut(channels)
            .zip(cube.values().par_chunks(bands))
            .for_each(|(out, spectrum)| self.forward_pixel(spectrum, out));
        Ok(CoeffCube {
            height: cube.height(),
            width: cube.width(),
            source_bands: bands,
            channels,
            domain: self.domain,
            spec: self.wavelet,
            values,
        })
    }

    fn check(&self, coeffs: &CoeffCube) -> Result<()> {
        if coeffs.domain != self.domain {
            return Err(Error::Config(format!(
                "coefficients are in {:?} domain, transform is {:?}",
                coeffs.domain, self.domain
            )));
        }
        coeffs.check_spec(&self.wavelet)
    }

    /// Reconstruction with channel `j` scaled by `weights[j]`.
    pub fn weighted_reconstruct(&self, coeffs: &CoeffCube, weights: &[f64]) -> Result<HyperCube> {
        self.check(coeffs)?;
        let channels = coeffs.channels;
        if weights.len() != channels {
            return Err(Error::Shape(format!(
                "mask has {} entries, coefficients have {channels} channels",
                weights.len()
            )));
        }
        let bands = coeffs.source_bands;
        let mut values = vec![0.0; coeffs.height * coeffs.width * bands];
        values
            .par_chunks_mut(bands)
            .zip(coeffs.values.par_chunks(channels))
            .for_each(|(out, c)| {
                let mut scaled: Vec<f64> = c.iter().zip(weights).map(|(x, w)| x * w).collect();
                self.inverse_pixel(&mut scaled, out);
            });
        HyperCube::new(coeffs.height, coeffs.width, bands, values)
    }

    pub fn inverse(&self, coeffs: &CoeffCube) -> Result<HyperCube> {
        self.check(coeffs)?;
        let bands = coeffs.source_bands;
        let channels = coeffs.channels;
        let mut values = vec![0.0; coeffs.height * coeffs.width * bands];
        values
            .par_chunks_mut(bands)
            .zip(coeffs.values.par_chunks(channels))
            .for_each(|(out, c)| {
                let mut buf = c.to_vec();
                self.inverse_pixel(&mut buf, out);
            });
        HyperCube::new(coeffs.height, coeffs.width, bands, values)
    }

    pub fn masked_reconstruct(
        &self,
        coeffs: &CoeffCube,
        mask: &SelectionMask,
    ) -> Result<HyperCube> {
        self.weighted_reconstruct(coeffs, &mask.as_weights())
    }
}

/// Wavelet-domain forward transform of every pixel spectrum.
pub fn forward(cube: &HyperCube, spec: &WaveletSpec) -> Result<CoeffCube> {
    ChannelTransform::wavelet(*spec).forward(cube)
}

pub fn inverse(coeffs: &CoeffCube, spec: &WaveletSpec) -> Result<HyperCube> {
    ChannelTransform::wavelet(*spec).inverse(coeffs)
}

pub fn masked_reconstruct(
    coeffs: &CoeffCube,
    mask: &SelectionMask,
    spec: &WaveletSpec,
) -> Result<HyperCube> {
    ChannelTransform::wavelet(*spec).masked_reconstruct(coeffs, mask)
}
