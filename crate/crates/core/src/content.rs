//! Video catalog, super-layer sizes and the joint request law over
//! (file, quality level).
//!
//! Files are ranked by popularity and indexed from 1. A request for file `f`
//! follows a Mandelbrot-Zipf law with skewness `alpha` and plateau `q`; the
//! requested quality level is then split between standard definition (super
//! layer 1) and the high-definition levels `2..=L`, which share the HD mass
//! equally.

use crate::error::{config_err, Result};
use crate::grid::LayerGrid;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct ContentLibrary<T> {
    layer_sizes: LayerGrid<T>,
    super_layer_sizes: LayerGrid<T>,
    skewness: T,
    plateau: T,
    request: Vec<T>,
    joint: LayerGrid<T>,
}

impl<T: Real> ContentLibrary<T> {
    /// Library where every layer of every file has the same size in bits.
    pub fn uniform(
        file_count: usize,
        layer_count: usize,
        layer_size_bits: T,
        skewness: T,
        plateau: T,
    ) -> Result<Self> {
        Self::new(
            LayerGrid::filled(file_count, layer_count, layer_size_bits),
            skewness,
            plateau,
        )
    }

    /// `layer_sizes[f][l]` is the size of individual layer `l` of file `f`
    /// (not the cumulative super-layer size).
    pub fn new(layer_sizes: LayerGrid<T>, skewness: T, plateau: T) -> Result<Self> {
        let (files, layers) = layer_sizes.shape();
        if files < 2 {
            return Err(config_err(format!(
                "content.file_count must be >= 2, got {files}"
            )));
        }
        if layers < 2 {
            return Err(config_err(format!(
                "content.layer_count must be >= 2 (quality preference divides by L-1), got {layers}"
            )));
        }
        if let Some(bad) = layer_sizes
            .as_slice()
            .iter()
            .find(|s| !(s.is_finite() && **s > T::zero()))
        {
            return Err(config_err(format!(
                "content layer sizes must be finite and > 0, got {bad}"
            )));
        }
        if !(skewness.is_finite() && skewness >= T::zero()) {
            return Err(config_err(format!(
                "content.skewness must be >= 0, got {skewness}"
            )));
        }
        if !(plateau.is_finite() && plateau >= T::zero()) {
            return Err(config_err(format!(
                "content.plateau must be >= 0, got {plateau}"
            )));
        }

        let mut super_layer_sizes = LayerGrid::zeros(files, layers);
        for i in 0..files {
            let mut acc = T::zero();
            for j in 0..layers {
                acc = acc + layer_sizes.get(i, j);
                super_layer_sizes.set(i, j, acc);
            }
        }

        let weights: Vec<T> = (1..=files)
            .map(|f| (T::lit(f as f64) + plateau).powf(-skewness))
            .collect();
        let norm: T = weights.iter().copied().sum();
        let request: Vec<T> = weights.into_iter().map(|w| w / norm).collect();

        let big_f = T::lit(files as f64);
        let one = T::one();
        let joint = LayerGrid::from_fn(files, layers, |i, j| {
            let f = T::lit((i + 1) as f64);
            if j == 0 {
                request[i] * (f - one) / (big_f - one)
            } else {
                request[i] * (big_f - f) / ((big_f - one) * T::lit((layers - 1) as f64))
            }
        });

        Ok(Self {
            layer_sizes,
            super_layer_sizes,
            skewness,
            plateau,
            request,
            joint,
        })
    }

    pub fn file_count(&self) -> usize {
        self.layer_sizes.files()
    }

    pub fn layer_count(&self) -> usize {
        self.layer_sizes.layers()
    }

    pub fn skewness(&self) -> T {
        self.skewness
    }

    pub fn plateau(&self) -> T {
        self.plateau
    }

    pub fn layer_sizes(&self) -> &LayerGrid<T> {
        &self.layer_sizes
    }

    /// Probability that file `f` (1-based) is requested.
    pub fn request_probability(&self, f: usize) -> Result<T> {
        self.joint.check(f, 1)?;
        Ok(self.request[f - 1])
    }

    pub fn request_probabilities(&self) -> &[T] {
        &self.request
    }

    /// Joint probability that super layer `l` of file `f` is requested.
    pub fn quality_preference(&self, f: usize, l: usize) -> Result<T> {
        self.joint.at(f, l)
    }

    /// All joint request probabilities, `files x layers`.
    pub fn demand(&self) -> &LayerGrid<T> {
        &self.joint
    }

    /// Size in bits of super layer `l` of file `f`: base layer plus the
    /// first `l - 1` enhancement layers.
    pub fn super_layer_size(&self, f: usize, l: usize) -> Result<T> {
        self.super_layer_sizes.at(f, l)
    }

    pub fn super_layer_sizes(&self) -> &LayerGrid<T> {
        &self.super_layer_sizes
    }

    /// Bits needed to cache every super layer of every file.
    pub fn total_catalog_bits(&self) -> T {
        self.super_layer_sizes.sum()
    }

    /// Same catalog with different popularity parameters.
    pub fn with_popularity(&self, skewness: T, plateau: T) -> Result<Self> {
        Self::new(self.layer_sizes.clone(), skewness, plateau)
    }
}
