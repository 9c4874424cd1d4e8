use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense row-major `files x layers` matrix indexed per (file, super layer).
///
/// Accessors ending in `_at` take 1-based `(f, l)` as used by the model
/// formulas; `get`/`set` and slice access are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrid<T> {
    files: usize,
    layers: usize,
    data: Vec<T>,
}

impl<T: Real> LayerGrid<T> {
    pub fn filled(files: usize, layers: usize, value: T) -> Self {
        Self {
            files,
            layers,
            data: vec![value; files * layers],
        }
    }

    pub fn zeros(files: usize, layers: usize) -> Self {
        Self::filled(files, layers, T::zero())
    }

    pub fn from_fn(files: usize, layers: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(files * layers);
        for i in 0..files {
            for j in 0..layers {
                data.push(f(i, j));
            }
        }
        Self {
            files,
            layers,
            data,
        }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let files = rows.len();
        let layers = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != layers) {
            return Err(Error::Shape {
                expected_rows: files,
                expected_cols: layers,
                rows: files,
                cols: bad.len(),
            });
        }
        Ok(Self {
            files,
            layers,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_vec(files: usize, layers: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != files * layers {
            return Err(Error::Shape {
                expected_rows: files,
                expected_cols: layers,
                rows: data.len() / layers.max(1),
                cols: layers,
            });
        }
        Ok(Self {
            files,
            layers,
            data,
        })
    }

    pub fn files(&self) -> usize {
        self.files
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.files, self.layers)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.layers + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.layers + j] = v;
    }

    /// 1-based access.
    pub fn at(&self, f: usize, l: usize) -> Result<T> {
        self.check(f, l)?;
        Ok(self.get(f - 1, l - 1))
    }

    pub(crate) fn check(&self, f: usize, l: usize) -> Result<()> {
        if f == 0 || f > self.files {
            return Err(Error::Index {
                what: "file",
                index: f,
                max: self.files,
            });
        }
        if l == 0 || l > self.layers {
            return Err(Error::Index {
                what: "layer",
                index: l,
                max: self.layers,
            });
        }
        Ok(())
    }

    pub fn ensure_shape(&self, files: usize, layers: usize) -> Result<()> {
        if self.shape() != (files, layers) {
            return Err(Error::Shape {
                expected_rows: files,
                expected_cols: layers,
                rows: self.files,
                cols: self.layers,
            });
        }
        Ok(())
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.layers.max(1))
    }

    pub fn map(&self, f: impl FnMut(T) -> T) -> Self {
        Self {
            files: self.files,
            layers: self.layers,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// `sum(self .* other)`.
    pub fn dot(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }
}
