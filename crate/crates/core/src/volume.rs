//! Voxel grids. Data are stored x-fastest: index = x + nx·(y + ny·(z + nz·t)).

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ShapeError {
    #[error("extent must be at least 1, got {0:?}")]
    ZeroExtent([usize; 4]),
    #[error("voxel sizes must be positive, got {0:?}")]
    BadVoxelSize([f64; 3]),
    #[error("expected {expected} values, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("grid mismatch: {0:?} vs {1:?}")]
    Mismatch([usize; 3], [usize; 3]),
}

/// A 3-D grid of scalars, optionally with a fourth (frame) axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    dims: [usize; 4],
    voxel_size: [f64; 3],
    data: Vec<T>,
}

impl<T: Copy> Volume<T> {
    pub fn new(spatial: [usize; 3], frames: usize, voxel_size: [f64; 3], data: Vec<T>) -> Result<Self, ShapeError> {
        let dims = [spatial[0], spatial[1], spatial[2], frames];
        if dims.contains(&0) {
            return Err(ShapeError::ZeroExtent(dims));
        }
        if voxel_size.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(ShapeError::BadVoxelSize(voxel_size));
        }
        let expected = dims.iter().product();
        if data.len() != expected {
            return Err(ShapeError::Length { expected, actual: data.len() });
        }
        Ok(Self { dims, voxel_size, data })
    }

    pub fn filled(spatial: [usize; 3], frames: usize, voxel_size: [f64; 3], value: T) -> Result<Self, ShapeError> {
        let n = spatial.iter().product::<usize>() * frames;
        Self::new(spatial, frames, voxel_size, vec![value; n])
    }

    pub fn spatial_dims(&self) -> [usize; 3] {
        [self.dims[0], self.dims[1], self.dims[2]]
    }

    pub fn frames(&self) -> usize {
        self.dims[3]
    }

    pub fn voxel_size(&self) -> [f64; 3] {
        self.voxel_size
    }

    pub fn n_voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn linear_index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    /// Inverse of [`linear_index`](Self::linear_index).
    pub fn coords(&self, voxel: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [voxel % nx, (voxel / nx) % ny, voxel / (nx * ny)]
    }

    #[inline]
    pub fn at(&self, voxel: usize, frame: usize) -> T {
        self.data[voxel + self.n_voxels() * frame]
    }

    pub fn get(&self, x: usize, y: usize, z: usize, frame: usize) -> T {
        self.at(self.linear_index(x, y, z), frame)
    }

    /// All frames of one voxel.
    pub fn series(&self, voxel: usize) -> Vec<T> {
        (0..self.frames()).map(|t| self.at(voxel, t)).collect()
    }

    pub fn frame(&self, t: usize) -> &[T] {
        let n = self.n_voxels();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn ensure_same_grid<U: Copy>(&self, other: &Volume<U>) -> Result<(), ShapeError> {
        if self.spatial_dims() != other.spatial_dims() {
            return Err(ShapeError::Mismatch(self.spatial_dims(), other.spatial_dims()));
        }
        Ok(())
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Volume<U> {
        Volume { dims: self.dims, voxel_size: self.voxel_size, data: self.data.iter().map(|v| f(*v)).collect() }
    }

    /// Builds a multi-frame volume by stacking per-voxel series.
    pub fn from_series(spatial: [usize; 3], voxel_size: [f64; 3], series: &[Vec<T>], frames: usize, fill: T) -> Result<Self, ShapeError> {
        let n: usize = spatial.iter().product();
        if series.len() != n {
            return Err(ShapeError::Length { expected: n, actual: series.len() });
        }
        let mut data = vec![fill; n * frames];
        for (v, s) in series.iter().enumerate() {
            for (t, val) in s.iter().take(frames).enumerate() {
                data[v + n * t] = *val;
            }
        }
        Self::new(spatial, frames, voxel_size, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_order_is_x_fastest() {
        let v = Volume::new([2, 3, 4], 2, [1.0; 3], (0..48).collect()).unwrap();
        assert_eq!(v.get(1, 0, 0, 0), 1);
        assert_eq!(v.get(0, 1, 0, 0), 2);
        assert_eq!(v.get(0, 0, 1, 0), 6);
        assert_eq!(v.get(0, 0, 0, 1), 24);
        assert_eq!(v.coords(v.linear_index(1, 2, 3)), [1, 2, 3]);
        assert_eq!(v.series(5), vec![5, 29]);
    }

    #[test]
    fn rejects_zero_extent_and_bad_length() {
        assert!(matches!(Volume::<f32>::filled([0, 1, 1], 1, [1.0; 3], 0.0), Err(ShapeError::ZeroExtent(_))));
        assert!(matches!(Volume::new([2, 2, 2], 1, [1.0; 3], vec![0.0f32; 7]), Err(ShapeError::Length { .. })));
        assert!(matches!(Volume::filled([1, 1, 1], 1, [0.0, 1.0, 1.0], 0.0f64), Err(ShapeError::BadVoxelSize(_))));
    }
}
