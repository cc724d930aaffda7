//! Single-file NIfTI-1 subset: little-endian `.nii`, no extensions,
//! orientation fields ignored. Intensity scaling is applied on read and
//! never re-emitted.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::volume::{ShapeError, Volume};

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;
const MAGIC: &[u8; 4] = b"n+1\0";

#[derive(Debug, Error)]
pub enum NiftiError {
    #[error("not a single-file NIfTI-1 volume (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("big-endian NIfTI files are not supported")]
    BigEndian,
    #[error("unsupported datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("file holds {actual} bytes but the header declares {expected}")]
    TruncatedData { expected: usize, actual: usize },
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("data length {actual} does not match header extent {expected}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    UInt8,
    Int16,
    Float32,
    Float64,
}

impl Datatype {
    pub fn code(self) -> i16 {
        match self {
            Datatype::UInt8 => 2,
            Datatype::Int16 => 4,
            Datatype::Float32 => 16,
            Datatype::Float64 => 64,
        }
    }

    pub fn from_code(code: i16) -> Result<Self, NiftiError> {
        Ok(match code {
            2 => Datatype::UInt8,
            4 => Datatype::Int16,
            16 => Datatype::Float32,
            64 => Datatype::Float64,
            other => return Err(NiftiError::UnsupportedDatatype(other)),
        })
    }

    pub fn bytes(self) -> usize {
        match self {
            Datatype::UInt8 => 1,
            Datatype::Int16 => 2,
            Datatype::Float32 => 4,
            Datatype::Float64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeHeader {
    /// Three or four extents.
    pub dims: Vec<usize>,
    /// Voxel size in mm.
    pub voxel_size: [f64; 3],
    pub datatype: Datatype,
    pub scl_slope: f64,
    pub scl_inter: f64,
}

impl VolumeHeader {
    pub fn new(dims: &[usize], voxel_size: [f64; 3], datatype: Datatype) -> Self {
        Self { dims: dims.to_vec(), voxel_size, datatype, scl_slope: 1.0, scl_inter: 0.0 }
    }

    pub fn n_values(&self) -> usize {
        self.dims.iter().product()
    }

    fn validate(&self) -> Result<(), NiftiError> {
        if !(3..=4).contains(&self.dims.len()) {
            return Err(NiftiError::InvalidHeader(format!("{} dimensions, expected 3 or 4", self.dims.len())));
        }
        if self.dims.iter().any(|d| *d == 0 || *d > i16::MAX as usize) {
            return Err(NiftiError::InvalidHeader(format!("extents {:?} out of range", self.dims)));
        }
        if self.voxel_size.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(NiftiError::InvalidHeader(format!("voxel sizes {:?} must be positive", self.voxel_size)));
        }
        Ok(())
    }
}

fn i16_at(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn f32_at(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

pub fn decode_nifti(bytes: &[u8]) -> Result<(VolumeHeader, Vec<f64>), NiftiError> {
    if bytes.len() < HEADER_SIZE {
        return Err(NiftiError::TruncatedData { expected: HEADER_SIZE, actual: bytes.len() });
    }
    let sizeof_le = i32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let sizeof_be = i32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let magic = [bytes[344], bytes[345], bytes[346], bytes[347]];
    if &magic != MAGIC {
        return Err(NiftiError::BadMagic(magic));
    }
    if sizeof_le != HEADER_SIZE as i32 {
        if sizeof_be == HEADER_SIZE as i32 {
            return Err(NiftiError::BigEndian);
        }
        return Err(NiftiError::InvalidHeader(format!("sizeof_hdr = {sizeof_le}")));
    }

    let ndim = i16_at(bytes, 40);
    if !(3..=4).contains(&ndim) {
        return Err(NiftiError::InvalidHeader(format!("dim[0] = {ndim}")));
    }
    let mut dims = Vec::with_capacity(ndim as usize);
    for k in 1..=ndim as usize {
        let d = i16_at(bytes, 40 + 2 * k);
        if d < 1 {
            return Err(NiftiError::InvalidHeader(format!("dim[{k}] = {d}")));
        }
        dims.push(d as usize);
    }
    // trailing singleton frame axis collapses to 3-D
    if dims.len() == 4 && dims[3] == 1 {
        dims.pop();
    }
    let datatype = Datatype::from_code(i16_at(bytes, 70))?;
    let voxel_size = [f32_at(bytes, 80) as f64, f32_at(bytes, 84) as f64, f32_at(bytes, 88) as f64];
    let vox_offset = f32_at(bytes, 108);
    if !(vox_offset >= VOX_OFFSET as f32) || vox_offset.fract() != 0.0 {
        return Err(NiftiError::InvalidHeader(format!("vox_offset = {vox_offset}")));
    }
    let mut scl_slope = f32_at(bytes, 112) as f64;
    let mut scl_inter = f32_at(bytes, 116) as f64;
    if scl_slope == 0.0 || !scl_slope.is_finite() {
        scl_slope = 1.0;
        scl_inter = 0.0;
    }
    if !scl_inter.is_finite() {
        scl_inter = 0.0;
    }
    let header = VolumeHeader { dims, voxel_size, datatype, scl_slope, scl_inter };
    header.validate()?;

    let n = header.n_values();
    let start = vox_offset as usize;
    let expected = start + n * datatype.bytes();
    if bytes.len() < expected {
        return Err(NiftiError::TruncatedData { expected, actual: bytes.len() });
    }
    let payload = &bytes[start..expected];
    let raw: Vec<f64> = match datatype {
        Datatype::UInt8 => payload.iter().map(|v| *v as f64).collect(),
        Datatype::Int16 => payload.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]]) as f64).collect(),
        Datatype::Float32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        Datatype::Float64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect(),
    };
    let data = if scl_slope == 1.0 && scl_inter == 0.0 {
        raw
    } else {
        raw.into_iter().map(|v| v * scl_slope + scl_inter).collect()
    };
    Ok((header, data))
}

/// Encodes with slope 1 / intercept 0. Integer datatypes round and saturate.
pub fn encode_nifti(header: &VolumeHeader, data: &[f64]) -> Result<Vec<u8>, NiftiError> {
    header.validate()?;
    let n = header.n_values();
    if data.len() != n {
        return Err(NiftiError::SizeMismatch { expected: n, actual: data.len() });
    }
    let dt = header.datatype;
    let mut out = vec![0u8; VOX_OFFSET + n * dt.bytes()];
    out[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    let mut dim = [1i16; 8];
    dim[0] = header.dims.len() as i16;
    for (k, d) in header.dims.iter().enumerate() {
        dim[k + 1] = *d as i16;
    }
    for (k, d) in dim.iter().enumerate() {
        out[40 + 2 * k..42 + 2 * k].copy_from_slice(&d.to_le_bytes());
    }
    out[70..72].copy_from_slice(&dt.code().to_le_bytes());
    out[72..74].copy_from_slice(&((dt.bytes() * 8) as i16).to_le_bytes());
    let mut pixdim = [1f32; 8];
    for k in 0..3 {
        pixdim[k + 1] = header.voxel_size[k] as f32;
    }
    for (k, p) in pixdim.iter().enumerate() {
        out[76 + 4 * k..80 + 4 * k].copy_from_slice(&p.to_le_bytes());
    }
    out[108..112].copy_from_slice(&(VOX_OFFSET as f32).to_le_bytes());
    out[112..116].copy_from_slice(&1f32.to_le_bytes());
    out[116..120].copy_from_slice(&0f32.to_le_bytes());
    // xyzt_units: mm and seconds
    out[123] = 2 | 8;
    out[344..348].copy_from_slice(MAGIC);

    let payload = &mut out[VOX_OFFSET..];
    match dt {
        Datatype::UInt8 => {
            for (o, v) in payload.iter_mut().zip(data) {
                *o = v.round().clamp(0.0, u8::MAX as f64) as u8;
            }
        }
        Datatype::Int16 => {
            for (o, v) in payload.chunks_exact_mut(2).zip(data) {
                o.copy_from_slice(&(v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16).to_le_bytes());
            }
        }
        Datatype::Float32 => {
            for (o, v) in payload.chunks_exact_mut(4).zip(data) {
                o.copy_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        Datatype::Float64 => {
            for (o, v) in payload.chunks_exact_mut(8).zip(data) {
                o.copy_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn read_nifti(path: &Path) -> Result<(VolumeHeader, Vec<f64>), NiftiError> {
    decode_nifti(&fs::read(path)?)
}

pub fn write_nifti(header: &VolumeHeader, data: &[f64], path: &Path) -> Result<(), NiftiError> {
    let bytes = encode_nifti(header, data)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Volume from in-memory NIfTI bytes; fewer than three spatial axes are padded with 1.
pub fn decode_volume(bytes: &[u8]) -> Result<Volume<f64>, NiftiError> {
    let (h, data) = decode_nifti(bytes)?;
    let dim = |i: usize| h.dims.get(i).copied().unwrap_or(1);
    Ok(Volume::new([dim(0), dim(1), dim(2)], dim(3), h.voxel_size, data)?)
}

pub fn encode_volume(volume: &Volume<f64>, datatype: Datatype) -> Result<Vec<u8>, NiftiError> {
    let s = volume.spatial_dims();
    let dims: Vec<usize> = if volume.frames() > 1 { vec![s[0], s[1], s[2], volume.frames()] } else { s.to_vec() };
    encode_nifti(&VolumeHeader::new(&dims, volume.voxel_size(), datatype), volume.data())
}

pub fn read_volume(path: &Path) -> Result<Volume<f64>, NiftiError> {
    decode_volume(&fs::read(path)?)
}

pub fn write_volume(volume: &Volume<f64>, datatype: Datatype, path: &Path) -> Result<(), NiftiError> {
    fs::write(path, encode_volume(volume, datatype)?)?;
    Ok(())
}
