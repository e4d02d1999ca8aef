use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use super::FormatError;
use crate::geometry::{DepthFrame, PlaneAffine};
use crate::heatmap::{HeatMapStack, ViewLink};
use crate::prior::PosePrior;
use crate::types::{CoordFrame, Plane};

const VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(FormatError::TruncatedFile { offset: self.pos, needed: n - (self.bytes.len() - self.pos) }),
        }
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<(), FormatError> {
        let found = self.take(4)?;
        if found != expected {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        Ok(())
    }

    fn version(&mut self, format: &'static str) -> Result<(), FormatError> {
        let version = self.u32()?;
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion { format, version });
        }
        Ok(())
    }

    fn finish(&self) -> Result<(), FormatError> {
        if self.pos != self.bytes.len() {
            return Err(FormatError::Invalid(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

fn dim(n: u32) -> usize {
    n as usize
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, values: impl IntoIterator<Item = f64>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, FormatError> {
    fs::read(path).map_err(|e| FormatError::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    fs::write(path, bytes).map_err(|e| FormatError::io(path, e))
}

/// `<frame_id>_<plane>.mvhm`.
pub fn heatmap_file_name(frame_id: &str, plane: Plane) -> String {
    format!("{frame_id}_{plane}.mvhm")
}

pub fn write_mvhm(stack: &HeatMapStack) -> Vec<u8> {
    let mut out = Vec::with_capacity(28 + stack.values.len() * 4 + 48);
    out.extend_from_slice(b"MVHM");
    put_u32(&mut out, VERSION as usize);
    put_u32(&mut out, stack.k);
    put_u32(&mut out, stack.width);
    put_u32(&mut out, stack.height);
    out.push(stack.plane.tag());
    out.extend_from_slice(&[0, 0, 0]);
    for v in &stack.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    put_f64s(&mut out, stack.view_link.affine.m);
    out
}

/// Decodes a heat-map stack. The file does not carry the projected image
/// size, so the caller supplies it (the run's projection resolution).
pub fn read_mvhm(bytes: &[u8], view_size: (usize, usize)) -> Result<HeatMapStack, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(b"MVHM")?;
    r.version("MVHM")?;
    let k = dim(r.u32()?);
    let width = dim(r.u32()?);
    let height = dim(r.u32()?);
    let tag = r.take(4)?[0];
    let plane = Plane::from_tag(tag).ok_or_else(|| FormatError::Invalid(format!("unknown plane tag {tag}")))?;
    if k == 0 || width == 0 || height == 0 {
        return Err(FormatError::Invalid(format!("empty stack {k}x{width}x{height}")));
    }
    let count = k
        .checked_mul(width)
        .and_then(|v| v.checked_mul(height))
        .ok_or_else(|| FormatError::Invalid("stack dimensions overflow".into()))?;
    if count.saturating_mul(4) > bytes.len() {
        return Err(FormatError::TruncatedFile { offset: r.pos, needed: count * 4 + 48 - (bytes.len() - r.pos) });
    }
    let values = (0..count).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
    let m: [f64; 6] = r.f64s(6)?.try_into().unwrap();
    r.finish()?;
    let affine = PlaneAffine::new(m);
    if !affine.is_invertible() {
        return Err(FormatError::Invalid("view affine map is not invertible".into()));
    }
    Ok(HeatMapStack {
        plane,
        k,
        width,
        height,
        values,
        view_link: ViewLink { affine, width: view_size.0, height: view_size.1 },
    })
}

/// Serializes a prior. The coordinate frame tag is not stored; readers
/// assume camera space.
pub fn write_mvpp(prior: &PosePrior) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"MVPP");
    put_u32(&mut out, VERSION as usize);
    put_u32(&mut out, prior.k());
    put_u32(&mut out, prior.m());
    put_f64s(&mut out, prior.mean.iter().copied());
    put_f64s(&mut out, prior.eigenvalues.iter().copied());
    // nalgebra storage is column-major.
    put_f64s(&mut out, prior.components.iter().copied());
    out
}

pub fn read_mvpp(bytes: &[u8]) -> Result<PosePrior, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(b"MVPP")?;
    r.version("MVPP")?;
    let k = dim(r.u32()?);
    let m = dim(r.u32()?);
    let dim3 = 3 * k;
    let needed = (dim3 + m + dim3 * m) * 8;
    if bytes.len() - r.pos < needed {
        return Err(FormatError::TruncatedFile { offset: r.pos, needed: needed - (bytes.len() - r.pos) });
    }
    let mean = DVector::from_vec(r.f64s(dim3)?);
    let eigenvalues = DVector::from_vec(r.f64s(m)?);
    let components = DMatrix::from_column_slice(dim3, m, &r.f64s(dim3 * m)?);
    r.finish()?;
    PosePrior::new(CoordFrame::Camera, mean, components, eigenvalues).map_err(|e| FormatError::Invalid(e.to_string()))
}

/// Depth file layouts accepted by [`read_depth_frame`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthAdapter {
    /// `MVDF` files.
    Canonical,
    /// Experimental reader for the community MSRA hand-dataset `.bin`
    /// layout: six u32 (`image width, image height, left, top, right,
    /// bottom`) followed by f32 depths of the `[left, right) × [top, bottom)`
    /// crop, row-major. Pixels outside the crop read as background.
    MsraLike,
}

impl FromStr for DepthAdapter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "canonical" => Ok(DepthAdapter::Canonical),
            "msra_like" | "msra-like" => Ok(DepthAdapter::MsraLike),
            other => Err(format!("unknown depth adapter `{other}` (expected canonical or msra_like)")),
        }
    }
}

pub fn write_mvdf(frame: &DepthFrame) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + frame.depth.len() * 4);
    out.extend_from_slice(b"MVDF");
    put_u32(&mut out, VERSION as usize);
    put_u32(&mut out, frame.width);
    put_u32(&mut out, frame.height);
    for d in &frame.depth {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out
}

pub fn read_depth_frame(bytes: &[u8], adapter: DepthAdapter) -> Result<DepthFrame, FormatError> {
    match adapter {
        DepthAdapter::Canonical => read_canonical(bytes),
        DepthAdapter::MsraLike => read_msra_like(bytes),
    }
}

fn read_canonical(bytes: &[u8]) -> Result<DepthFrame, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(b"MVDF")?;
    r.version("MVDF")?;
    let width = dim(r.u32()?);
    let height = dim(r.u32()?);
    let count = width.checked_mul(height).ok_or_else(|| FormatError::Invalid("frame size overflow".into()))?;
    if count.saturating_mul(4) > bytes.len() - r.pos {
        return Err(FormatError::TruncatedFile { offset: r.pos, needed: count * 4 - (bytes.len() - r.pos) });
    }
    let depth = (0..count).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
    r.finish()?;
    DepthFrame::new(width, height, depth).map_err(|e| FormatError::Invalid(e.to_string()))
}

fn read_msra_like(bytes: &[u8]) -> Result<DepthFrame, FormatError> {
    if bytes.starts_with(b"MVDF") {
        return Err(FormatError::AdapterMismatch("file is canonical MVDF; use the canonical adapter".into()));
    }
    let mut r = Reader::new(bytes);
    let mut header = [0usize; 6];
    for h in header.iter_mut() {
        *h = dim(r.u32()?);
    }
    let [width, height, left, top, right, bottom] = header;
    if width == 0 || height == 0 || left >= right || top >= bottom || right > width || bottom > height {
        return Err(FormatError::AdapterMismatch(format!("implausible msra_like header {header:?}")));
    }
    let crop_w = right - left;
    let crop_h = bottom - top;
    let expected = crop_w * crop_h * 4;
    let available = bytes.len() - r.pos;
    if available < expected {
        return Err(FormatError::TruncatedFile { offset: r.pos, needed: expected - available });
    }
    if available > expected {
        return Err(FormatError::AdapterMismatch(format!("{} bytes beyond the declared crop", available - expected)));
    }
    let mut depth = vec![0.0f32; width * height];
    for row in top..bottom {
        for col in left..right {
            depth[row * width + col] = r.f32()?;
        }
    }
    DepthFrame::new(width, height, depth).map_err(|e| FormatError::Invalid(e.to_string()))
}

pub fn read_mvhm_file(path: &Path, view_size: (usize, usize)) -> Result<HeatMapStack, FormatError> {
    read_mvhm(&read_file(path)?, view_size)
}

pub fn write_mvhm_file(path: &Path, stack: &HeatMapStack) -> Result<(), FormatError> {
    write_file(path, &write_mvhm(stack))
}

pub fn read_mvpp_file(path: &Path) -> Result<PosePrior, FormatError> {
    read_mvpp(&read_file(path)?)
}

pub fn write_mvpp_file(path: &Path, prior: &PosePrior) -> Result<(), FormatError> {
    write_file(path, &write_mvpp(prior))
}

pub fn read_depth_frame_file(path: &Path, adapter: DepthAdapter) -> Result<DepthFrame, FormatError> {
    read_depth_frame(&read_file(path)?, adapter)
}

pub fn write_mvdf_file(path: &Path, frame: &DepthFrame) -> Result<(), FormatError> {
    write_file(path, &write_mvdf(frame))
}
