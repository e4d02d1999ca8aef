use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};

use super::{fmt_f64, key_values, parse_floats, FormatError};
use crate::geometry::{ObbFrame, PlaneAffine, ProjectedView};
use crate::types::{CoordFrame, JointSet, Plane};

/// Foreground levels of exported 16-bit views: `1 + round(value · SCALE)`.
const VIEW_LEVELS: f64 = 65534.0;

/// Joints text: frame count on the first line, then one line of 3K
/// whitespace-separated millimetre values per frame, joint-major.
pub fn write_joints(sets: &[JointSet]) -> String {
    let mut out = format!("{}\n", sets.len());
    for set in sets {
        let line: Vec<String> = set.joints.iter().flat_map(|j| [j.x, j.y, j.z]).map(fmt_f64).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Parses joints text. Blank lines and `#` comment lines are ignored; sets
/// are tagged camera space.
pub fn read_joints(text: &str) -> Result<Vec<JointSet>, FormatError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| {
        let l = l.trim();
        !l.is_empty() && !l.starts_with('#')
    });
    let (first_no, first) = lines.next().ok_or_else(|| FormatError::parse(1, "missing frame count"))?;
    let declared: usize = first
        .trim()
        .parse()
        .map_err(|e| FormatError::parse(first_no + 1, format!("bad frame count `{}`: {e}", first.trim())))?;
    let mut sets = Vec::with_capacity(declared);
    let mut width = None;
    for (i, line) in lines {
        let values = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| FormatError::parse(i + 1, format!("`{t}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() || values.len() % 3 != 0 {
            return Err(FormatError::parse(i + 1, format!("{} values is not a multiple of 3", values.len())));
        }
        if *width.get_or_insert(values.len()) != values.len() {
            return Err(FormatError::parse(
                i + 1,
                format!("{} values, previous frames had {}", values.len(), width.unwrap_or(0)),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FormatError::parse(i + 1, "non-finite joint coordinate"));
        }
        let joints = values.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect();
        sets.push(JointSet::new(CoordFrame::Camera, joints));
    }
    if sets.len() != declared {
        return Err(FormatError::CountMismatch { declared, found: sets.len() });
    }
    Ok(sets)
}

pub fn load_joints_file(path: &Path) -> Result<Vec<JointSet>, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    read_joints(&text)
}

pub fn save_joints_file(path: &Path, sets: &[JointSet]) -> Result<(), FormatError> {
    fs::write(path, write_joints(sets)).map_err(|e| FormatError::io(path, e))
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(fmt_f64).collect::<Vec<_>>().join(" ")
}

/// OBB as `origin`, `axes` (row-major 3×3, columns are the box axes) and
/// `extents` key-value lines.
pub fn write_obb(obb: &ObbFrame) -> String {
    let axes_rows = (0..3).flat_map(|r| (0..3).map(move |c| (r, c))).map(|(r, c)| obb.axes[(r, c)]);
    format!(
        "origin = {}\naxes = {}\nextents = {}\n",
        join(obb.origin.iter().copied()),
        join(axes_rows),
        join(obb.extents.iter().copied())
    )
}

pub fn read_obb(text: &str) -> Result<ObbFrame, FormatError> {
    let (mut origin, mut axes, mut extents) = (None, None, None);
    for (line, key, value) in key_values(text)? {
        match key.as_str() {
            "origin" => origin = Some(Vector3::from_vec(parse_floats(line, &value, 3)?)),
            "axes" => axes = Some(Matrix3::from_row_slice(&parse_floats(line, &value, 9)?)),
            "extents" => extents = Some(Vector3::from_vec(parse_floats(line, &value, 3)?)),
            other => return Err(FormatError::parse(line, format!("unknown key `{other}`"))),
        }
    }
    match (origin, axes, extents) {
        (Some(origin), Some(axes), Some(extents)) => Ok(ObbFrame { origin, axes, extents }),
        _ => Err(FormatError::Invalid("OBB needs origin, axes and extents".into())),
    }
}

pub fn read_obb_file(path: &Path) -> Result<ObbFrame, FormatError> {
    read_obb(&fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?)
}

pub fn write_obb_file(path: &Path, obb: &ObbFrame) -> Result<(), FormatError> {
    fs::write(path, write_obb(obb)).map_err(|e| FormatError::io(path, e))
}

fn meta_path(pgm: &Path) -> PathBuf {
    pgm.with_extension("meta")
}

/// Writes `<stem>.pgm` (binary 16-bit graymap) and `<stem>.meta`.
///
/// Background pixels are 0; foreground pixels store `1 + round(v · 65534)`
/// for normalized distance `v`. The sidecar records the plane, normalization
/// range and pixel affine map.
pub fn write_view_files(dir: &Path, stem: &str, view: &ProjectedView) -> Result<PathBuf, FormatError> {
    let pgm = dir.join(format!("{stem}.pgm"));
    let mut bytes = format!("P5\n{} {}\n65535\n", view.width, view.height).into_bytes();
    for (v, m) in view.values.iter().zip(view.mask.iter()) {
        let level: u16 = if *m { 1 + (v.clamp(0.0, 1.0) * VIEW_LEVELS).round() as u16 } else { 0 };
        bytes.extend_from_slice(&level.to_be_bytes());
    }
    fs::write(&pgm, bytes).map_err(|e| FormatError::io(&pgm, e))?;
    let meta = format!(
        "# sidecar of {stem}.pgm; foreground level = 1 + round(value * 65534), 0 = background\n\
         plane = {}\nwidth = {}\nheight = {}\nnear = {}\nfar = {}\naffine = {}\n",
        view.plane,
        view.width,
        view.height,
        fmt_f64(view.near),
        fmt_f64(view.far),
        join(view.affine.m)
    );
    let meta_file = meta_path(&pgm);
    fs::write(&meta_file, meta).map_err(|e| FormatError::io(&meta_file, e))?;
    Ok(pgm)
}

fn pgm_header(bytes: &[u8]) -> Result<(usize, usize, usize, usize), FormatError> {
    // Four whitespace-separated tokens: magic, width, height, maxval.
    let mut tokens = Vec::new();
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(FormatError::TruncatedFile { offset: pos, needed: 1 });
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if tokens[0] != "P5" {
        return Err(FormatError::BadMagic { expected: "P5".into(), found: tokens[0].clone() });
    }
    let num = |t: &str| t.parse::<usize>().map_err(|e| FormatError::Invalid(format!("PGM header `{t}`: {e}")));
    Ok((num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?, pos + 1))
}

/// Reads a view written by [`write_view_files`]; values are quantized to
/// 1/65534.
pub fn read_view_files(pgm: &Path) -> Result<ProjectedView, FormatError> {
    let bytes = fs::read(pgm).map_err(|e| FormatError::io(pgm, e))?;
    let meta_file = meta_path(pgm);
    let meta = fs::read_to_string(&meta_file).map_err(|e| FormatError::io(&meta_file, e))?;

    let (mut plane, mut near, mut far, mut affine) = (None, None, None, None);
    for (line, key, value) in key_values(&meta)? {
        match key.as_str() {
            "plane" => plane = Some(value.parse::<Plane>().map_err(|e| FormatError::parse(line, e))?),
            "near" => near = Some(parse_floats(line, &value, 1)?[0]),
            "far" => far = Some(parse_floats(line, &value, 1)?[0]),
            "affine" => affine = Some(PlaneAffine::new(parse_floats(line, &value, 6)?.try_into().unwrap())),
            "width" | "height" => {}
            other => return Err(FormatError::parse(line, format!("unknown key `{other}`"))),
        }
    }
    let (Some(plane), Some(near), Some(far), Some(affine)) = (plane, near, far, affine) else {
        return Err(FormatError::Invalid("view sidecar needs plane, near, far and affine".into()));
    };

    let (width, height, maxval, start) = pgm_header(&bytes)?;
    if maxval != 65535 {
        return Err(FormatError::Invalid(format!("expected 16-bit PGM, maxval {maxval}")));
    }
    let needed = width * height * 2;
    if bytes.len() < start + needed {
        return Err(FormatError::TruncatedFile { offset: bytes.len(), needed: start + needed - bytes.len() });
    }
    let mut values = Vec::with_capacity(width * height);
    let mut mask = Vec::with_capacity(width * height);
    for px in bytes[start..start + needed].chunks_exact(2) {
        let level = u16::from_be_bytes([px[0], px[1]]);
        mask.push(level > 0);
        values.push(if level > 0 { (level - 1) as f64 / VIEW_LEVELS } else { 0.0 });
    }
    Ok(ProjectedView { plane, width, height, values, mask, near, far, affine })
}
