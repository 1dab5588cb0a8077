//! MetaImage (`.mha`) reader and writer for a single-file subset.
//!
//! Supported header keys: `ObjectType = Image`, `NDims` (2, or 3 for a
//! frame stack), `BinaryData = True`, `BinaryDataByteOrderMSB` /
//! `ElementByteOrderMSB`, `CompressedData = False`, `Offset` (aliases
//! `Origin`, `Position`), `ElementSpacing`, `DimSize`, `ElementType`
//! (`MET_UCHAR`, `MET_SHORT`, `MET_FLOAT`) and `ElementDataFile = LOCAL`.
//! `TransformMatrix`, `CenterOfRotation`, `AnatomicalOrientation` and
//! `ElementNumberOfChannels` are accepted when they carry their trivial
//! values. Any other key is rejected.
//!
//! For `NDims = 3` the third axis is the frame index; its spacing and
//! offset are carried but have no spatial meaning.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{Geometry, Image2D, Mask2D, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementType {
    UChar,
    Short,
    Float,
}

impl ElementType {
    pub fn as_str(self) -> &'static str {
        match self {
            ElementType::UChar => "MET_UCHAR",
            ElementType::Short => "MET_SHORT",
            ElementType::Float => "MET_FLOAT",
        }
    }

    pub fn size(self) -> usize {
        match self {
            ElementType::UChar => 1,
            ElementType::Short => 2,
            ElementType::Float => 4,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "MET_UCHAR" => Some(ElementType::UChar),
            "MET_SHORT" => Some(ElementType::Short),
            "MET_FLOAT" => Some(ElementType::Float),
            _ => None,
        }
    }
}

/// A decoded MetaImage: one or more frames sharing a 2D geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaImage {
    pub geometry: Geometry,
    /// `1` for a 2D file.
    pub frames: usize,
    /// Whether the file is (or should be written as) `NDims = 3`.
    pub stacked: bool,
    pub element_type: ElementType,
    /// Row-major, frame after frame.
    pub data: Vec<f32>,
}

impl MetaImage {
    pub fn from_image(img: &Image2D) -> Self {
        MetaImage {
            geometry: *img.geometry(),
            frames: 1,
            stacked: false,
            element_type: ElementType::Float,
            data: img.values().to_vec(),
        }
    }

    pub fn from_images(imgs: &[Image2D]) -> Result<Self> {
        let first = imgs
            .first()
            .ok_or_else(|| Error::Input("cannot write an empty image stack".into()))?;
        let mut data = Vec::with_capacity(first.values().len() * imgs.len());
        for (t, img) in imgs.iter().enumerate() {
            img.geometry().ensure_same(first.geometry(), &format!("stack frame {t}"))?;
            data.extend_from_slice(img.values());
        }
        Ok(MetaImage {
            geometry: *first.geometry(),
            frames: imgs.len(),
            stacked: true,
            element_type: ElementType::Float,
            data,
        })
    }

    pub fn from_mask(mask: &Mask2D) -> Self {
        MetaImage {
            geometry: *mask.geometry(),
            frames: 1,
            stacked: false,
            element_type: ElementType::UChar,
            data: mask.values().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn from_masks(masks: &[Mask2D]) -> Result<Self> {
        let first = masks
            .first()
            .ok_or_else(|| Error::Input("cannot write an empty mask stack".into()))?;
        let mut data = Vec::with_capacity(first.values().len() * masks.len());
        for (t, m) in masks.iter().enumerate() {
            m.geometry().ensure_same(first.geometry(), &format!("stack mask {t}"))?;
            data.extend(m.values().iter().map(|&v| v as f32));
        }
        Ok(MetaImage {
            geometry: *first.geometry(),
            frames: masks.len(),
            stacked: true,
            element_type: ElementType::UChar,
            data,
        })
    }

    fn frame_slices(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks(self.geometry.len())
    }

    pub fn into_images(self) -> Result<Vec<Image2D>> {
        self.frame_slices()
            .map(|s| Image2D::new(self.geometry, s.to_vec()))
            .collect()
    }

    /// Frames as masks; every voxel must be 0 or 1.
    pub fn into_masks(self) -> Result<Vec<Mask2D>> {
        self.frame_slices()
            .map(|s| {
                let v = s
                    .iter()
                    .map(|&x| match x {
                        0.0 => Ok(0u8),
                        1.0 => Ok(1u8),
                        other => Err(Error::Input(format!("mask value {other} is not 0 or 1"))),
                    })
                    .collect::<Result<Vec<u8>>>()?;
                Mask2D::new(self.geometry, v)
            })
            .collect()
    }
}

fn corrupt(path: &Path, detail: impl Into<String>) -> Error {
    Error::CorruptFile {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

fn unsupported(path: &Path, detail: impl Into<String>) -> Error {
    Error::UnsupportedFormat {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

fn parse_numbers(path: &Path, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| corrupt(path, format!("bad number `{t}` in {key}")))
        })
        .collect()
}

fn parse_bool(path: &Path, key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(corrupt(path, format!("bad boolean `{v}` in {key}"))),
    }
}

#[derive(Default)]
struct Header {
    ndims: Option<usize>,
    dims: Option<Vec<f64>>,
    spacing: Option<Vec<f64>>,
    offset: Option<Vec<f64>>,
    element_type: Option<ElementType>,
    msb: bool,
}

fn is_identity_matrix(values: &[f64]) -> bool {
    let n = (values.len() as f64).sqrt() as usize;
    n * n == values.len()
        && values
            .iter()
            .enumerate()
            .all(|(i, &v)| v == if i / n == i % n { 1.0 } else { 0.0 })
}

/// Parses the header, returning it with the payload offset.
fn parse_header(path: &Path, bytes: &[u8]) -> Result<(Header, usize)> {
    let mut h = Header::default();
    let mut pos = 0;
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| pos + i)
            .ok_or_else(|| corrupt(path, "header ends before ElementDataFile"))?;
        let line = std::str::from_utf8(&bytes[pos..end])
            .map_err(|_| corrupt(path, "header is not valid text"))?
            .trim_end_matches('\r');
        pos = end + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| corrupt(path, format!("header line without `=`: {line}")))?;
        match key {
            "ObjectType" if value == "Image" => {}
            "ObjectType" => return Err(unsupported(path, format!("ObjectType {value}"))),
            "NDims" => {
                let n: usize = value.parse().map_err(|_| corrupt(path, "bad NDims"))?;
                if n != 2 && n != 3 {
                    return Err(unsupported(path, format!("NDims {n}")));
                }
                h.ndims = Some(n);
            }
            "BinaryData" => {
                if !parse_bool(path, key, value)? {
                    return Err(unsupported(path, "ASCII payload"));
                }
            }
            "CompressedData" => {
                if parse_bool(path, key, value)? {
                    return Err(unsupported(path, "compressed payload"));
                }
            }
            "BinaryDataByteOrderMSB" | "ElementByteOrderMSB" => {
                h.msb = parse_bool(path, key, value)?;
            }
            "DimSize" => h.dims = Some(parse_numbers(path, key, value)?),
            "ElementSpacing" => h.spacing = Some(parse_numbers(path, key, value)?),
            "Offset" | "Origin" | "Position" => h.offset = Some(parse_numbers(path, key, value)?),
            "ElementType" => {
                h.element_type = Some(
                    ElementType::parse(value)
                        .ok_or_else(|| unsupported(path, format!("ElementType {value}")))?,
                );
            }
            "ElementNumberOfChannels" if value == "1" => {}
            "ElementNumberOfChannels" => return Err(unsupported(path, "multi-channel elements")),
            "TransformMatrix" | "Orientation" | "Rotation" => {
                if !is_identity_matrix(&parse_numbers(path, key, value)?) {
                    return Err(unsupported(path, "non-identity orientation"));
                }
            }
            "CenterOfRotation" | "AnatomicalOrientation" => {}
            "ElementDataFile" => {
                if value != "LOCAL" {
                    return Err(unsupported(path, format!("external data file `{value}`")));
                }
                return Ok((h, pos));
            }
            other => {
                return Err(Error::UnknownHeaderKey {
                    path: path.to_path_buf(),
                    key: other.to_string(),
                })
            }
        }
    }
}

/// Reads a MetaImage file.
pub fn read_metaimage(path: impl AsRef<Path>) -> Result<MetaImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(path, &bytes)
}

fn missing(path: &Path, key: &str) -> Error {
    Error::MissingHeaderKey {
        path: path.to_path_buf(),
        key: key.to_string(),
    }
}

fn decode(path: &Path, bytes: &[u8]) -> Result<MetaImage> {
    let (h, start) = parse_header(path, bytes)?;
    let ndims = h.ndims.ok_or_else(|| missing(path, "NDims"))?;
    let dims = h.dims.ok_or_else(|| missing(path, "DimSize"))?;
    let element_type = h.element_type.ok_or_else(|| missing(path, "ElementType"))?;
    let spacing = h.spacing.unwrap_or_else(|| vec![1.0; ndims]);
    let offset = h.offset.unwrap_or_else(|| vec![0.0; ndims]);
    for (key, v) in [("DimSize", &dims), ("ElementSpacing", &spacing), ("Offset", &offset)] {
        if v.len() != ndims {
            return Err(corrupt(path, format!("{key} has {} values, NDims is {ndims}", v.len())));
        }
    }
    if dims.iter().any(|&d| d < 1.0 || d.fract() != 0.0) {
        return Err(corrupt(path, "DimSize must be positive integers"));
    }
    let (w, hgt) = (dims[0] as usize, dims[1] as usize);
    let frames = if ndims == 3 { dims[2] as usize } else { 1 };
    let geometry = Geometry::new(
        w,
        hgt,
        Vec2::new(spacing[0], spacing[1]),
        Vec2::new(offset[0], offset[1]),
    )
    .map_err(|e| corrupt(path, e.to_string()))?;

    let count = w * hgt * frames;
    let payload = &bytes[start..];
    let expected = count * element_type.size();
    if payload.len() != expected {
        return Err(corrupt(
            path,
            format!("payload has {} bytes, header implies {expected}", payload.len()),
        ));
    }
    let data: Vec<f32> = match element_type {
        ElementType::UChar => payload.iter().map(|&b| b as f32).collect(),
        ElementType::Short => payload
            .chunks_exact(2)
            .map(|c| {
                let b = [c[0], c[1]];
                (if h.msb { i16::from_be_bytes(b) } else { i16::from_le_bytes(b) }) as f32
            })
            .collect(),
        ElementType::Float => payload
            .chunks_exact(4)
            .map(|c| {
                let b = [c[0], c[1], c[2], c[3]];
                if h.msb {
                    f32::from_be_bytes(b)
                } else {
                    f32::from_le_bytes(b)
                }
            })
            .collect(),
    };
    if data.iter().any(|v| !v.is_finite()) {
        return Err(corrupt(path, "non-finite voxel values"));
    }
    Ok(MetaImage {
        geometry,
        frames,
        stacked: ndims == 3,
        element_type,
        data,
    })
}

/// Encodes `img` to bytes: header plus little-endian payload.
pub fn encode(img: &MetaImage) -> Result<Vec<u8>> {
    let g = &img.geometry;
    if img.frames == 0 || img.data.len() != g.len() * img.frames {
        return Err(Error::Input(format!(
            "{} values for {} frames of {}x{}",
            img.data.len(),
            img.frames,
            g.width,
            g.height
        )));
    }
    if !img.stacked && img.frames != 1 {
        return Err(Error::Input("a multi-frame image must be written stacked".into()));
    }
    if let Some(v) = img.data.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("voxel value {v}")));
    }
    let check_range = |lo: f32, hi: f32, name: &str| -> Result<()> {
        match img.data.iter().find(|&&v| v.fract() != 0.0 || v < lo || v > hi) {
            Some(v) => Err(Error::Input(format!("value {v} not representable as {name}"))),
            None => Ok(()),
        }
    };
    match img.element_type {
        ElementType::UChar => check_range(0.0, 255.0, "MET_UCHAR")?,
        ElementType::Short => check_range(i16::MIN as f32, i16::MAX as f32, "MET_SHORT")?,
        ElementType::Float => {}
    }

    let (dims, spacing, offset) = if img.stacked {
        (
            format!("{} {} {}", g.width, g.height, img.frames),
            format!("{} {} 1", g.spacing.x, g.spacing.y),
            format!("{} {} 0", g.origin.x, g.origin.y),
        )
    } else {
        (
            format!("{} {}", g.width, g.height),
            format!("{} {}", g.spacing.x, g.spacing.y),
            format!("{} {}", g.origin.x, g.origin.y),
        )
    };
    let header = format!(
        "ObjectType = Image\n\
         NDims = {}\n\
         BinaryData = True\n\
         BinaryDataByteOrderMSB = False\n\
         CompressedData = False\n\
         Offset = {offset}\n\
         ElementSpacing = {spacing}\n\
         DimSize = {dims}\n\
         ElementType = {}\n\
         ElementDataFile = LOCAL\n",
        if img.stacked { 3 } else { 2 },
        img.element_type.as_str(),
    );
    let mut out = header.into_bytes();
    out.reserve(img.data.len() * img.element_type.size());
    for &v in &img.data {
        match img.element_type {
            ElementType::UChar => out.push(v as u8),
            ElementType::Short => out.extend_from_slice(&(v as i16).to_le_bytes()),
            ElementType::Float => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    Ok(out)
}

/// Writes `img` to `path`. The caller must hold exclusive access to `path`.
pub fn write_metaimage(img: &MetaImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(img)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn single_frame(path: &Path, m: &MetaImage) -> Result<()> {
    if m.frames != 1 {
        return Err(Error::Input(format!(
            "{} holds {} frames, expected one",
            PathBuf::from(path).display(),
            m.frames
        )));
    }
    Ok(())
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image2D> {
    let path = path.as_ref();
    let m = read_metaimage(path)?;
    single_frame(path, &m)?;
    Ok(m.into_images()?.remove(0))
}

pub fn read_image_stack(path: impl AsRef<Path>) -> Result<Vec<Image2D>> {
    read_metaimage(path)?.into_images()
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask2D> {
    let path = path.as_ref();
    let m = read_metaimage(path)?;
    single_frame(path, &m)?;
    Ok(masks_in(path, m)?.remove(0))
}

pub fn read_mask_stack(path: impl AsRef<Path>) -> Result<Vec<Mask2D>> {
    let path = path.as_ref();
    masks_in(path, read_metaimage(path)?)
}

fn masks_in(path: &Path, m: MetaImage) -> Result<Vec<Mask2D>> {
    m.into_masks().map_err(|e| match e {
        Error::Input(detail) => corrupt(path, detail),
        other => other,
    })
}

/// Writes a 2D `MET_FLOAT` file.
pub fn write_image(img: &Image2D, path: impl AsRef<Path>) -> Result<()> {
    write_metaimage(&MetaImage::from_image(img), path)
}

/// Writes frames as one `NDims = 3` `MET_FLOAT` file.
pub fn write_image_stack(imgs: &[Image2D], path: impl AsRef<Path>) -> Result<()> {
    write_metaimage(&MetaImage::from_images(imgs)?, path)
}

/// Writes a 2D `MET_UCHAR` file with values in {0, 1}.
pub fn write_mask(mask: &Mask2D, path: impl AsRef<Path>) -> Result<()> {
    write_metaimage(&MetaImage::from_mask(mask), path)
}

pub fn write_mask_stack(masks: &[Mask2D], path: impl AsRef<Path>) -> Result<()> {
    write_metaimage(&MetaImage::from_masks(masks)?, path)
}
