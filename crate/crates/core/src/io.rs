//! On-disk acquisition container and grayscale export.
//!
//! A container is a file pair `<name>.json` (header) + `<name>.cplx`
//! (payload). The payload holds interleaved real/imaginary little-endian
//! floats in shot-major, channel, row, column order. Masks are stored in
//! the header as run lengths over the row-major `rows x cols` grid.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::acquisition::{AcqMeta, AcquisitionSet};
use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, Domain, RealImage};
use crate::operators::{MaskKind, SamplingMask};

pub const HEADER_EXT: &str = "json";
pub const PAYLOAD_EXT: &str = "cplx";
const FORMAT_TAG: &str = "msk";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    /// 32-bit float pairs.
    Complex64,
    /// 64-bit float pairs.
    Complex128,
}

impl Dtype {
    pub fn bytes_per_value(self) -> usize {
        match self {
            Dtype::Complex64 => 8,
            Dtype::Complex128 => 16,
        }
    }
}

/// Run-length encoded binary mask. Runs alternate starting with `first`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskRle {
    pub first: bool,
    pub runs: Vec<u64>,
}

impl MaskRle {
    pub fn encode(bits: &[bool]) -> Self {
        let first = bits.first().copied().unwrap_or(false);
        let mut runs = Vec::new();
        let mut current = first;
        let mut len = 0u64;
        for &b in bits {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        runs.push(len);
        Self { first, runs }
    }

    pub fn decode(&self, expected_len: usize) -> std::result::Result<Vec<bool>, String> {
        let total: u64 = self.runs.iter().sum();
        if total != expected_len as u64 {
            return Err(format!("mask runs cover {total} entries, expected {expected_len}"));
        }
        let mut out = Vec::with_capacity(expected_len);
        let mut value = self.first;
        for &run in &self.runs {
            out.extend(std::iter::repeat_n(value, run as usize));
            value = !value;
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format: String,
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub shots: usize,
    pub dtype: Dtype,
    pub endianness: String,
    pub b_value: f64,
    pub direction: Option<[f64; 3]>,
    pub mask_kind: MaskKind,
    pub masks: Vec<MaskRle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl Header {
    pub fn payload_bytes(&self) -> u64 {
        (self.rows * self.cols * self.channels * self.shots * self.dtype.bytes_per_value()) as u64
    }
}

#[derive(Clone, Debug, Default)]
pub struct SaveOptions {
    pub dtype: Option<Dtype>,
    pub config_hash: Option<String>,
}

/// Resolves `<name>`, `<name>.json` or `<name>.cplx` to the file pair.
pub fn container_paths(path: &Path) -> (PathBuf, PathBuf) {
    let base = match path.extension().and_then(|e| e.to_str()) {
        Some(HEADER_EXT) | Some(PAYLOAD_EXT) => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut header = base.clone().into_os_string();
    header.push(".");
    header.push(HEADER_EXT);
    let mut payload = base.into_os_string();
    payload.push(".");
    payload.push(PAYLOAD_EXT);
    (header.into(), payload.into())
}

pub fn save_acquisition(set: &AcquisitionSet, path: &Path) -> Result<()> {
    save_acquisition_with(set, path, &SaveOptions::default())
}

pub fn save_acquisition_with(set: &AcquisitionSet, path: &Path, opts: &SaveOptions) -> Result<()> {
    let (header_path, payload_path) = container_paths(path);
    let dtype = opts.dtype.unwrap_or(Dtype::Complex64);
    let header = Header {
        format: FORMAT_TAG.into(),
        rows: set.rows(),
        cols: set.cols(),
        channels: set.channels(),
        shots: set.shots(),
        dtype,
        endianness: "little".into(),
        b_value: set.meta().b_value,
        direction: set.meta().direction,
        mask_kind: set.mask(0).kind(),
        masks: set.masks().iter().map(|m| MaskRle::encode(m.as_slice())).collect(),
        config_hash: opts.config_hash.clone(),
    };
    if let Some(parent) = header_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let text = serde_json::to_string_pretty(&header).expect("header serializes");
    fs::write(&header_path, text + "\n").map_err(|e| Error::io(&header_path, e))?;

    let file = fs::File::create(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    let mut w = BufWriter::new(file);
    for grid in set.all_kspace() {
        for z in grid.as_slice() {
            let res = match dtype {
                Dtype::Complex64 => w
                    .write_all(&(z.re as f32).to_le_bytes())
                    .and_then(|_| w.write_all(&(z.im as f32).to_le_bytes())),
                Dtype::Complex128 => w
                    .write_all(&z.re.to_le_bytes())
                    .and_then(|_| w.write_all(&z.im.to_le_bytes())),
            };
            res.map_err(|e| Error::io(&payload_path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&payload_path, e))
}

pub fn read_header(path: &Path) -> Result<Header> {
    let (header_path, _) = container_paths(path);
    let text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let malformed = |reason: String| Error::MalformedHeader {
        path: header_path.clone(),
        reason,
    };
    let header: Header = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    if header.format != FORMAT_TAG {
        return Err(malformed(format!("unknown format tag {:?}", header.format)));
    }
    if header.endianness != "little" {
        return Err(malformed(format!("unsupported endianness {:?}", header.endianness)));
    }
    if header.rows == 0 || header.cols == 0 || header.channels == 0 || header.shots == 0 {
        return Err(malformed("all dimensions must be positive".into()));
    }
    if header.masks.len() != header.shots {
        return Err(Error::InvalidMask(format!(
            "header lists {} masks for {} shots",
            header.masks.len(),
            header.shots
        )));
    }
    Ok(header)
}

pub fn load_acquisition(path: &Path) -> Result<AcquisitionSet> {
    let header = read_header(path)?;
    let (header_path, payload_path) = container_paths(path);
    let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    if bytes.len() as u64 != header.payload_bytes() {
        return Err(Error::PayloadSize {
            path: payload_path,
            expected: header.payload_bytes(),
            found: bytes.len() as u64,
        });
    }
    let (n, m) = (header.rows, header.cols);
    let masks = header
        .masks
        .iter()
        .map(|rle| {
            let bits = rle.decode(n * m).map_err(|reason| Error::MalformedHeader {
                path: header_path.clone(),
                reason,
            })?;
            SamplingMask::from_vec(n, m, header.mask_kind, bits)
        })
        .collect::<Result<Vec<_>>>()?;

    let values = decode_payload(&bytes, header.dtype);
    if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("acquisition payload"));
    }
    let grids = values
        .chunks_exact(n * m)
        .map(|chunk| ComplexGrid::from_vec(n, m, Domain::Kspace, chunk.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let meta = AcqMeta {
        b_value: header.b_value,
        direction: header.direction,
    };
    AcquisitionSet::new(grids, header.channels, masks, meta)
}

fn decode_payload(bytes: &[u8], dtype: Dtype) -> Vec<Complex64> {
    match dtype {
        Dtype::Complex64 => bytes
            .chunks_exact(8)
            .map(|b| {
                let re = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
                let im = f32::from_le_bytes([b[4], b[5], b[6], b[7]]);
                Complex64::new(re as f64, im as f64)
            })
            .collect(),
        Dtype::Complex128 => bytes
            .chunks_exact(16)
            .map(|b| {
                let re = f64::from_le_bytes(b[..8].try_into().unwrap());
                let im = f64::from_le_bytes(b[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect(),
    }
}

/// Stores real images (one per shot slot) in the container format.
pub fn save_real_images(images: &[RealImage], path: &Path, opts: &SaveOptions) -> Result<()> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidParameter("nothing to save".into()))?;
    let (n, m) = first.shape();
    let grids = images.iter().map(|i| i.to_complex().with_domain(Domain::Kspace)).collect();
    let masks = vec![SamplingMask::full(n, m).with_kind(MaskKind::UniformUndersampled); images.len()];
    let set = AcquisitionSet::new(grids, 1, masks, AcqMeta::default())?;
    save_acquisition_with(&set, path, opts)
}

/// Stores complex images (one per shot slot) in the container format.
pub fn save_complex_images(images: &[ComplexGrid], path: &Path, opts: &SaveOptions) -> Result<()> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidParameter("nothing to save".into()))?;
    let (n, m) = first.shape();
    let masks = vec![SamplingMask::full(n, m).with_kind(MaskKind::UniformUndersampled); images.len()];
    let set = AcquisitionSet::new(images.to_vec(), 1, masks, AcqMeta::default())?;
    save_acquisition_with(&set, path, opts)
}

/// Real parts of every grid in a container (shot-major, channel order).
pub fn load_real_images(path: &Path) -> Result<Vec<RealImage>> {
    let set = load_acquisition(path)?;
    Ok(set.all_kspace().iter().map(|g| g.real_part()).collect())
}

/// Display window for grayscale export.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Window {
    /// `[0, 99.5th percentile]`.
    Auto,
    Fixed { lo: f64, hi: f64 },
}

/// Maps a value to 8 bits: `round(255 * clamp((v - lo) / (hi - lo)))`
/// with halves rounded away from zero, so 0.5 in `[0, 1]` becomes 128.
pub fn quantize(image: &RealImage, window: Window) -> Result<Vec<u8>> {
    let values = image.as_slice();
    if values.is_empty() {
        return Err(Error::InvalidParameter("cannot export an empty image".into()));
    }
    let (lo, hi) = match window {
        Window::Fixed { lo, hi } => (lo, hi),
        Window::Auto => (0.0, percentile(values, 99.5)),
    };
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidParameter("non-finite display window".into()));
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    Ok(values
        .iter()
        .map(|&v| {
            let t = ((v - lo) / span).clamp(0.0, 1.0);
            (t * 255.0).round() as u8
        })
        .collect())
}

/// Nearest-rank percentile.
fn percentile(values: &[f64], pct: f64) -> f64 {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return 0.0;
    }
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Writes an 8-bit grayscale PNG (`.png`) or binary PGM (`.pgm`).
pub fn export_grayscale(image: &RealImage, path: &Path, window: Window) -> Result<()> {
    export_grayscale_tagged(image, path, window, None)
}

/// Like [`export_grayscale`], embedding `config_hash` as a PGM comment or
/// a PNG text chunk.
pub fn export_grayscale_tagged(
    image: &RealImage,
    path: &Path,
    window: Window,
    config_hash: Option<&str>,
) -> Result<()> {
    let pixels = quantize(image, window)?;
    let (rows, cols) = image.shape();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("pgm") => {
            let comment = config_hash.map(|h| format!("# config-hash {h}\n")).unwrap_or_default();
            let mut bytes = format!("P5\n{comment}{cols} {rows}\n255\n").into_bytes();
            bytes.extend_from_slice(&pixels);
            fs::write(path, bytes).map_err(|e| Error::io(path, e))
        }
        Some("png") => {
            let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
            let mut enc = png::Encoder::new(BufWriter::new(file), cols as u32, rows as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let to_io = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
            if let Some(h) = config_hash {
                enc.add_text_chunk("config-hash".into(), h.into()).map_err(to_io)?;
            }
            let mut writer = enc.write_header().map_err(to_io)?;
            writer.write_image_data(&pixels).map_err(to_io)?;
            writer.finish().map_err(to_io)
        }
        _ => Err(Error::InvalidParameter(format!(
            "unsupported image extension for {}",
            path.display()
        ))),
    }
}
