use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// An `height x width x bands` reflectance cube stored band-interleaved by
/// pixel: the spectrum of pixel `(y, x)` is contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperspectralImage {
    height: usize,
    width: usize,
    bands: usize,
    values: Vec<f64>,
}

impl HyperspectralImage {
    pub fn new(height: usize, width: usize, bands: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::Data(format!(
                "cube dimensions must be positive, got {height}x{width}x{bands}"
            )));
        }
        if values.len() != height * width * bands {
            return Err(Error::Data(format!(
                "cube of {height}x{width}x{bands} needs {} values, got {}",
                height * width * bands,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at index {pos}")));
        }
        Ok(Self {
            height,
            width,
            bands,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn n_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Spectrum of pixel `(y, x)`.
    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let start = (y * self.width + x) * self.bands;
        &self.values[start..start + self.bands]
    }

    /// Spectrum of the pixel with raster index `p = y * width + x`.
    pub fn spectrum(&self, p: usize) -> &[f64] {
        &self.values[p * self.bands..(p + 1) * self.bands]
    }

    /// Copy with every band shifted to zero mean and scaled to unit
    /// variance. Constant bands are centered only.
    pub fn standardized(&self) -> Self {
        let n = self.n_pixels() as f64;
        let mut mean = vec![0.0; self.bands];
        for p in 0..self.n_pixels() {
            for (m, v) in mean.iter_mut().zip(self.spectrum(p)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; self.bands];
        for p in 0..self.n_pixels() {
            for (k, v) in self.spectrum(p).iter().enumerate() {
                var[k] += (v - mean[k]).powi(2);
            }
        }
        let scale: Vec<f64> = var
            .iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 0.0 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let k = i % self.bands;
                (v - mean[k]) * scale[k]
            })
            .collect();
        Self {
            values,
            ..self.clone()
        }
    }
}

/// Per-pixel class ids: `0` is unlabeled, `1..=C` are classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    height: usize,
    width: usize,
    labels: Vec<u16>,
}

impl GroundTruth {
    pub fn new(height: usize, width: usize, labels: Vec<u16>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::Data(format!(
                "label map of {height}x{width} needs {} entries, got {}",
                height * width,
                labels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn get(&self, y: usize, x: usize) -> u16 {
        self.labels[y * self.width + x]
    }

    /// Largest class id present.
    pub fn n_classes(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0) as usize
    }

    /// Checks that the map matches the image and that the class ids form the
    /// contiguous range `1..=C`.
    pub fn validate_for(&self, image: &HyperspectralImage) -> Result<()> {
        if (self.height, self.width) != (image.height(), image.width()) {
            return Err(Error::Data(format!(
                "ground truth is {}x{} but image is {}x{}",
                self.height,
                self.width,
                image.height(),
                image.width()
            )));
        }
        let c = self.n_classes();
        let mut seen = vec![false; c + 1];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = (1..=c).find(|&k| !seen[k]) {
            return Err(Error::Data(format!(
                "class ids must be contiguous 1..={c}; class {missing} is absent"
            )));
        }
        Ok(())
    }
}

/// Parsed `key = value` sidecar describing a raw data file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawHeader {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub dtype: RawType,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RawType {
    Float32,
    Uint16,
}

impl RawType {
    fn name(self) -> &'static str {
        match self {
            RawType::Float32 => "float32",
            RawType::Uint16 => "uint16",
        }
    }

    fn size(self) -> usize {
        match self {
            RawType::Float32 => 4,
            RawType::Uint16 => 2,
        }
    }
}

impl RawHeader {
    pub fn to_text(&self) -> String {
        format!(
            "height = {}\nwidth = {}\nbands = {}\ndtype = {}\norder = little\ninterleave = bip\n",
            self.height,
            self.width,
            self.bands,
            self.dtype.name()
        )
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(path, format!("malformed header line `{line}`")))?;
            kv.insert(k.trim().to_ascii_lowercase(), v.trim().to_ascii_lowercase());
        }
        let dim = |key: &str| -> Result<usize> {
            let raw = kv
                .get(key)
                .ok_or_else(|| Error::format(path, format!("header is missing `{key}`")))?;
            raw.parse()
                .map_err(|_| Error::format(path, format!("`{key}` is not an integer: {raw}")))
        };
        let height = dim("height")?;
        let width = dim("width")?;
        let bands = dim("bands")?;
        let dtype = match kv.get("dtype").map(String::as_str) {
            Some("float32") => RawType::Float32,
            Some("uint16") => RawType::Uint16,
            other => {
                return Err(Error::format(path, format!("unsupported dtype {other:?}")));
            }
        };
        match kv.get("order").map(String::as_str) {
            None | Some("little") => {}
            Some(other) => {
                return Err(Error::format(
                    path,
                    format!("unsupported byte order `{other}`"),
                ));
            }
        }
        match kv.get("interleave").map(String::as_str) {
            None | Some("bip") => {}
            Some(other) => {
                return Err(Error::format(
                    path,
                    format!("unsupported interleave `{other}`"),
                ));
            }
        }
        Ok(Self {
            height,
            width,
            bands,
            dtype,
        })
    }

    fn expected_bytes(&self) -> usize {
        self.height * self.width * self.bands * self.dtype.size()
    }
}

fn read_raw(data_path: &Path, header_path: &Path, want: RawType) -> Result<(RawHeader, Vec<u8>)> {
    let text = fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let header = RawHeader::parse(&text, header_path)?;
    if header.dtype != want {
        return Err(Error::format(
            header_path,
            format!(
                "expected dtype {}, header says {}",
                want.name(),
                header.dtype.name()
            ),
        ));
    }
    let bytes = fs::read(data_path).map_err(|e| Error::io(data_path, e))?;
    if bytes.len() != header.expected_bytes() {
        return Err(Error::format(
            data_path,
            format!(
                "size mismatch: expected {} bytes, found {}",
                header.expected_bytes(),
                bytes.len()
            ),
        ));
    }
    Ok((header, bytes))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a little-endian `float32` BIP cube and its header.
pub fn load_hsi(data_path: &Path, header_path: &Path) -> Result<HyperspectralImage> {
    let (h, bytes) = read_raw(data_path, header_path, RawType::Float32)?;
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    HyperspectralImage::new(h.height, h.width, h.bands, values)
}

/// Writes the cube as little-endian `float32`; values are narrowed.
pub fn save_hsi(image: &HyperspectralImage, data_path: &Path, header_path: &Path) -> Result<()> {
    let header = RawHeader {
        height: image.height,
        width: image.width,
        bands: image.bands,
        dtype: RawType::Float32,
    };
    let bytes: Vec<u8> = image
        .values
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    write_file(data_path, &bytes)?;
    write_file(header_path, header.to_text().as_bytes())
}

pub fn load_ground_truth(data_path: &Path, header_path: &Path) -> Result<GroundTruth> {
    let (h, bytes) = read_raw(data_path, header_path, RawType::Uint16)?;
    if h.bands != 1 {
        return Err(Error::format(header_path, "label maps must have bands = 1"));
    }
    let labels = bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    GroundTruth::new(h.height, h.width, labels)
}

pub fn save_ground_truth(gt: &GroundTruth, data_path: &Path, header_path: &Path) -> Result<()> {
    let header = RawHeader {
        height: gt.height,
        width: gt.width,
        bands: 1,
        dtype: RawType::Uint16,
    };
    let bytes: Vec<u8> = gt.labels.iter().flat_map(|v| v.to_le_bytes()).collect();
    write_file(data_path, &bytes)?;
    write_file(header_path, header.to_text().as_bytes())
}

/// File names used for a dataset directory.
pub const CUBE_DATA: &str = "cube.raw";
pub const CUBE_HEADER: &str = "cube.hdr";
pub const GT_DATA: &str = "gt.raw";
pub const GT_HEADER: &str = "gt.hdr";

pub fn save_dataset(dir: &Path, image: &HyperspectralImage, gt: &GroundTruth) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_hsi(image, &dir.join(CUBE_DATA), &dir.join(CUBE_HEADER))?;
    save_ground_truth(gt, &dir.join(GT_DATA), &dir.join(GT_HEADER))
}

pub fn load_dataset(dir: &Path) -> Result<(HyperspectralImage, GroundTruth)> {
    let image = load_hsi(&dir.join(CUBE_DATA), &dir.join(CUBE_HEADER))?;
    let gt = load_ground_truth(&dir.join(GT_DATA), &dir.join(GT_HEADER))?;
    gt.validate_for(&image)?;
    Ok((image, gt))
}
