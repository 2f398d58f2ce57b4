//! 8-bit RGB rasters, quantization and PPM/PNG encoding.

use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("expected a [1, 3, H, W] tensor, got {0:?}")]
    Shape(Vec<usize>),
    #[error("cannot stack images of heights {0} and {1}")]
    HeightMismatch(usize, usize),
    #[error("malformed PPM: {0}")]
    Ppm(String),
    #[error("png encoding failed: {0}")]
    PngEncode(#[from] png::EncodingError),
    #[error("png decoding failed: {0}")]
    PngDecode(#[from] png::DecodingError),
    #[error("unsupported png layout {0}")]
    PngLayout(String),
}

/// Row-major, RGB-interleaved 8-bit image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    #[default]
    Ppm,
    Png,
}

impl ImageFormat {
    pub fn content_type(self) -> &'static str {
        match self {
            ImageFormat::Ppm => "image/x-portable-pixmap",
            ImageFormat::Png => "image/png",
        }
    }
}

impl std::str::FromStr for ImageFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ppm" => Ok(ImageFormat::Ppm),
            "png" => Ok(ImageFormat::Png),
            other => Err(format!("unknown image format {other:?} (expected ppm or png)")),
        }
    }
}

/// `byte = round(clamp((x + 1) / 2, 0, 1) · 255)`, rounding half away from zero.
pub fn quantize(x: f32) -> u8 {
    let v = ((x + 1.0) * 0.5).clamp(0.0, 1.0);
    // NaN survives clamp; treat as black
    if v.is_nan() {
        return 0;
    }
    (v * 255.0).round() as u8
}

pub fn to_image(x: &Tensor) -> Result<ImageBuffer, ImageError> {
    let s = x.shape();
    if s.len() != 4 || s[0] != 1 || s[1] != 3 {
        return Err(ImageError::Shape(s.to_vec()));
    }
    let (h, w) = (s[2], s[3]);
    let plane = h * w;
    let d = x.data();
    let mut data = Vec::with_capacity(3 * plane);
    for p in 0..plane {
        for c in 0..3 {
            data.push(quantize(d[c * plane + p]));
        }
    }
    Ok(ImageBuffer {
        width: w,
        height: h,
        data,
    })
}

impl ImageBuffer {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Binary PPM (P6, maxval 255).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    /// Parses the P6 layout written by [`to_ppm`](Self::to_ppm).
    pub fn from_ppm(bytes: &[u8]) -> Result<Self, ImageError> {
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(ImageError::Ppm("header ended early".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if fields[0] != "P6" || fields[3] != "255" {
            return Err(ImageError::Ppm(format!("unsupported header {fields:?}")));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| ImageError::Ppm(format!("bad dimension {s:?}")))
        };
        let (width, height) = (parse(&fields[1])?, parse(&fields[2])?);
        let body = bytes.get(pos + 1..).unwrap_or_default();
        if body.len() != width * height * 3 {
            return Err(ImageError::Ppm(format!(
                "expected {} pixel bytes, found {}",
                width * height * 3,
                body.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data: body.to_vec(),
        })
    }

    /// 8-bit RGB PNG.
    pub fn to_png(&self) -> Result<Vec<u8>, ImageError> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header()?;
            writer.write_image_data(&self.data)?;
        }
        Ok(out)
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self, ImageError> {
        let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
        let mut reader = decoder.read_info()?;
        let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
        let info = reader.next_frame(&mut buf)?;
        if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
            return Err(ImageError::PngLayout(format!(
                "{:?}/{:?}",
                info.color_type, info.bit_depth
            )));
        }
        buf.truncate(info.buffer_size());
        Ok(Self {
            width: info.width as usize,
            height: info.height as usize,
            data: buf,
        })
    }

    pub fn encode(&self, format: ImageFormat) -> Result<Vec<u8>, ImageError> {
        match format {
            ImageFormat::Ppm => Ok(self.to_ppm()),
            ImageFormat::Png => self.to_png(),
        }
    }

    /// Decodes either format by sniffing the signature.
    pub fn decode(bytes: &[u8]) -> Result<Self, ImageError> {
        if bytes.starts_with(b"P6") {
            Self::from_ppm(bytes)
        } else {
            Self::from_png(bytes)
        }
    }
}

/// Places images side by side, left to right.
pub fn hstack(images: &[ImageBuffer]) -> Result<ImageBuffer, ImageError> {
    let height = images.first().map_or(0, |i| i.height);
    if let Some(bad) = images.iter().find(|i| i.height != height) {
        return Err(ImageError::HeightMismatch(height, bad.height));
    }
    let width: usize = images.iter().map(|i| i.width).sum();
    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for img in images {
            let row = 3 * img.width;
            data.extend_from_slice(&img.data[y * row..(y + 1) * row]);
        }
    }
    Ok(ImageBuffer {
        width,
        height,
        data,
    })
}
