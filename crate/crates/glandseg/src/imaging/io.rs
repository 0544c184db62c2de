//! Image file I/O: 8-bit PNG (gray/RGB) and the FMAP float-map container.
//!
//! FMAP layout: magic `FMAP`, three little-endian u32 fields (width,
//! height, channels), then `w*h*c` IEEE-754 32-bit little-endian floats in
//! row-major, channel-interleaved order. Save followed by load is the
//! identity on samples, dimensions and channel count.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::Image;

pub const FMAP_MAGIC: &[u8; 4] = b"FMAP";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Load a PNG or FMAP image; the format is sniffed from the file header,
/// not the extension. PNG sources get a `[0,255]` declared range; FMAP
/// sources get `[0,1]` when all samples fit it, otherwise the data extent.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() >= 4 && &bytes[..4] == FMAP_MAGIC {
        decode_fmap(path, &bytes)
    } else if bytes.len() >= 8 && bytes[..8] == [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a] {
        decode_png(path, &bytes)
    } else {
        Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: "not a PNG or FMAP file".into(),
        })
    }
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<Image> {
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png).map_err(
        |e| Error::CorruptHeader {
            path: path.to_path_buf(),
            detail: e.to_string(),
        },
    )?;
    match decoded {
        image::DynamicImage::ImageLuma8(img) => {
            let (w, h) = (img.width() as usize, img.height() as usize);
            let data = img.into_raw().into_iter().map(|b| b as f32).collect();
            Image::from_data(w, h, 1, data, (0.0, 255.0))
        }
        image::DynamicImage::ImageRgb8(img) => {
            let (w, h) = (img.width() as usize, img.height() as usize);
            let data = img.into_raw().into_iter().map(|b| b as f32).collect();
            Image::from_data(w, h, 3, data, (0.0, 255.0))
        }
        other => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: format!(
                "PNG color type {:?} (only 8-bit gray and 8-bit RGB are supported)",
                other.color()
            ),
        }),
    }
}

fn decode_fmap(path: &Path, bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 16 {
        return Err(Error::CorruptHeader {
            path: path.to_path_buf(),
            detail: format!("header needs 16 bytes, file has {}", bytes.len()),
        });
    }
    let field = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (w, h, c) = (field(4), field(8), field(12));
    if w == 0 || h == 0 || c == 0 {
        return Err(Error::CorruptHeader {
            path: path.to_path_buf(),
            detail: format!("zero dimension in header ({w}x{h}x{c})"),
        });
    }
    let n = w * h * c;
    let expected = 16 + 4 * n;
    if bytes.len() < expected {
        return Err(Error::CorruptPayload {
            path: path.to_path_buf(),
            detail: format!(
                "expected {} sample bytes, found {}",
                4 * n,
              bytes.len() - 16
            ),
        });
    }
    let mut data = Vec::with_capacity(n);
    for i in 0..n {
        let o = 16 + 4 * i;
        data.push(f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()));
    }
    let range = nominal_range(&data);
    Image::from_data(w, h, c, data, range)
}

fn nominal_range(data: &[f32]) -> (f32, f32) {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in data {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo >= 0.0 && hi <= 1.0 {
        (0.0, 1.0)
    } else if lo < hi {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

/// Save an image; the format is chosen by extension (`.png` or `.fmap`).
/// PNG export rounds samples to `u8` and requires 1 or 3 channels; FMAP
/// export is bit-exact.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("fmap") => save_fmap(img, path),
        Some("png") => save_png(img, path),
        other => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: format!("cannot infer format from extension {:?}", other),
        }),
    }
}

fn save_fmap(img: &Image, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(16 + 4 * img.data().len());
    out.extend_from_slice(FMAP_MAGIC);
    out.extend_from_slice(&(img.width() as u32).to_le_bytes());
    out.extend_from_slice(&(img.height() as u32).to_le_bytes());
    out.extend_from_slice(&(img.channels() as u32).to_le_bytes());
    for &v in img.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&out).map_err(|e| io_err(path, e))
}

fn save_png(img: &Image, path: &Path) -> Result<()> {
    let w = img.width() as u32;
    let h = img.height() as u32;
    let quant: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    let result = match img.channels() {
        1 => image::GrayImage::from_raw(w, h, quant)
            .expect("buffer sized from image")
            .save_with_format(path, image::ImageFormat::Png),
        3 => image::RgbImage::from_raw(w, h, quant)
            .expect("buffer sized from image")
            .save_with_format(path, image::ImageFormat::Png),
        c => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                detail: format!("PNG export supports 1 or 3 channels, image has {c}"),
            })
        }
    };
    result.map_err(|e| match e {
        image::ImageError::IoError(io) => io_err(path, io),
        other => Error::Data(format!("{}: {other}", path.display())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmap_round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.fmap");
        let data = vec![0.0f32, -1.5, 3.25, 0.1, f32::MIN_POSITIVE, 1e20];
        let img = Image::from_data(3, 1, 2, data.clone(), (0.0, 1.0)).unwrap();
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.width(), 3);
        assert_eq!(back.height(), 1);
        assert_eq!(back.channels(), 2);
        assert_eq!(back.data(), &data[..]);
    }

    #[test]
    fn png_gray_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let img = Image::from_data(2, 2, 1, vec![0.0, 255.0, 128.0, 64.0], (0.0, 255.0)).unwrap();
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.channels(), 1);
        assert_eq!(back.data(), img.data());
        assert_eq!(back.value_range(), (0.0, 255.0));
    }

    #[test]
    fn png_rgb_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        let img = Image::from_data(2, 1, 3, vec![255.0, 0.0, 12.0, 3.0, 200.0, 90.0], (0.0, 255.0))
            .unwrap();
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.channels(), 3);
        assert_eq!(back.data(), img.data());
    }

    #[test]
    fn truncated_fmap_reports_corrupt_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.fmap");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(FMAP_MAGIC);
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes()); // 1 of 6 samples
        fs::write(&path, &bytes).unwrap();
        match load_image(&path) {
            Err(Error::CorruptPayload { .. }) => {}
            other => panic!("expected corrupt payload, got {other:?}"),
        }
    }

    #[test]
    fn short_fmap_header_is_distinct_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.fmap");
        fs::write(&path, b"FMAP\x01\x00").unwrap();
        match load_image(&path) {
            Err(Error::CorruptHeader { .. }) => {}
            other => panic!("expected corrupt header, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_and_unknown_format_are_distinct() {
        assert!(matches!(
            load_image("/nonexistent/x.png"),
            Err(Error::Io { .. })
        ));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        fs::write(&path, b"not an image at all").unwrap();
        assert!(matches!(
            load_image(&path),
            Err(Error::UnsupportedFormat { .. })
        ));
    }

    #[test]
    fn save_to_missing_directory_fails() {
        let img = Image::new(2, 2, 1, (0.0, 255.0));
        assert!(matches!(
            save_image(&img, "/nonexistent/dir/x.fmap"),
            Err(Error::Io { .. })
        ));
    }
}
