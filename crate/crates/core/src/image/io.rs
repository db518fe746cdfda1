//! Grayscale PNG (8/16-bit) and binary PGM readers, 8-bit PNG writer.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use super::{Image, ImageError, Range};

fn io_err(path: &Path, source: std::io::Error) -> ImageError {
    ImageError::Io { path: path.display().to_string(), source }
}

/// Loads a grayscale PNG or PGM (P5) file into the `Byte255` range.
///
/// The format is detected from the leading magic bytes. 16-bit and other
/// non-8-bit depths are linearly rescaled so the format maximum maps to 255.
pub fn load(path: impl AsRef<Path>) -> Result<Image, ImageError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    decode(&bytes)
}

pub fn decode(bytes: &[u8]) -> Result<Image, ImageError> {
    if bytes.starts_with(b"\x89PNG") {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(b"P6") || bytes.starts_with(b"P3") {
        Err(ImageError::UnsupportedColor("PPM (RGB)".into()))
    } else {
        Err(ImageError::UnsupportedFormat("expected PNG or binary PGM".into()))
    }
}

pub fn decode_png(bytes: &[u8]) -> Result<Image, ImageError> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info()?;
    let source_color = reader.info().color_type;
    if source_color != png::ColorType::Grayscale {
        return Err(ImageError::UnsupportedColor(format!("{source_color:?}")));
    }
    let (color, depth) = reader.output_color_type();
    if color != png::ColorType::Grayscale {
        // tRNS expands to an alpha channel.
        return Err(ImageError::UnsupportedColor(format!("{color:?}")));
    }
    let size = reader.output_buffer_size().ok_or_else(|| ImageError::Malformed("png frame too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let pixels = match depth {
        png::BitDepth::Sixteen => {
            rows(&buf, info.line_size, w, h, 2).map(|s| u16::from_be_bytes([s[0], s[1]]) as f64 * 255.0 / 65535.0).collect()
        }
        png::BitDepth::Eight => rows(&buf, info.line_size, w, h, 1).map(|s| s[0] as f64).collect(),
        other => return Err(ImageError::UnsupportedFormat(format!("png bit depth {other:?} after expansion"))),
    };
    Image::new(w, h, Range::Byte255, pixels)
}

fn rows<'a>(buf: &'a [u8], line: usize, w: usize, h: usize, bytes_per: usize) -> impl Iterator<Item = &'a [u8]> + 'a {
    (0..h).flat_map(move |y| buf[y * line..y * line + w * bytes_per].chunks_exact(bytes_per))
}

fn decode_pgm(bytes: &[u8]) -> Result<Image, ImageError> {
    let mut pos = 2;
    let mut header = [0usize; 3];
    for field in header.iter_mut() {
        // Skip whitespace and comments.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(ImageError::Malformed("truncated pgm header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::Malformed("bad pgm header field".into()))?;
    }
    // Exactly one whitespace byte separates the header from the raster.
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(ImageError::Malformed("missing separator after pgm header".into()));
    }
    pos += 1;
    let [w, h, maxval] = header;
    if maxval == 0 || maxval > 65535 {
        return Err(ImageError::Malformed(format!("pgm maxval {maxval}")));
    }
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let data = &bytes[pos..];
    if data.len() < w * h * bytes_per {
        return Err(ImageError::Malformed("truncated pgm raster".into()));
    }
    let scale = 255.0 / maxval as f64;
    let pixels = data[..w * h * bytes_per]
        .chunks_exact(bytes_per)
        .map(|s| {
            let v = if bytes_per == 1 { s[0] as u32 } else { u16::from_be_bytes([s[0], s[1]]) as u32 };
            (v.min(maxval as u32)) as f64 * scale
        })
        .collect();
    Image::new(w, h, Range::Byte255, pixels)
}

/// Encodes as 8-bit grayscale PNG after converting to `Byte255`, clamping,
/// and rounding half to even.
pub fn encode_png(img: &Image) -> Result<Vec<u8>, ImageError> {
    let bytes = img.rescale_range(Range::Byte255);
    let data: Vec<u8> = bytes.pixels().iter().map(|&v| v.clamp(0.0, 255.0).round_ties_even() as u8).collect();
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header()?;
        writer.write_image_data(&data)?;
        writer.finish()?;
    }
    Ok(out)
}

pub fn save(path: impl AsRef<Path>, img: &Image) -> Result<(), ImageError> {
    let path = path.as_ref();
    let bytes = encode_png(img)?;
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pgm(w: usize, h: usize, maxval: u32, samples: &[u32]) -> Vec<u8> {
        let mut out = format!("P5\n# test\n{w} {h}\n{maxval}\n").into_bytes();
        for &s in samples {
            if maxval < 256 {
                out.push(s as u8);
            } else {
                out.extend_from_slice(&(s as u16).to_be_bytes());
            }
        }
        out
    }

    #[test]
    fn loads_8bit_pgm() {
        let img = decode(&pgm(2, 2, 255, &[0, 85, 170, 255])).unwrap();
        assert_eq!(img.dims(), (2, 2));
        assert_eq!(img.range(), Range::Byte255);
        assert_eq!(img.pixels(), &[0.0, 85.0, 170.0, 255.0]);
    }

    #[test]
    fn loads_16bit_pgm_rescaled() {
        let img = decode(&pgm(3, 1, 65535, &[0, 32768, 65535])).unwrap();
        assert_eq!(img.pixels()[2], 255.0);
        assert!((img.pixels()[1] - 32768.0 * 255.0 / 65535.0).abs() < 1e-12);
    }

    #[test]
    fn png_round_trip_is_pixel_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let img = Image::from_fn(19, 7, Range::Byte255, |x, y| ((x * 40 + y * 3) % 256) as f64).unwrap();
        save(&path, &img).unwrap();
        let a = load(&path).unwrap();
        assert_eq!(a, img);
        save(&path, &a).unwrap();
        assert_eq!(load(&path).unwrap(), a);
    }

    #[test]
    fn save_rounds_half_to_even() {
        let img = Image::new(4, 1, Range::Byte255, vec![0.5, 1.5, 2.5, 254.7]).unwrap();
        let back = decode_png(&encode_png(&img).unwrap()).unwrap();
        assert_eq!(back.pixels(), &[0.0, 2.0, 2.0, 255.0]);
    }

    #[test]
    fn loads_16bit_png() {
        let mut bytes = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut bytes, 2, 1);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Sixteen);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[0xff, 0xff, 0x00, 0x00]).unwrap();
        }
        let img = decode(&bytes).unwrap();
        assert_eq!(img.pixels(), &[255.0, 0.0]);
    }

    #[test]
    fn rejects_rgb() {
        let mut bytes = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut bytes, 1, 1);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[1, 2, 3]).unwrap();
        }
        assert!(matches!(decode(&bytes), Err(ImageError::UnsupportedColor(_))));
        assert!(matches!(decode(b"P6\n1 1\n255\n\x01\x02\x03"), Err(ImageError::UnsupportedColor(_))));
    }

    #[test]
    fn reports_missing_file_and_garbage() {
        assert!(matches!(load("/nonexistent/definitely.png"), Err(ImageError::Io { .. })));
        assert!(matches!(decode(b"hello"), Err(ImageError::UnsupportedFormat(_))));
        assert!(matches!(decode(b"P5\n4 4\n255\n\x00"), Err(ImageError::Malformed(_))));
    }
}
