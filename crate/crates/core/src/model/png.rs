use std::io::Cursor;

use png::{BitDepth, ColorType, Compression, Decoder, Encoder, Transformations};

use super::{Raster, ValidationError};

pub const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];

pub fn is_png(bytes: &[u8]) -> bool {
    bytes.starts_with(&PNG_SIGNATURE)
}

/// Decode a PNG into 8-bit RGBA. Palette, greyscale and 16-bit images are
/// expanded; animated PNGs are refused.
pub fn decode_png(bytes: &[u8]) -> Result<Raster, ValidationError> {
    if !is_png(bytes) {
        return Err(ValidationError::PngRequired);
    }
    let undecodable = |e: png::DecodingError| ValidationError::UndecodablePng(e.to_string());

    let mut decoder = Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(undecodable)?;
    if reader.info().animation_control.is_some() {
        return Err(ValidationError::AnimatedPng);
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ValidationError::UndecodablePng("image too large".into()))?;
    let mut buf = vec![0; size];
    let frame = reader.next_frame(&mut buf).map_err(undecodable)?;
    buf.truncate(frame.buffer_size());

    let (width, height) = (frame.width, frame.height);
    let n = width as usize * height as usize;
    let rgba = match frame.color_type {
        ColorType::Rgba => buf,
        ColorType::Rgb => {
            let mut out = Vec::with_capacity(n * 4);
            for px in buf.chunks_exact(3) {
                out.extend_from_slice(&[px[0], px[1], px[2], 255]);
            }
            out
        }
        ColorType::Grayscale => {
            let mut out = Vec::with_capacity(n * 4);
            for &g in &buf {
                out.extend_from_slice(&[g, g, g, 255]);
            }
            out
        }
        ColorType::GrayscaleAlpha => {
            let mut out = Vec::with_capacity(n * 4);
            for px in buf.chunks_exact(2) {
                out.extend_from_slice(&[px[0], px[0], px[0], px[1]]);
            }
            out
        }
        ColorType::Indexed => {
            return Err(ValidationError::UndecodablePng(
                "palette was not expanded".into(),
            ))
        }
    };
    Raster::new(width, height, rgba)
}

/// Encode an RGBA raster. Output is deterministic for equal inputs.
pub fn encode_png(raster: &Raster) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = Encoder::new(&mut out, raster.width(), raster.height());
        enc.set_color(ColorType::Rgba);
        enc.set_depth(BitDepth::Eight);
        enc.set_compression(Compression::Fast);
        let mut writer = enc.write_header().expect("in-memory png header");
        writer
            .write_image_data(raster.as_bytes())
            .expect("in-memory png data");
        writer.finish().expect("in-memory png finish");
    }
    out
}

/// Encode a boolean grid as a 1-bit greyscale PNG (true = white).
pub fn encode_bilevel_png(width: u32, height: u32, bits: &[bool]) -> Vec<u8> {
    assert_eq!(bits.len(), width as usize * height as usize);
    let stride = (width as usize).div_ceil(8);
    let mut packed = vec![0u8; stride * height as usize];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            let (y, x) = (i / width as usize, i % width as usize);
            packed[y * stride + x / 8] |= 0x80 >> (x % 8);
        }
    }
    let mut out = Vec::new();
    {
        let mut enc = Encoder::new(&mut out, width, height);
        enc.set_color(ColorType::Grayscale);
        enc.set_depth(BitDepth::One);
        let mut writer = enc.write_header().expect("in-memory png header");
        writer.write_image_data(&packed).expect("in-memory png data");
        writer.finish().expect("in-memory png finish");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encode_with(width: u32, height: u32, color: ColorType, depth: BitDepth, data: &[u8], palette: Option<&[u8]>) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = Encoder::new(&mut out, width, height);
            enc.set_color(color);
            enc.set_depth(depth);
            if let Some(p) = palette {
                enc.set_palette(p.to_vec());
            }
            let mut w = enc.write_header().unwrap();
            w.write_image_data(data).unwrap();
        }
        out
    }

    #[test]
    fn round_trip_rgba() {
        let mut r = Raster::filled(3, 2, [1, 2, 3, 4]);
        r.set_pixel(2, 1, [250, 0, 7, 255]);
        let png = encode_png(&r);
        assert!(is_png(&png));
        assert_eq!(decode_png(&png).unwrap(), r);
        assert_eq!(encode_png(&r), png);
    }

    #[test]
    fn expands_greyscale_and_palette() {
        let grey = encode_with(2, 1, ColorType::Grayscale, BitDepth::Eight, &[10, 200], None);
        let r = decode_png(&grey).unwrap();
        assert_eq!(r.pixel(0, 0), [10, 10, 10, 255]);
        assert_eq!(r.pixel(1, 0), [200, 200, 200, 255]);

        let pal = encode_with(2, 1, ColorType::Indexed, BitDepth::Eight, &[1, 0], Some(&[0, 0, 0, 9, 8, 7]));
        let r = decode_png(&pal).unwrap();
        assert_eq!(r.pixel(0, 0), [9, 8, 7, 255]);
        assert_eq!(r.pixel(1, 0), [0, 0, 0, 255]);

        let rgb16 = encode_with(1, 1, ColorType::Rgb, BitDepth::Sixteen, &[0xff, 0, 0x80, 0, 0, 0], None);
        assert_eq!(decode_png(&rgb16).unwrap().pixel(0, 0), [255, 128, 0, 255]);
    }

    #[test]
    fn rejects_non_png_and_garbage() {
        // JPEG SOI marker
        assert_eq!(decode_png(&[0xff, 0xd8, 0xff, 0xe0, 0, 0]), Err(ValidationError::PngRequired));
        let mut truncated = encode_png(&Raster::filled(4, 4, [0; 4]));
        truncated.truncate(20);
        assert!(matches!(decode_png(&truncated), Err(ValidationError::UndecodablePng(_))));
    }

    #[test]
    fn bilevel_mask_decodes_back() {
        let bits = [true, false, false, true, true, true, false, false, false, true];
        let png = encode_bilevel_png(5, 2, &bits);
        let r = decode_png(&png).unwrap();
        for (i, &b) in bits.iter().enumerate() {
            let px = r.pixel_at(i);
            assert_eq!(px[0] == 255, b, "bit {i}");
        }
    }
}
