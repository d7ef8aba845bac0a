//! 8-bit RGB PNG output.

use std::fs::File;
use std::io::{BufReader, Cursor, Write};
use std::path::Path;

use crate::render::RgbImage;
use crate::{Error, Result};

fn png_error(e: impl std::fmt::Display) -> Error {
    Error::Format(format!("png: {e}"))
}

fn encode_into<W: Write>(img: &RgbImage, sink: W) -> Result<()> {
    if img.data.len() != img.side * img.side * 3 || img.side == 0 {
        return Err(Error::InvalidInput(format!(
            "{} bytes do not form a {}×{} RGB image",
            img.data.len(),
            img.side,
            img.side
        )));
    }
    let mut enc = png::Encoder::new(sink, img.side as u32, img.side as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(png_error)?;
    writer.write_image_data(&img.data).map_err(png_error)?;
    writer.finish().map_err(png_error)
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    encode_into(img, &mut out)?;
    Ok(out)
}

pub fn write_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn decode_from<R: std::io::BufRead + std::io::Seek>(source: R) -> Result<RgbImage> {
    let mut reader = png::Decoder::new(source).read_info().map_err(png_error)?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| png_error("image too large"))?];
    let info = reader.next_frame(&mut buf).map_err(png_error)?;
    if info.width != info.height {
        return Err(Error::Format(format!("expected a square image, got {}×{}", info.width, info.height)));
    }
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format(format!(
            "expected 8-bit RGB, got {:?} at {:?}",
            info.color_type, info.bit_depth
        )));
    }
    buf.truncate(info.buffer_size());
    Ok(RgbImage {
        side: info.width as usize,
        data: buf,
    })
}

pub fn decode_png(bytes: &[u8]) -> Result<RgbImage> {
    decode_from(Cursor::new(bytes))
}

pub fn read_png(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    decode_from(BufReader::new(file))
}
