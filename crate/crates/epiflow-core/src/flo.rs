//! Flow and image file IO: the float flow container with the 202021.25 magic,
//! the 16-bit PNG flow encoding with (value - 2^15) / 64 quantization and a
//! validity channel, and plain 8-bit PNG images.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::Error;
use crate::types::{FlowField, Image};

pub const FLO_MAGIC: f32 = 202021.25;

/// Writes the binary flow format: magic f32, width and height as little-endian
/// i32, then row-major interleaved (u, v) f32 pairs.
pub fn write_flo(path: &Path, flow: &FlowField) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&FLO_MAGIC.to_le_bytes())?;
    w.write_all(&(flow.width() as i32).to_le_bytes())?;
    w.write_all(&(flow.height() as i32).to_le_bytes())?;
    for f in flow.data() {
        w.write_all(&(f[0] as f32).to_le_bytes())?;
        w.write_all(&(f[1] as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact_or_truncated(r: &mut impl Read, buf: &mut [u8], expected: usize) -> Result<usize, Error> {
    let mut got = 0;
    while got < buf.len() {
        let n = r.read(&mut buf[got..])?;
        if n == 0 {
            return Err(Error::TruncatedFile { expected, got });
        }
        got += n;
    }
    Ok(got)
}

pub fn read_flo(path: &Path) -> Result<FlowField, Error> {
    let mut r = BufReader::new(File::open(path)?);
    let mut head = [0u8; 12];
    read_exact_or_truncated(&mut r, &mut head, 12)?;
    let magic = f32::from_le_bytes(head[0..4].try_into().unwrap());
    if magic != FLO_MAGIC {
        return Err(Error::BadMagic);
    }
    let w = i32::from_le_bytes(head[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(head[8..12].try_into().unwrap());
    if w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16 {
        return Err(Error::BadFormat(format!("implausible flow dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = 12 + w * h * 8;
    let mut bytes = vec![0u8; w * h * 8];
    read_exact_or_truncated(&mut r, &mut bytes, expected)
        .map_err(|e| match e {
            Error::TruncatedFile { got, .. } => Error::TruncatedFile { expected, got: 12 + got },
            other => other,
        })?;
    let mut flow = FlowField::new(w, h);
    for (i, f) in flow.data_mut().iter_mut().enumerate() {
        let u = f32::from_le_bytes(bytes[i * 8..i * 8 + 4].try_into().unwrap());
        let v = f32::from_le_bytes(bytes[i * 8 + 4..i * 8 + 8].try_into().unwrap());
        *f = [u as f64, v as f64];
    }
    Ok(flow)
}

/// Reads the 16-bit PNG flow encoding: u = (R - 2^15) / 64, v = (G - 2^15) / 64,
/// valid where B > 0. Invalid pixels come back as zero flow.
pub fn read_flow_png(path: &Path) -> Result<(FlowField, Vec<bool>), Error> {
    let dynimg = image::open(path)?;
    let img = match dynimg {
        image::DynamicImage::ImageRgb16(img) => img,
        other => {
            return Err(Error::BadFormat(format!(
                "flow PNG must be 16-bit RGB, got {:?}",
                other.color()
            )))
        }
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut flow = FlowField::new(w, h);
    let mut valid = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let px = img.get_pixel(x as u32, y as u32);
            let i = y * w + x;
            if px[2] > 0 {
                valid[i] = true;
                flow.data_mut()[i] = [
                    (px[0] as f64 - 32768.0) / 64.0,
                    (px[1] as f64 - 32768.0) / 64.0,
                ];
            }
        }
    }
    Ok((flow, valid))
}

/// Inverse of `read_flow_png`. Flow values are clamped to the representable
/// range [-512, 511.98]; a missing mask marks every pixel valid.
pub fn write_flow_png(path: &Path, flow: &FlowField, valid: Option<&[bool]>) -> Result<(), Error> {
    let (w, h) = (flow.width(), flow.height());
    if let Some(v) = valid {
        if v.len() != w * h {
            return Err(Error::DimensionMismatch(format!(
                "validity mask has {} entries for a {}x{} flow",
                v.len(),
                w,
                h
            )));
        }
    }
    let mut img = image::ImageBuffer::<image::Rgb<u16>, Vec<u16>>::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let ok = valid.map_or(true, |v| v[i]);
            let px = if ok {
                let [u, v] = flow.data()[i];
                let qu = (u * 64.0 + 32768.0).round().clamp(0.0, 65535.0) as u16;
                let qv = (v * 64.0 + 32768.0).round().clamp(0.0, 65535.0) as u16;
                image::Rgb([qu, qv, 1u16])
            } else {
                image::Rgb([32768, 32768, 0])
            };
            img.put_pixel(x as u32, y as u32, px);
        }
    }
    img.save(path)?;
    Ok(())
}

/// Loads an 8-bit PNG as intensities in [0, 1]; grayscale stays one channel,
/// anything else becomes three.
pub fn read_image(path: &Path) -> Result<Image, Error> {
    let dynimg = image::open(path)?;
    match dynimg {
        image::DynamicImage::ImageLuma8(img) => {
            let (w, h) = (img.width() as usize, img.height() as usize);
            Ok(Image::from_fn(w, h, 1, |x, y, _| {
                img.get_pixel(x as u32, y as u32)[0] as f64 / 255.0
            }))
        }
        other => {
            let img = other.to_rgb8();
            let (w, h) = (img.width() as usize, img.height() as usize);
            Ok(Image::from_fn(w, h, 3, |x, y, c| {
                img.get_pixel(x as u32, y as u32)[c] as f64 / 255.0
            }))
        }
    }
}

pub fn write_image(path: &Path, img: &Image) -> Result<(), Error> {
    let quant = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    match img.channels() {
        1 => {
            let mut out =
                image::ImageBuffer::<image::Luma<u8>, Vec<u8>>::new(img.width() as u32, img.height() as u32);
            for (x, y, px) in out.enumerate_pixels_mut() {
                *px = image::Luma([quant(img.at(x as usize, y as usize, 0))]);
            }
            out.save(path)?;
        }
        3 => {
            let mut out =
                image::ImageBuffer::<image::Rgb<u8>, Vec<u8>>::new(img.width() as u32, img.height() as u32);
            for (x, y, px) in out.enumerate_pixels_mut() {
                *px = image::Rgb([
                    quant(img.at(x as usize, y as usize, 0)),
                    quant(img.at(x as usize, y as usize, 1)),
                    quant(img.at(x as usize, y as usize, 2)),
                ]);
            }
            out.save(path)?;
        }
        c => return Err(Error::BadFormat(format!("cannot encode a {c}-channel image"))),
    }
    Ok(())
}
