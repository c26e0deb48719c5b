//! Raster file formats.
//!
//! * `.iuv`: `b"IUV1"`, width and height as little-endian `u32`, then the label
//!   plane (one byte per pixel) followed by the `u` and `v` planes
//!   (little-endian `f32`), all row-major.
//! * IUV PNG: `R` = part label, `G = round(u * 255)`, `B = round(v * 255)`.
//! * `.flo`: `b"FLO1"`, width and height as little-endian `u32`, then
//!   interleaved `(dx, dy)` little-endian `f32` pairs, row-major.
//! * Masks are 8-bit grayscale PNGs thresholded at 128; images are 8-bit RGB PNGs.

use std::fs;
use std::path::Path;

use image::{GrayImage, ImageReader, Rgb, RgbImage as PngRgb};

use crate::error::{Error, Result};
use crate::iuv::{DensePoseMap, FlowField, NUM_PARTS};
use crate::raster::{BinaryMask, Plane, RgbImage};

pub const IUV_MAGIC: &[u8; 4] = b"IUV1";
pub const FLOW_MAGIC: &[u8; 4] = b"FLO1";
const PNG_SIGNATURE: &[u8; 8] = b"\x89PNG\r\n\x1a\n";
const HEADER_LEN: usize = 12;

fn read_header(bytes: &[u8], magic: &[u8; 4]) -> Result<(usize, usize)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format("header", format!("{} bytes is shorter than the 12-byte header", bytes.len())));
    }
    if &bytes[..4] != magic {
        return Err(Error::format(
            "magic",
            format!("expected {:?}, found {:?}", String::from_utf8_lossy(magic), String::from_utf8_lossy(&bytes[..4])),
        ));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if width == 0 || height == 0 {
        return Err(Error::format("header", format!("zero dimension {width}x{height}")));
    }
    Ok((width, height))
}

fn write_header(out: &mut Vec<u8>, magic: &[u8; 4], width: usize, height: usize) {
    out.extend_from_slice(magic);
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(height as u32).to_le_bytes());
}

fn f32_le(chunk: &[u8]) -> f32 {
    f32::from_le_bytes(chunk.try_into().unwrap())
}

pub fn decode_iuv(bytes: &[u8]) -> Result<DensePoseMap> {
    let (width, height) = read_header(bytes, IUV_MAGIC)?;
    let n = width * height;
    let expected = HEADER_LEN + n * 9;
    if bytes.len() != expected {
        return Err(Error::format(
            "planes",
            format!("{width}x{height} needs {expected} bytes, found {}", bytes.len()),
        ));
    }
    let body = &bytes[HEADER_LEN..];
    let labels = body[..n].to_vec();
    if let Some(pos) = labels.iter().position(|&l| l as usize > NUM_PARTS) {
        return Err(Error::format("i_plane", format!("label {} at pixel {pos} exceeds {NUM_PARTS}", labels[pos])));
    }
    let mut planes = [Vec::with_capacity(n), Vec::with_capacity(n)];
    for (k, (name, plane)) in ["u_plane", "v_plane"].iter().zip(planes.iter_mut()).enumerate() {
        let start = n + k * n * 4;
        for (pos, chunk) in body[start..start + n * 4].chunks_exact(4).enumerate() {
            let value = f32_le(chunk);
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::format(*name, format!("value {value} at pixel {pos} outside [0, 1]")));
            }
            plane.push(value);
        }
    }
    let [u, v] = planes;
    DensePoseMap::new(
        Plane::from_vec(width, height, labels)?,
        Plane::from_vec(width, height, u)?,
        Plane::from_vec(width, height, v)?,
    )
}

pub fn encode_iuv(map: &DensePoseMap) -> Vec<u8> {
    let (w, h) = map.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + w * h * 9);
    write_header(&mut out, IUV_MAGIC, w, h);
    out.extend_from_slice(map.i_plane().data());
    for plane in [map.u_plane(), map.v_plane()] {
        for value in plane.data() {
            out.extend_from_slice(&value.to_le_bytes());
        }
    }
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn is_png_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn open_image(path: &Path) -> Result<image::DynamicImage> {
    ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|source| Error::Image {
            path: path.to_owned(),
            source,
        })
}

fn save_png(path: &Path, img: impl Into<image::DynamicImage>) -> Result<()> {
    img.into()
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| match source {
            image::ImageError::IoError(e) => Error::io(path, e),
            source => Error::Image {
                path: path.to_owned(),
                source,
            },
        })
}

/// Loads a DensePose map, detecting the binary and PNG encodings by content.
pub fn load_iuv(path: impl AsRef<Path>) -> Result<DensePoseMap> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    if bytes.starts_with(PNG_SIGNATURE) {
        let rgb = open_image(path)?.to_rgb8();
        return iuv_from_png(&rgb).map_err(|e| e.in_file(path));
    }
    decode_iuv(&bytes).map_err(|e| e.in_file(path))
}

/// Saves a DensePose map: 8-bit PNG when the path ends in `.png`, otherwise the
/// lossless binary encoding.
pub fn save_iuv(map: &DensePoseMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_png_path(path) {
        save_png(path, iuv_to_png(map))
    } else {
        write_file(path, &encode_iuv(map))
    }
}

pub fn iuv_from_png(rgb: &PngRgb) -> Result<DensePoseMap> {
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    DensePoseMap::from_fn(w, h, |x, y| {
        let Rgb([r, g, b]) = *rgb.get_pixel(x as u32, y as u32);
        (r.min(NUM_PARTS as u8), g as f32 / 255.0, b as f32 / 255.0)
    })
}

pub fn iuv_to_png(map: &DensePoseMap) -> PngRgb {
    let quantize = |c: f32| (c * 255.0).round().clamp(0.0, 255.0) as u8;
    PngRgb::from_fn(map.width() as u32, map.height() as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        let (u, v) = map.uv(x, y);
        Rgb([map.label(x, y), quantize(u), quantize(v)])
    })
}

pub fn decode_flow(bytes: &[u8]) -> Result<FlowField> {
    let (width, height) = read_header(bytes, FLOW_MAGIC)?;
    let n = width * height;
    let expected = HEADER_LEN + n * 8;
    if bytes.len() != expected {
        return Err(Error::format(
            "planes",
            format!("{width}x{height} needs {expected} bytes, found {}", bytes.len()),
        ));
    }
    let mut dx = Vec::with_capacity(n);
    let mut dy = Vec::with_capacity(n);
    for pair in bytes[HEADER_LEN..].chunks_exact(8) {
        dx.push(f32_le(&pair[..4]));
        dy.push(f32_le(&pair[4..]));
    }
    FlowField::new(Plane::from_vec(width, height, dx)?, Plane::from_vec(width, height, dy)?)
}

pub fn encode_flow(flow: &FlowField) -> Vec<u8> {
    let (w, h) = flow.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + w * h * 8);
    write_header(&mut out, FLOW_MAGIC, w, h);
    for (dx, dy) in flow.dx().data().iter().zip(flow.dy().data()) {
        out.extend_from_slice(&dx.to_le_bytes());
        out.extend_from_slice(&dy.to_le_bytes());
    }
    out
}

pub fn load_flow(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    decode_flow(&read_file(path)?).map_err(|e| e.in_file(path))
}

pub fn save_flow(flow: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_file(path, &encode_flow(flow))
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let gray = open_image(path)?.to_luma8();
    let (w, h) = gray.dimensions();
    Plane::from_vec(w as usize, h as usize, gray.pixels().map(|p| p.0[0] >= 128).collect())
        .map_err(|e| e.in_file(path))
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let (w, h) = mask.dims();
    let img = GrayImage::from_raw(
        w as u32,
        h as u32,
        mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect(),
    )
    .expect("buffer length matches dimensions");
    save_png(path.as_ref(), img)
}

pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let rgb = open_image(path)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    Plane::from_vec(
        w as usize,
        h as usize,
        rgb.pixels().map(|p| p.0.map(|c| c as f32 / 255.0)).collect(),
    )
    .map_err(|e| e.in_file(path))
}

pub fn rgb_to_png(img: &RgbImage) -> PngRgb {
    let (w, h) = img.dims();
    let quantize = |c: f32| (c * 255.0).round().clamp(0.0, 255.0) as u8;
    PngRgb::from_raw(
        w as u32,
        h as u32,
        img.data().iter().flat_map(|px| px.map(quantize)).collect(),
    )
    .expect("buffer length matches dimensions")
}

pub fn save_rgb(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    save_png(path.as_ref(), rgb_to_png(img))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn png_background_only() {
        let dir = tmp();
        let path = dir.path().join("bg.png");
        PngRgb::new(2, 2).save(&path).unwrap();
        assert_eq!(load_iuv(&path).unwrap(), DensePoseMap::background(2, 2));
    }

    #[test]
    fn png_quantization_endpoints() {
        let dir = tmp();
        let path = dir.path().join("p.png");
        let mut img = PngRgb::new(2, 1);
        img.put_pixel(1, 0, Rgb([2, 255, 0]));
        img.put_pixel(0, 0, Rgb([200, 10, 10]));
        img.save(&path).unwrap();
        let dp = load_iuv(&path).unwrap();
        assert_eq!(dp.label(1, 0), 2);
        assert_eq!(dp.uv(1, 0), (1.0, 0.0));
        // labels above 24 clip
        assert_eq!(dp.label(0, 0), 24);
    }

    #[test]
    fn background_binary_round_trip() {
        let dir = tmp();
        let path = dir.path().join("bg.iuv");
        let dp = DensePoseMap::background(5, 3);
        save_iuv(&dp, &path).unwrap();
        assert_eq!(load_iuv(&path).unwrap(), dp);
    }

    #[test]
    fn unwritable_path_names_path() {
        let dp = DensePoseMap::background(1, 1);
        let err = save_iuv(&dp, "/nonexistent-dir/x.iuv").unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.iuv"), "{err}");
    }

    #[test]
    fn malformed_headers_name_field() {
        let err = decode_iuv(b"IUV").unwrap_err();
        assert!(err.to_string().contains("header"));
        let err = decode_iuv(b"XXXX\x01\0\0\0\x01\0\0\0\0").unwrap_err();
        assert!(err.to_string().contains("magic"));
        let mut bytes = encode_iuv(&DensePoseMap::background(2, 2));
        bytes.pop();
        assert!(decode_iuv(&bytes).unwrap_err().to_string().contains("planes"));
        let mut bytes = encode_iuv(&DensePoseMap::background(2, 2));
        bytes[HEADER_LEN] = 30;
        assert!(decode_iuv(&bytes).unwrap_err().to_string().contains("i_plane"));
        let mut bytes = encode_iuv(&DensePoseMap::background(1, 1));
        bytes[HEADER_LEN + 1..HEADER_LEN + 5].copy_from_slice(&2.0f32.to_le_bytes());
        assert!(decode_iuv(&bytes).unwrap_err().to_string().contains("u_plane"));
    }

    #[test]
    fn load_errors_carry_path() {
        let dir = tmp();
        let path = dir.path().join("bad.iuv");
        fs::write(&path, b"IUV1garbage").unwrap();
        let err = load_iuv(&path).unwrap_err();
        assert!(err.to_string().contains("bad.iuv"));
    }

    #[test]
    fn flow_round_trip_and_errors() {
        let flow = FlowField::new(
            Plane::from_fn(3, 2, |x, y| x as f32 - 0.5 * y as f32),
            Plane::from_fn(3, 2, |x, y| (x * y) as f32 * 0.25),
        )
        .unwrap();
        assert_eq!(decode_flow(&encode_flow(&flow)).unwrap(), flow);
        assert!(decode_flow(&encode_iuv(&DensePoseMap::background(1, 1))).is_err());
        let mut bytes = encode_flow(&flow);
        bytes.truncate(bytes.len() - 8);
        assert!(decode_flow(&bytes).is_err());
    }

    #[test]
    fn mask_png_round_trip() {
        let dir = tmp();
        let path = dir.path().join("m.png");
        let mask = Plane::from_fn(7, 5, |x, y| (x + 2 * y) % 3 == 0);
        save_mask(&mask, &path).unwrap();
        assert_eq!(load_mask(&path).unwrap(), mask);
    }

    fn arb_map() -> impl Strategy<Value = DensePoseMap> {
        (1usize..9, 1usize..9).prop_flat_map(|(w, h)| {
            let n = w * h;
            (
                prop::collection::vec(0u8..=24, n),
                prop::collection::vec(0.0f32..=1.0, n),
                prop::collection::vec(0.0f32..=1.0, n),
            )
                .prop_map(move |(i, u, v)| {
                    DensePoseMap::new(
                        Plane::from_vec(w, h, i).unwrap(),
                        Plane::from_vec(w, h, u).unwrap(),
                        Plane::from_vec(w, h, v).unwrap(),
                    )
                    .unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_bit_exact(dp in arb_map()) {
            let back = decode_iuv(&encode_iuv(&dp)).unwrap();
            prop_assert_eq!(encode_iuv(&back), encode_iuv(&dp));
        }

        #[test]
        fn png_round_trip_within_quantization(dp in arb_map()) {
            let back = iuv_from_png(&iuv_to_png(&dp)).unwrap();
            prop_assert_eq!(back.i_plane(), dp.i_plane());
            for (a, b) in back.u_plane().data().iter().zip(dp.u_plane().data())
                .chain(back.v_plane().data().iter().zip(dp.v_plane().data())) {
                prop_assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
            }
        }
    }
}
