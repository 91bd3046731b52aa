//! On-disk label maps: the IISM1 binary format and 8-bit PNG.

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage};

use super::{ClassCatalog, LabelMap};
use crate::error::{Error, Result};

pub const IISM_MAGIC: &[u8; 4] = b"IISM";
pub const IISM_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 + 4 + 1;

/// `IISM` | version u8 | H u32 LE | W u32 LE | C u8 | H*W class bytes.
pub fn encode_iism(map: &LabelMap, classes: usize) -> Result<Vec<u8>> {
    if classes == 0 || classes > 255 {
        return Err(Error::Format(format!(
            "IISM1 stores 1..=255 classes, got {classes}"
        )));
    }
    map.validate(classes)?;
    let mut out = Vec::with_capacity(HEADER_LEN + map.pixels());
    out.extend_from_slice(IISM_MAGIC);
    out.push(IISM_VERSION);
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    out.push(classes as u8);
    out.extend_from_slice(map.as_bytes());
    Ok(out)
}

/// Returns the map and the class count declared in its header.
pub fn decode_iism(bytes: &[u8]) -> Result<(LabelMap, usize)> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != IISM_MAGIC {
        return Err(Error::Format("not an IISM file".into()));
    }
    if bytes[4] != IISM_VERSION {
        return Err(Error::Format(format!(
            "unsupported IISM version {}",
            bytes[4]
        )));
    }
    let height = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let classes = bytes[13] as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != height.saturating_mul(width) {
        return Err(Error::Format(format!(
            "IISM header declares {height}x{width} but body has {} bytes",
            body.len()
        )));
    }
    let map = LabelMap::new(height, width, body.to_vec())?;
    map.validate(classes)?;
    Ok((map, classes))
}

pub fn write_iism(path: &Path, map: &LabelMap, classes: usize) -> Result<()> {
    let bytes = encode_iism(map, classes)?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads an 8-bit single-channel PNG whose pixel values are class ids.
pub fn read_label_png(bytes: &[u8]) -> Result<LabelMap> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::Image(e.to_string()))?;
    let gray = match img {
        image::DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(Error::Image(format!(
                "label PNG must be 8-bit single channel, got {:?}",
                other.color()
            )))
        }
    };
    LabelMap::new(
        gray.height() as usize,
        gray.width() as usize,
        gray.into_raw(),
    )
}

pub fn write_label_png(map: &LabelMap) -> Result<Vec<u8>> {
    let img = GrayImage::from_raw(
        map.width() as u32,
        map.height() as u32,
        map.as_bytes().to_vec(),
    )
    .ok_or_else(|| Error::Image("label buffer size".into()))?;
    encode_png(image::DynamicImage::ImageLuma8(img))
}

/// Reads an `.iism` or `.png` label file and validates it against `classes`.
pub fn read_label_file(path: &Path, classes: usize) -> Result<LabelMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ingest = |e: Error| Error::Ingest {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let map = if bytes.starts_with(IISM_MAGIC) {
        decode_iism(&bytes).map_err(ingest)?.0
    } else {
        read_label_png(&bytes).map_err(ingest)?
    };
    map.validate(classes).map_err(ingest)?;
    Ok(map)
}

/// RGB rendering with the catalog palette.
pub fn render_png(map: &LabelMap, catalog: &ClassCatalog) -> Result<Vec<u8>> {
    let mut img = RgbImage::new(map.width() as u32, map.height() as u32);
    for i in 0..map.height() {
        for j in 0..map.width() {
            let class = map.get(i, j);
            let color = catalog
                .color(class)
                .ok_or_else(|| Error::Catalog(format!("class {} has no catalog entry", class.0)))?;
            img.put_pixel(j as u32, i as u32, image::Rgb(color));
        }
    }
    encode_png(image::DynamicImage::ImageRgb8(img))
}

pub(crate) fn encode_png(img: image::DynamicImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Image(e.to_string()))?;
    Ok(out.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::ClassId;

    fn sample() -> LabelMap {
        LabelMap::new(3, 4, vec![0, 1, 2, 3, 4, 5, 6, 0, 1, 1, 6, 2]).unwrap()
    }

    #[test]
    fn iism_layout_is_bit_exact() {
        let bytes = encode_iism(&sample(), 7).unwrap();
        assert_eq!(&bytes[..4], b"IISM");
        assert_eq!(bytes[4], 1);
        assert_eq!(&bytes[5..9], &3u32.to_le_bytes());
        assert_eq!(&bytes[9..13], &4u32.to_le_bytes());
        assert_eq!(bytes[13], 7);
        assert_eq!(&bytes[14..], sample().as_bytes());
        let (back, c) = decode_iism(&bytes).unwrap();
        assert_eq!((back, c), (sample(), 7));
    }

    #[test]
    fn iism_rejects_corrupt_input() {
        let mut bytes = encode_iism(&sample(), 7).unwrap();
        assert!(decode_iism(&bytes[..10]).is_err());
        bytes.pop();
        assert!(decode_iism(&bytes).is_err());
        let mut bad_label = encode_iism(&sample(), 7).unwrap();
        bad_label[14] = 9;
        assert!(matches!(
            decode_iism(&bad_label),
            Err(Error::LabelOutOfRange { .. })
        ));
        let mut bad_version = encode_iism(&sample(), 7).unwrap();
        bad_version[4] = 2;
        assert!(decode_iism(&bad_version).is_err());
    }

    #[test]
    fn label_png_roundtrip() {
        let png = write_label_png(&sample()).unwrap();
        assert_eq!(read_label_png(&png).unwrap(), sample());
    }

    #[test]
    fn render_uses_catalog_palette_and_inverts() {
        let cat = ClassCatalog::brain_ct();
        let png = render_png(&sample(), &cat).unwrap();
        let rgb = image::load_from_memory(&png).unwrap().to_rgb8();
        for i in 0..3 {
            for j in 0..4 {
                let px = rgb.get_pixel(j as u32, i as u32).0;
                assert_eq!(cat.class_of_color(px), Some(sample().get(i, j)));
            }
        }
        let uniform = render_png(&LabelMap::filled(5, 5, ClassId(3)).unwrap(), &cat).unwrap();
        let rgb = image::load_from_memory(&uniform).unwrap().to_rgb8();
        assert!(rgb.pixels().all(|p| p.0 == cat.color(ClassId(3)).unwrap()));
    }

    #[test]
    fn render_rejects_unknown_class() {
        let m = LabelMap::new(1, 2, vec![0, 9]).unwrap();
        assert!(matches!(
            render_png(&m, &ClassCatalog::brain_ct()),
            Err(Error::Catalog(_))
        ));
    }
}
