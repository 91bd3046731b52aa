use image::{DynamicImage, Rgb, RgbImage};
use maskgen_core::label::{ClassCatalog, LabelMap};

const GAP: u32 = 4;

/// Real masks on the top row, synthetic masks below, one column per pair.
pub fn comparison_grid(
    real: &[LabelMap],
    synth: &[LabelMap],
    catalog: &ClassCatalog,
) -> DynamicImage {
    let cols = real.len().max(synth.len()).max(1) as u32;
    let (h, w) = real
        .first()
        .or(synth.first())
        .map(|m| (m.height() as u32, m.width() as u32))
        .unwrap_or((1, 1));
    let mut img = RgbImage::from_pixel(
        cols * (w + GAP) + GAP,
        2 * (h + GAP) + GAP,
        Rgb([255, 255, 255]),
    );
    for (row, maps) in [real, synth].into_iter().enumerate() {
        for (k, m) in maps.iter().enumerate() {
            let x0 = GAP + k as u32 * (w + GAP);
            let y0 = GAP + row as u32 * (h + GAP);
            for i in 0..m.height() {
                for j in 0..m.width() {
                    let c = catalog.color(m.get(i, j)).unwrap_or([0, 0, 0]);
                    img.put_pixel(x0 + j as u32, y0 + i as u32, Rgb(c));
                }
            }
        }
    }
    DynamicImage::ImageRgb8(img)
}
