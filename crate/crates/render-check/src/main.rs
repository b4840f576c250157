fn main() {
    use framekey::vp::*;
    use image::{Rgb, RgbImage};
    let white = RgbImage::from_pixel(128, 128, Rgb([255, 255, 255]));
    let config = VpConfig { size_divisor: 9, ..VpConfig::default() };
    let a = insert_vp(&white, 1, &config, 1, None).unwrap();
    framekey::raster::save_png(&a.image, std::path::Path::new("/tmp/golden_a.png")).unwrap();
    let rect = a.label.as_ref().unwrap().rect;
    println!("golden A rect: {:?} text: {}", rect, a.label.as_ref().unwrap().text);

    // ASCII art of the label region
    for y in rect.y..rect.y + rect.h {
        let mut line = String::new();
        for x in rect.x..rect.x + rect.w {
            let p = a.image.get_pixel(x, y);
            line.push(if p.0 == [255, 0, 0] { '#' } else if p.0 == [0,0,0] { 'o' } else { '.' });
        }
        println!("{line}");
    }
}
