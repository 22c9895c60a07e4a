//! Indexed-color raster output for map inspection. Binary portable pixmaps
//! need no image dependency and open everywhere.

use std::collections::HashSet;

const BACKGROUND: [u8; 3] = [17, 17, 17];

/// Deterministic, injective label coloring: golden-angle hue stepping with a
/// collision nudge so any number of labels yields that many distinct colors.
pub struct Palette {
    used: HashSet<[u8; 3]>,
    next: usize,
}

impl Palette {
    pub fn new() -> Self {
        let mut used = HashSet::new();
        used.insert(BACKGROUND);
        Palette { used, next: 0 }
    }

    pub fn background(&self) -> [u8; 3] {
        BACKGROUND
    }

    pub fn allocate(&mut self) -> [u8; 3] {
        let i = self.next;
        self.next += 1;
        let h = (i as f64 * 0.618_033_988_749_895).fract();
        let s = 0.55 + 0.4 * ((i as f64 * 0.381_966).fract());
        let v = 0.95 - 0.35 * ((i as f64 * 0.276_393_2).fract());
        let mut rgb = hsv_to_rgb(h, s, v);
        while !self.used.insert(rgb) {
            let packed = (u32::from(rgb[0]) << 16 | u32::from(rgb[1]) << 8 | u32::from(rgb[2]))
                .wrapping_add(1)
                & 0xFF_FFFF;
            rgb = [(packed >> 16) as u8, (packed >> 8) as u8, packed as u8];
        }
        rgb
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h6 = h * 6.0;
    let sector = h6.floor() as i32 % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let (r, g, b) = match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [(r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8]
}

/// Serialize a row-major RGB raster as binary PPM (P6).
pub fn encode(width: usize, height: usize, pixels: &[[u8; 3]]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height);
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.reserve(pixels.len() * 3);
    for px in pixels {
        out.extend_from_slice(px);
    }
    out
}
