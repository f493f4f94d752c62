use crate::error::{Error, Result};

/// Class colours; class id `i` (1-based) uses `colors[i - 1]` and id 0
/// (unlabeled) is black.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Palette {
    pub colors: Vec<[u8; 3]>,
}

pub const FLEVOLAND_HEX: [&str; 15] = [
    "FF0000", "FF6600", "FFCC00", "CCFF00", "66FF00", "00FF00", "00FF66", "00FFCC", "00CCFF", "0066FF", "0000FF",
    "6600FF", "CC00FF", "FF00CC", "FF0066",
];

pub const SAN_FRANCISCO_HEX: [&str; 5] = ["FF0000", "CCFF00", "00FF66", "0066FF", "CC00FF"];

pub const UNLABELED: [u8; 3] = [0, 0, 0];

pub fn parse_hex(hex: &str) -> Result<[u8; 3]> {
    let h = hex.trim().trim_start_matches('#');
    if h.len() != 6 || !h.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(Error::usage(format!("bad colour {hex:?}, expected RRGGBB")));
    }
    let byte = |i: usize| u8::from_str_radix(&h[i..i + 2], 16).expect("checked hex digits");
    Ok([byte(0), byte(2), byte(4)])
}

impl Palette {
    pub fn from_hex(list: &[&str]) -> Result<Self> {
        let colors = list.iter().map(|h| parse_hex(h)).collect::<Result<Vec<_>>>()?;
        let p = Palette { colors };
        p.validate()?;
        Ok(p)
    }

    pub fn flevoland() -> Self {
        Palette::from_hex(&FLEVOLAND_HEX).expect("built-in palette is valid")
    }

    pub fn san_francisco() -> Self {
        Palette::from_hex(&SAN_FRANCISCO_HEX).expect("built-in palette is valid")
    }

    /// The Flevoland colours for up to 15 classes, otherwise evenly spaced
    /// hues.
    pub fn for_classes(k: usize) -> Self {
        if k <= FLEVOLAND_HEX.len() {
            return Palette { colors: Palette::flevoland().colors[..k].to_vec() };
        }
        let colors = (0..k)
            .map(|i| {
                let hue = i as f64 / k as f64 * 6.0;
                let x = 1.0 - (hue % 2.0 - 1.0).abs();
                let (r, g, b) = match hue as usize {
                    0 => (1.0, x, 0.0),
                    1 => (x, 1.0, 0.0),
                    2 => (0.0, 1.0, x),
                    3 => (0.0, x, 1.0),
                    4 => (x, 0.0, 1.0),
                    _ => (1.0, 0.0, x),
                };
                [r, g, b].map(|v: f64| (v * 255.0).round() as u8)
            })
            .collect();
        Palette { colors }
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    /// Colours must be distinct and differ from the unlabeled black.
    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.colors.iter().enumerate() {
            if *c == UNLABELED {
                return Err(Error::usage(format!("palette colour {} is black, reserved for unlabeled", i + 1)));
            }
            if self.colors[..i].contains(c) {
                return Err(Error::usage(format!("palette colour {} repeats an earlier colour", i + 1)));
            }
        }
        Ok(())
    }

    pub fn color(&self, id: u8) -> Result<[u8; 3]> {
        match id {
            0 => Ok(UNLABELED),
            i => self
                .colors
                .get(usize::from(i) - 1)
                .copied()
                .ok_or_else(|| Error::data(format!("class id {i} outside a {}-colour palette", self.len()))),
        }
    }

    pub fn id_of(&self, rgb: [u8; 3]) -> Option<u8> {
        if rgb == UNLABELED {
            return Some(0);
        }
        self.colors.iter().position(|&c| c == rgb).map(|i| (i + 1) as u8)
    }
}
