//! Plain (P2) PGM images.

use std::fmt::Write as _;
use std::path::Path;

use duc_hdc_core::hdc::FootprintMap;
use duc_hdc_core::train::LabelMap;
use duc_hdc_core::Tensor;

use super::{read_file, write_file};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

impl Pgm {
    pub fn new(width: usize, height: usize, maxval: u16, pixels: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::format("pgm", format!("{width}x{height} image with {} pixels", pixels.len())));
        }
        if maxval == 0 || pixels.iter().any(|&p| p > maxval) {
            return Err(Error::format("pgm", format!("pixel values exceed maxval {maxval}")));
        }
        Ok(Pgm { width, height, maxval, pixels })
    }

    pub fn to_p2(&self) -> String {
        let mut out = format!("P2\n{} {}\n{}\n", self.width, self.height, self.maxval);
        for row in self.pixels.chunks(self.width) {
            let line: Vec<String> = row.iter().map(u16::to_string).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    /// Parses P2 text, skipping `#` comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace);
        if tokens.next() != Some("P2") {
            return Err(Error::format("pgm", "missing P2 magic"));
        }
        let mut number = |what: &str| -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| Error::format("pgm", format!("missing {what}")))?
                .parse::<usize>()
                .map_err(|e| Error::format("pgm", format!("bad {what}: {e}")))
        };
        let width = number("width")?;
        let height = number("height")?;
        let maxval = number("maxval")?;
        if maxval == 0 || maxval > u16::MAX as usize {
            return Err(Error::format("pgm", format!("maxval {maxval} out of range")));
        }
        let mut pixels = Vec::with_capacity(width * height);
        for _ in 0..width * height {
            pixels.push(number("pixel")? as u16);
        }
        if number("trailing data").is_ok() {
            return Err(Error::format("pgm", "more pixels than width * height"));
        }
        Pgm::new(width, height, maxval as u16, pixels)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_p2().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes).map_err(|e| Error::format("pgm", e.to_string()))?;
        Pgm::parse(&text)
    }
}

/// Footprint counts scaled to `0..=255`: `ceil(count * 255 / max)`, so zero
/// counts (holes) map to 0 and every contributing cell is at least 1.
pub fn footprint_pgm(fp: &FootprintMap) -> Pgm {
    let max = fp.max_count().max(1);
    let pixels = fp.counts().iter().map(|&c| (c * 255).div_ceil(max) as u16).collect();
    Pgm::new(fp.side(), fp.side(), 255, pixels).expect("footprint grid is square and nonempty")
}

/// Label values written verbatim (ignore = 255).
pub fn label_pgm(labels: &LabelMap) -> Pgm {
    let pixels = labels.as_slice().iter().map(|&l| l as u16).collect();
    Pgm::new(labels.width(), labels.height(), 255, pixels).expect("label map is nonempty")
}

pub fn labels_from_pgm(pgm: &Pgm) -> Result<LabelMap> {
    let labels = pgm.pixels.iter().map(|&p| p.min(255) as u8).collect();
    Ok(LabelMap::new(pgm.height, pgm.width, labels)?)
}

/// First plane of an image tensor, mapped linearly from `[lo, hi]` to `0..=255` with clamping.
pub fn image_pgm(image: &Tensor, lo: f64, hi: f64) -> Pgm {
    let s = image.shape();
    let pixels = image
        .plane(0, 0)
        .iter()
        .map(|&v| (((v - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0).round() as u16)
        .collect();
    Pgm::new(s.w, s.h, 255, pixels).expect("image plane is nonempty")
}

pub fn footprint_csv(fp: &FootprintMap) -> String {
    let mut out = String::new();
    for row in fp.rows() {
        let line: Vec<String> = row.iter().map(u64::to_string).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use duc_hdc_core::hdc::{footprint, DilationSchedule};

    #[test]
    fn parse_round_trip_with_comments() {
        let p = Pgm::new(3, 2, 9, vec![0, 1, 2, 3, 4, 9]).unwrap();
        let text = p.to_p2().replacen("P2\n", "P2\n# made by hand\n", 1);
        assert_eq!(Pgm::parse(&text).unwrap(), p);
    }

    #[test]
    fn parse_errors() {
        assert!(Pgm::parse("P5\n1 1\n255\n0\n").is_err());
        assert!(Pgm::parse("P2\n2 1\n255\n0\n").is_err());
        assert!(Pgm::parse("P2\n1 1\n255\n0 0\n").is_err());
        assert!(Pgm::parse("P2\n1 1\n3\n7\n").is_err());
    }

    #[test]
    fn footprint_scaling() {
        let fp = footprint(&DilationSchedule::new(vec![1], 3).unwrap());
        assert_eq!(footprint_pgm(&fp).pixels, vec![255; 9]);
        let gridded = footprint_pgm(&footprint(&DilationSchedule::new(vec![2], 3).unwrap()));
        assert_eq!(gridded.pixels.iter().filter(|&&p| p == 0).count(), 16);
        // a count of 1 out of 729 still shows up
        let deep = footprint(&DilationSchedule::new(vec![1, 1, 1], 3).unwrap());
        assert!(footprint_pgm(&deep).pixels.iter().all(|&p| p >= 1));
    }
}
