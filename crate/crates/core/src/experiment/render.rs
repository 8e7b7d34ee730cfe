//! Binary PPM (P6) rendering of basin maps.
//!
//! Layout: ASCII header `P6\n{w} {h}\n255\n`, then `w·h` RGB triples, one
//! byte per channel. Pixel rows run from the largest `ic_1` at the top to
//! the smallest at the bottom; columns run along increasing `ic_0`.

use std::path::Path;

use super::BasinMap;
use crate::classify::BasinOutcome;
use crate::error::{Error, Result};

pub const PALETTE_BASINS: [[u8; 3]; 6] = [
    [31, 119, 180],
    [227, 119, 194],
    [148, 103, 189],
    [140, 86, 75],
    [23, 190, 207],
    [127, 127, 127],
];
pub const WRONG_COLOR: [u8; 3] = [255, 221, 0];
pub const SPURIOUS_COLOR: [u8; 3] = [44, 160, 44];
pub const UNRESOLVED_COLOR: [u8; 3] = [255, 255, 255];

pub fn outcome_color(outcome: &BasinOutcome) -> Result<[u8; 3]> {
    Ok(match *outcome {
        BasinOutcome::Correct(b) => *PALETTE_BASINS
            .get(b)
            .ok_or_else(|| Error::invalid("outcome", format!("no palette entry for basin {b}")))?,
        BasinOutcome::Wrong(_) => WRONG_COLOR,
        BasinOutcome::Spurious => SPURIOUS_COLOR,
        BasinOutcome::Unresolved => UNRESOLVED_COLOR,
    })
}

/// P6 bytes for a `width × height` image given row-major pixels, top row first.
pub fn write_ppm(width: usize, height: usize, pixels: &[[u8; 3]]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height);
    let mut bytes = format!("P6\n{width} {height}\n255\n").into_bytes();
    bytes.reserve(pixels.len() * 3);
    for p in pixels {
        bytes.extend_from_slice(p);
    }
    bytes
}

pub fn basin_map_ppm(map: &BasinMap) -> Result<Vec<u8>> {
    let n = map.resolution();
    if map.cells.len() != n * n {
        return Err(Error::invalid("map", "cell count does not match the grid"));
    }
    let mut pixels = Vec::with_capacity(n * n);
    // Cells are stored with the smallest ic_1 first; the image starts at the top.
    for row in (0..n).rev() {
        for col in 0..n {
            pixels.push(outcome_color(&map.cells[row * n + col].outcome)?);
        }
    }
    Ok(write_ppm(n, n, &pixels))
}

pub fn render_basin_map(map: &BasinMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, basin_map_ppm(map)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::classify::score;
    use crate::experiment::{BasinCell, ExperimentConfig, SystemChoice};

    fn map_of(outcomes: Vec<BasinOutcome>, n: usize) -> BasinMap {
        let mut config = ExperimentConfig::for_system(SystemChoice::MultiWell);
        config.grid.resolution = n;
        let cells: Vec<BasinCell> = outcomes
            .iter()
            .enumerate()
            .map(|(k, &o)| BasinCell {
                ic: config.grid.cell(k),
                truth: 0,
                outcome: o,
            })
            .collect();
        let truth = vec![0; cells.len()];
        BasinMap {
            metrics: score(&outcomes, &truth, 4).unwrap(),
            config,
            n_basins: 4,
            cells,
        }
    }

    #[test]
    fn all_correct_basin_zero() {
        let map = map_of(vec![BasinOutcome::Correct(0); 4], 2);
        let bytes = basin_map_ppm(&map).unwrap();
        let header = b"P6\n2 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        let body = &bytes[header.len()..];
        assert_eq!(body.len(), 12);
        for px in body.chunks(3) {
            assert_eq!(px, PALETTE_BASINS[0]);
        }
    }

    #[test]
    fn palette_is_injective() {
        let mut colors: Vec<[u8; 3]> = PALETTE_BASINS.to_vec();
        colors.extend([WRONG_COLOR, SPURIOUS_COLOR, UNRESOLVED_COLOR]);
        let set: HashSet<[u8; 3]> = colors.iter().copied().collect();
        assert_eq!(set.len(), colors.len());
    }

    #[test]
    fn top_row_is_largest_ic1() {
        // Cells 2,3 have the larger ic_1 and must come first in the image.
        let map = map_of(
            vec![
                BasinOutcome::Correct(0),
                BasinOutcome::Correct(0),
                BasinOutcome::Spurious,
                BasinOutcome::Wrong(1),
            ],
            2,
        );
        let bytes = basin_map_ppm(&map).unwrap();
        let body = &bytes[11..];
        assert_eq!(&body[0..3], SPURIOUS_COLOR);
        assert_eq!(&body[3..6], WRONG_COLOR);
        assert_eq!(&body[6..9], PALETTE_BASINS[0]);
    }

    #[test]
    fn rerender_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let map = map_of(vec![BasinOutcome::Unresolved, BasinOutcome::Correct(3), BasinOutcome::Correct(2), BasinOutcome::Wrong(0)], 2);
        let (a, b) = (dir.path().join("a.ppm"), dir.path().join("b.ppm"));
        render_basin_map(&map, &a).unwrap();
        render_basin_map(&map, &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }
}
