//! Accuracy sweeps over the hidden width and filter-grid images.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use crate::data::{load_scenario, DatasetKind, LabeledDataset, ScenarioSplit};
use crate::error::{Error, Result};
use crate::filterbank::{distances, evaluate, FilterBank, TrainConfig};
use crate::linalg::{mix_seed, Matrix, Rng};

pub const MAX_ELL: u32 = 12;
pub const CSV_HEADER: &str = "ell,n_star,accuracy_percent,wall_seconds";

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub ell: u32,
    pub n_star: usize,
    /// Test accuracy in percent, or the error that stopped this point.
    pub outcome: std::result::Result<f64, String>,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// CSV with header `ell,n_star,accuracy_percent,wall_seconds`, LF line
    /// endings. Accuracy has three decimals; failed points print `NaN`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let acc = match &r.outcome {
                Ok(a) => format!("{a:.3}"),
                Err(_) => "NaN".to_string(),
            };
            writeln!(s, "{},{},{},{:.3}", r.ell, r.n_star, acc, r.wall_seconds).expect("write to String");
        }
        s
    }

    pub fn accuracy(&self, ell: u32) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.ell == ell)
            .and_then(|r| r.outcome.as_ref().ok().copied())
    }
}

pub fn write_sweep_csv(result: &SweepResult, path: &Path) -> Result<()> {
    fs::write(path, result.to_csv()).map_err(|e| Error::io(path, e))
}

/// Training settings for sweep point `ell`: hidden width `2^ell`, seed
/// `mix_seed(base.seed, ell)`.
pub fn sweep_point_config(base: &TrainConfig, ell: u32) -> TrainConfig {
    TrainConfig {
        hidden: 1usize << ell,
        seed: mix_seed(base.seed, ell as u64),
        ..base.clone()
    }
}

/// Trains a fresh bank for every `ell` and records its test accuracy.
/// Points run one after another; `workers` bounds class-level parallelism
/// inside each point. A failing point is kept as a failed row.
pub fn run_sweep(scenario: &ScenarioSplit, ells: &[u32], base: &TrainConfig, workers: usize) -> Result<SweepResult> {
    run_sweep_with(scenario, ells, base, workers, |_| {})
}

/// [`run_sweep`] with a callback invoked after each point finishes.
pub fn run_sweep_with(
    scenario: &ScenarioSplit,
    ells: &[u32],
    base: &TrainConfig,
    workers: usize,
    mut on_point: impl FnMut(&SweepRow),
) -> Result<SweepResult> {
    if ells.is_empty() {
        return Err(Error::Param("sweep needs at least one exponent".into()));
    }
    if let Some(&bad) = ells.iter().find(|&&e| e > MAX_ELL) {
        return Err(Error::Param(format!("exponent {bad} exceeds {MAX_ELL}")));
    }
    base.validate()?;
    let mut rows = Vec::with_capacity(ells.len());
    for &ell in ells {
        let cfg = sweep_point_config(base, ell);
        let started = Instant::now();
        let outcome = crate::filterbank::train_bank(&scenario.train, &cfg, workers)
            .and_then(|bank| evaluate(&bank, &scenario.test))
            .map_err(|e| e.to_string());
        let row = SweepRow {
            ell,
            n_star: cfg.hidden,
            outcome,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        on_point(&row);
        rows.push(row);
    }
    Ok(SweepResult { rows })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwapComparison {
    pub unswapped: SweepResult,
    pub swapped: SweepResult,
}

impl SwapComparison {
    /// Per exponent: unswapped accuracy minus swapped accuracy, when both
    /// points succeeded.
    pub fn deltas(&self) -> Vec<(u32, Option<f64>)> {
        sweep_deltas(&self.unswapped, &self.swapped)
    }
}

/// `a - b` per exponent of `a`.
pub fn sweep_deltas(a: &SweepResult, b: &SweepResult) -> Vec<(u32, Option<f64>)> {
    a.rows
        .iter()
        .map(|r| {
            let delta = match (&r.outcome, b.accuracy(r.ell)) {
                (Ok(x), Some(y)) => Some(x - y),
                _ => None,
            };
            (r.ell, delta)
        })
        .collect()
}

/// Runs the same sweep on the 60K/10K and the 10K/60K scenarios.
pub fn swap_comparison(
    kind: DatasetKind,
    dir: &Path,
    ells: &[u32],
    base: &TrainConfig,
    workers: usize,
) -> Result<SwapComparison> {
    let plain = load_scenario(kind, dir, false)?;
    let swapped = load_scenario(kind, dir, true)?;
    Ok(SwapComparison {
        unswapped: run_sweep(&plain, ells, base, workers)?,
        swapped: run_sweep(&swapped, ells, base, workers)?,
    })
}

/// `(K + 1) x K` grid of square tiles. Row 0 holds one input per class;
/// row `k + 1` holds what autoencoder `k` makes of each of those inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterGrid {
    pub classes: usize,
    pub tile_side: usize,
    /// Row-major over the grid, each tile `tile_side^2` values in `[0, 1]`.
    pub tiles: Vec<Vec<f32>>,
    /// Dataset row used for each class in row 0.
    pub sample_rows: Vec<usize>,
}

impl FilterGrid {
    pub fn grid_rows(&self) -> usize {
        self.classes + 1
    }

    pub fn tile(&self, row: usize, col: usize) -> &[f32] {
        &self.tiles[row * self.classes + col]
    }

    /// Mean absolute pixel difference between tile `(row, col)` and the
    /// input tile of column `col`.
    pub fn tile_error(&self, row: usize, col: usize) -> f64 {
        let a = self.tile(row, col);
        let b = self.tile(0, col);
        a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).abs()).sum::<f64>() / a.len() as f64
    }
}

pub const GUTTER: usize = 2;

/// Picks one test sample per class (the first one, or a random one when
/// `rng` is given) and reconstructs it with every autoencoder.
pub fn render_filter_grid(bank: &FilterBank, test: &LabeledDataset, rng: Option<&mut Rng>) -> Result<FilterGrid> {
    let k = bank.classes();
    let n = bank.input_dim();
    if test.input_dim() != n {
        return Err(Error::Shape {
            op: "render_filter_grid",
            left: (test.len(), test.input_dim()),
            right: (k, n),
        });
    }
    let side = (n as f64).sqrt().round() as usize;
    if side * side != n {
        return Err(Error::Param(format!("{n} pixels do not form a square tile")));
    }
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in test.labels().iter().enumerate() {
        if l < k {
            per_class[l].push(i);
        }
    }
    if let Some(missing) = per_class.iter().position(|v| v.is_empty()) {
        return Err(Error::DegenerateClass(missing));
    }
    let sample_rows: Vec<usize> = match rng {
        Some(rng) => per_class.iter().map(|v| v[rng.below(v.len())]).collect(),
        None => per_class.iter().map(|v| v[0]).collect(),
    };
    let inputs: Matrix = test.images().select_rows(&sample_rows);

    let mut tiles: Vec<Vec<f32>> = inputs.row_iter().map(|r| r.to_vec()).collect();
    for c in 0..k {
        let out = bank.reconstruct(c, &inputs)?;
        tiles.extend(out.row_iter().map(|r| r.to_vec()));
    }
    Ok(FilterGrid {
        classes: k,
        tile_side: side,
        tiles,
        sample_rows,
    })
}

/// Image size `(width, height)` of the PGM rendering of a grid.
pub fn pgm_dimensions(classes: usize, tile_side: usize) -> (usize, usize) {
    let width = classes * tile_side + classes.saturating_sub(1) * GUTTER;
    let height = (classes + 1) * tile_side + classes * GUTTER;
    (width, height)
}

/// Binary PGM (P5, maxval 255): tiles quantized as `round(v * 255)`,
/// separated by white gutters of [`GUTTER`] pixels.
pub fn encode_pgm(grid: &FilterGrid) -> Vec<u8> {
    let side = grid.tile_side;
    let (width, height) = pgm_dimensions(grid.classes, side);
    let mut pixels = vec![255u8; width * height];
    for gr in 0..grid.grid_rows() {
        for gc in 0..grid.classes {
            let tile = grid.tile(gr, gc);
            let y0 = gr * (side + GUTTER);
            let x0 = gc * (side + GUTTER);
            for ty in 0..side {
                for tx in 0..side {
                    let v = tile[ty * side + tx].clamp(0.0, 1.0);
                    pixels[(y0 + ty) * width + x0 + tx] = (v * 255.0).round() as u8;
                }
            }
        }
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    out
}

pub fn write_pgm_grid(grid: &FilterGrid, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(grid)).map_err(|e| Error::io(path, e))
}

/// Minimal P5 reader: `(width, height, pixels)`. Comments are not supported.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("PGM header is incomplete".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1; // single whitespace byte before the raster
    if fields[0] != "P5" {
        return Err(Error::Format(format!("not a binary PGM: {}", fields[0])));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM field '{s}'")))
    };
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported maxval {maxval}")));
    }
    let raster = bytes.get(pos..).unwrap_or_default();
    if raster.len() != w * h {
        return Err(Error::Length {
            expected: w * h,
            found: raster.len(),
        });
    }
    Ok((w, h, raster.to_vec()))
}

/// Mean in-class distance of each class's samples under every autoencoder:
/// entry `[k][j]` averages `d[i][j]` over samples `i` of class `k`.
pub fn class_distance_means(bank: &FilterBank, data: &LabeledDataset) -> Result<Vec<Vec<f64>>> {
    let d = distances(bank, data.images())?;
    let k = bank.classes();
    let mut sums = vec![vec![0.0f64; k]; k];
    let mut counts = vec![0usize; k];
    for (i, &label) in data.labels().iter().enumerate() {
        if label >= k {
            continue;
        }
        counts[label] += 1;
        for (j, s) in sums[label].iter_mut().enumerate() {
            *s += d.d.get(i, j) as f64;
        }
    }
    for (row, &c) in sums.iter_mut().zip(&counts) {
        for v in row.iter_mut() {
            *v /= c.max(1) as f64;
        }
    }
    Ok(sums)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::uniform_matrix;
    use crate::nn::{init_params, AutoencoderParams};

    fn grid_of(classes: usize, side: usize, value: f32) -> FilterGrid {
        FilterGrid {
            classes,
            tile_side: side,
            tiles: vec![vec![value; side * side]; (classes + 1) * classes],
            sample_rows: (0..classes).collect(),
        }
    }

    #[test]
    fn csv_layout() {
        let r = SweepResult {
            rows: vec![
                SweepRow {
                    ell: 1,
                    n_star: 2,
                    outcome: Ok(93.12345),
                    wall_seconds: 1.5,
                },
                SweepRow {
                    ell: 2,
                    n_star: 4,
                    outcome: Err("boom".into()),
                    wall_seconds: 0.25,
                },
            ],
        };
        assert_eq!(
            r.to_csv(),
            "ell,n_star,accuracy_percent,wall_seconds\n1,2,93.123,1.500\n2,4,NaN,0.250\n"
        );
        assert_eq!(r.accuracy(1), Some(93.12345));
        assert_eq!(r.accuracy(2), None);
    }

    #[test]
    fn deltas_are_signed() {
        let mk = |a: f64| SweepResult {
            rows: vec![SweepRow {
                ell: 3,
                n_star: 8,
                outcome: Ok(a),
                wall_seconds: 0.0,
            }],
        };
        assert_eq!(sweep_deltas(&mk(97.0), &mk(95.0)), vec![(3, Some(2.0))]);
        assert_eq!(sweep_deltas(&mk(95.0), &mk(97.0)), vec![(3, Some(-2.0))]);
        assert_eq!(sweep_deltas(&mk(95.0), &mk(95.0)), vec![(3, Some(0.0))]);
    }

    #[test]
    fn sweep_point_seeds_differ() {
        let base = TrainConfig::default();
        let a = sweep_point_config(&base, 3);
        assert_eq!(a.hidden, 8);
        assert_ne!(a.seed, sweep_point_config(&base, 4).seed);
    }

    #[test]
    fn sweep_rejects_bad_exponents() {
        let images = Matrix::filled(2, 4, 0.5);
        let d = LabeledDataset::new(images, vec![0, 1]).unwrap();
        let s = ScenarioSplit {
            train: d.clone(),
            test: d,
            swapped: false,
        };
        assert!(run_sweep(&s, &[], &TrainConfig::default(), 1).is_err());
        assert!(run_sweep(&s, &[13], &TrainConfig::default(), 1).is_err());
    }

    #[test]
    fn pgm_dimensions_for_ten_classes() {
        assert_eq!(pgm_dimensions(10, 28), (10 * 28 + 9 * 2, 11 * 28 + 10 * 2));
        let bytes = encode_pgm(&grid_of(10, 28, 0.3));
        let (w, h, px) = decode_pgm(&bytes).unwrap();
        assert_eq!((w, h), (298, 328));
        assert_eq!(px.len(), 298 * 328);
    }

    #[test]
    fn zero_grid_is_black_with_white_gutters() {
        let bytes = encode_pgm(&grid_of(3, 4, 0.0));
        let (w, h, px) = decode_pgm(&bytes).unwrap();
        for y in 0..h {
            for x in 0..w {
                let in_gutter = x % 6 >= 4 || y % 6 >= 4;
                assert_eq!(px[y * w + x], if in_gutter { 255 } else { 0 }, "({x}, {y})");
            }
        }
    }

    #[test]
    fn quantization_rule() {
        for (v, want) in [(1.0f32, 255u8), (0.5, 128), (0.0, 0), (0.2, 51)] {
            let bytes = encode_pgm(&grid_of(1, 1, v));
            let (_, _, px) = decode_pgm(&bytes).unwrap();
            assert_eq!(px[0], want, "value {v}");
        }
    }

    #[test]
    fn quantization_error_is_bounded() {
        let mut rng = Rng::new(4);
        let mut g = grid_of(2, 3, 0.0);
        for t in g.tiles.iter_mut() {
            for v in t.iter_mut() {
                *v = rng.next_f32();
            }
        }
        let (w, _, px) = decode_pgm(&encode_pgm(&g)).unwrap();
        for gr in 0..3 {
            for gc in 0..2 {
                for ty in 0..3 {
                    for tx in 0..3 {
                        let v = g.tile(gr, gc)[ty * 3 + tx] as f64;
                        let p = px[(gr * 5 + ty) * w + gc * 5 + tx] as f64;
                        assert!((p / 255.0 - v).abs() <= 1.0 / 510.0 + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn grid_shape_and_first_occurrence() {
        let mut rng = Rng::new(2);
        let params: Vec<_> = (0..3).map(|_| init_params(16, 4, &mut rng).unwrap()).collect();
        let bank = FilterBank::new(params, None).unwrap();
        let images = uniform_matrix(&mut rng, 7, 16, 0.0, 1.0).unwrap();
        let d = LabeledDataset::new(images, vec![2, 0, 0, 1, 2, 1, 0]).unwrap();
        let grid = render_filter_grid(&bank, &d, None).unwrap();
        assert_eq!(grid.tiles.len(), 4 * 3);
        assert_eq!(grid.tile_side, 4);
        assert_eq!(grid.sample_rows, vec![1, 3, 0]);
        assert_eq!(grid.tile(0, 2), d.images().row(0));
        let recon = bank.reconstruct(1, &d.images().select_rows(&[3])).unwrap();
        assert_eq!(grid.tile(2, 1), recon.row(0));

        let random = render_filter_grid(&bank, &d, Some(&mut Rng::new(9))).unwrap();
        for (k, &row) in random.sample_rows.iter().enumerate() {
            assert_eq!(d.labels()[row], k);
        }
    }

    #[test]
    fn grid_needs_every_class() {
        let bank = FilterBank::new(vec![AutoencoderParams::zeros(4, 2); 3], None).unwrap();
        let d = LabeledDataset::with_classes(Matrix::zeros(2, 4), vec![0, 2], 3).unwrap();
        assert!(matches!(
            render_filter_grid(&bank, &d, None),
            Err(Error::DegenerateClass(1))
        ));
        let bad = LabeledDataset::new(Matrix::zeros(3, 5), vec![0, 1, 2]).unwrap();
        assert!(render_filter_grid(&bank, &bad, None).is_err());
    }

    #[test]
    fn pgm_reader_rejects_garbage() {
        assert!(decode_pgm(b"P2\n1 1\n255\n\x00").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode_pgm(b"P5\n2").is_err());
    }
}
