#![allow(dead_code)]

pub mod quadrature;

use bisys::{Design, RunTable};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const MIYAKAWA: [[u64; 4]; 8] = [
    [27, 13, 11, 9],
    [25, 15, 3, 17],
    [17, 23, 8, 12],
    [15, 25, 2, 18],
    [40, 0, 12, 8],
    [38, 2, 10, 10],
    [40, 0, 11, 9],
    [37, 3, 10, 10],
];

pub const IMAGINARY: [[u64; 4]; 8] = [
    [27, 13, 11, 9],
    [25, 15, 3, 17],
    [17, 23, 8, 12],
    [15, 25, 2, 18],
    [10, 0, 3, 2],
    [19, 1, 5, 5],
    [40, 0, 11, 9],
    [37, 3, 10, 10],
];

pub fn abc() -> Design {
    Design::full_factorial(&["A", "B", "C"]).unwrap()
}

pub fn runs(design: &Design, counts: &[[u64; 4]]) -> Vec<RunTable> {
    counts
        .iter()
        .enumerate()
        .map(|(k, c)| RunTable::new(design.levels(k), c[0], c[1], c[2], c[3]))
        .collect()
}

/// Random run tables with row totals in `lo..=hi` and every cell positive.
pub fn random_runs(design: &Design, rng: &mut ChaCha8Rng, lo: u64, hi: u64) -> Vec<RunTable> {
    (0..design.runs())
        .map(|k| {
            let r1 = rng.gen_range(lo..=hi);
            let r2 = rng.gen_range(lo..=hi);
            let n11 = rng.gen_range(1..r1);
            let n21 = rng.gen_range(1..r2);
            RunTable::new(design.levels(k), n11, r1 - n11, n21, r2 - n21)
        })
        .collect()
}
