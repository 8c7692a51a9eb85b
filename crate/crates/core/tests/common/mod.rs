#![allow(dead_code)]

use std::path::{Path, PathBuf};

use cohort_select::population::{stratify, CharacteristicSchema, Population, StratificationIndex};
use cohort_select::rng::Rng;
use rand::Rng as _;

/// Prints the verdict line for a criterion and fails the test if it did not
/// hold.
pub fn verdict(criterion: u32, title: &str, ok: bool, detail: impl AsRef<str>) {
    let tag = if ok { "PASS" } else { "FAIL" };
    println!("criterion {criterion:>2} [{tag}] {title}: {}", detail.as_ref());
    assert!(ok, "criterion {criterion} failed: {}", detail.as_ref());
}

pub fn random_simplex(r: &mut Rng, d: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..d).map(|_| r.random_range(0.01..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// A population whose strata over `groups` (first characteristic outermost)
/// hold `counts[h]` subjects. Scores follow `score(h, k)`.
pub fn population(
    groups: &[&[&str]],
    counts: &[usize],
    score: impl Fn(usize, usize) -> f64,
) -> (Population, StratificationIndex) {
    let names: Vec<String> = (0..groups.len()).map(|c| format!("c{c}")).collect();
    let mut columns = vec!["id".to_string()];
    columns.extend(names.iter().cloned());
    columns.push("score".into());
    let mut rows = Vec::new();
    for (h, &count) in counts.iter().enumerate() {
        let mut rest = h;
        let mut tuple = vec![0; groups.len()];
        for c in (0..groups.len()).rev() {
            tuple[c] = rest % groups[c].len();
            rest /= groups[c].len();
        }
        for k in 0..count {
            let mut row = vec![format!("p{:05}", rows.len())];
            row.extend(tuple.iter().enumerate().map(|(c, &g)| groups[c][g].to_string()));
            row.push(score(h, k).to_string());
            rows.push(row);
        }
    }
    let pop = Population::from_rows(columns, rows, "id").unwrap();
    let schemas: Vec<CharacteristicSchema> =
        names.iter().zip(groups).map(|(n, g)| CharacteristicSchema::categorical(n, n, g)).collect();
    let index = stratify(&pop, &schemas).unwrap();
    (pop, index)
}

pub fn run_cli(args: &[&str]) -> i32 {
    let mut full = vec!["cohort"];
    full.extend_from_slice(args);
    cohort_select::cli::main_with_args(full)
}

pub fn write(path: &Path, text: &str) -> PathBuf {
    std::fs::write(path, text).unwrap();
    path.to_path_buf()
}
