#![allow(dead_code)]

use std::path::PathBuf;
use std::process::Output;

use bisys_cli::{Cli, Report};
use clap::Parser;

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

/// Parses and runs a command line in-process.
pub fn run(args: &[&str]) -> bisys_cli::Result<Report> {
    let cli = Cli::try_parse_from(std::iter::once("bisys").chain(args.iter().copied()))
        .expect("valid command line");
    bisys_cli::run(&cli)
}

pub fn exe(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_bisys"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn num(report: &Report, name: &str) -> f64 {
    report
        .get_scalar(name)
        .and_then(|c| c.as_f64())
        .unwrap_or_else(|| panic!("no numeric scalar `{name}`"))
}

pub fn column(report: &Report, section: &str, col: &str) -> Vec<f64> {
    let s = report
        .sections
        .iter()
        .find(|s| s.title.starts_with(section))
        .unwrap_or_else(|| panic!("no section `{section}`"));
    let i = s
        .columns
        .iter()
        .position(|c| c.name == col)
        .expect("column");
    s.rows
        .iter()
        .map(|r| r[i].as_f64().unwrap_or(f64::NAN))
        .collect()
}

/// Writes `text` to a temp file with the given name and returns the dir guard and path.
pub fn temp_file(name: &str, text: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    (dir, path)
}
