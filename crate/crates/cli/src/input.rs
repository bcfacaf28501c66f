//! Experiment files: CSV with an optional JSON design sidecar, or one JSON
//! document holding both the design and the runs.

use std::fs;
use std::path::{Path, PathBuf};

use bisys::{align_runs, Design, DesignSpec, RunTable};
use serde::{Deserialize, Deserializer};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

const COUNT_COLUMNS: [&str; 4] = ["n11", "n12", "n21", "n22"];
const IGNORED_COLUMNS: [&str; 3] = ["run", "no", "no."];

/// A validated experiment with runs in design row order.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub design: Design,
    pub runs: Vec<RunTable>,
    /// SHA-256 over the data file followed by the design file, if any.
    pub digest: String,
    pub source: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonExperiment {
    design: DesignSpec,
    runs: Vec<JsonRun>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRun {
    #[serde(deserialize_with = "level_list")]
    levels: Vec<u8>,
    #[serde(deserialize_with = "count")]
    n11: u64,
    #[serde(deserialize_with = "count")]
    n12: u64,
    #[serde(deserialize_with = "count")]
    n21: u64,
    #[serde(deserialize_with = "count")]
    n22: u64,
}

fn count<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u64, D::Error> {
    let v = i64::deserialize(d)?;
    u64::try_from(v).map_err(|_| serde::de::Error::custom(format!("negative count {v}")))
}

fn level_list<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<u8>, D::Error> {
    let v = Vec::<i64>::deserialize(d)?;
    v.into_iter()
        .map(|l| match l {
            1 | 2 => Ok(l as u8),
            _ => Err(serde::de::Error::custom(format!("level {l} is not 1 or 2"))),
        })
        .collect()
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn json_error(path: &Path, e: serde_json::Error) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    }
}

fn looks_like_json(path: &Path, bytes: &[u8]) -> bool {
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
    {
        return true;
    }
    bytes.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'{')
}

/// `data/miyakawa.csv` -> `data/miyakawa.design.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.design.json"))
}

/// Reads a design from a JSON spec (`{"factors": [...], "generators": [...]}`).
pub fn load_design(path: &Path) -> Result<(Design, Vec<u8>)> {
    let bytes = read(path)?;
    let spec: DesignSpec = serde_json::from_slice(&bytes).map_err(|e| json_error(path, e))?;
    Ok((Design::from_spec(&spec)?, bytes))
}

/// Loads an experiment. `design_path` overrides the sidecar lookup.
pub fn load_experiment(path: &Path, design_path: Option<&Path>) -> Result<Experiment> {
    let bytes = read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);

    let (design, runs) = if looks_like_json(path, &bytes) {
        let doc: JsonExperiment =
            serde_json::from_slice(&bytes).map_err(|e| json_error(path, e))?;
        let design = match design_path {
            Some(p) => {
                let (d, raw) = load_design(p)?;
                hasher.update(&raw);
                d
            }
            None => Design::from_spec(&doc.design)?,
        };
        let runs = doc
            .runs
            .into_iter()
            .map(|r| RunTable::new(r.levels, r.n11, r.n12, r.n21, r.n22))
            .collect::<Vec<_>>();
        for (k, r) in runs.iter().enumerate() {
            check_levels(&design, &r.levels).map_err(|message| CliError::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: format!("run {}: {message}", k + 1),
            })?;
        }
        (design, runs)
    } else {
        let sidecar = sidecar_path(path);
        let design = match design_path {
            Some(p) => Some(load_design(p)?),
            None if sidecar.exists() => Some(load_design(&sidecar)?),
            None => None,
        };
        let design = design.map(|(d, raw)| {
            hasher.update(&raw);
            d
        });
        parse_csv(path, &bytes, design)?
    };

    let runs = align_runs(&design, &runs)?;
    let digest = hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    Ok(Experiment {
        design,
        runs,
        digest,
        source: path.to_path_buf(),
    })
}

/// Generated-factor levels given alongside the base levels must agree with
/// the generators.
fn check_levels(design: &Design, levels: &[u8]) -> std::result::Result<(), String> {
    let row = design.row_for_levels(levels).map_err(|e| e.to_string())?;
    if levels.len() == design.num_factors() && design.levels(row) != levels {
        return Err(format!(
            "levels {levels:?} violate the design generators (expected {:?})",
            design.levels(row)
        ));
    }
    Ok(())
}

fn parse_csv(path: &Path, bytes: &[u8], design: Option<Design>) -> Result<(Design, Vec<RunTable>)> {
    let parse_err = |line: u64, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();

    let mut count_idx = [usize::MAX; 4];
    let mut factor_cols: Vec<(usize, String)> = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        let lower = h.to_ascii_lowercase();
        if let Some(c) = COUNT_COLUMNS.iter().position(|&n| n == lower) {
            if count_idx[c] != usize::MAX {
                return Err(parse_err(1, format!("column `{h}` appears twice")));
            }
            count_idx[c] = i;
        } else if IGNORED_COLUMNS.contains(&lower.as_str()) {
            continue;
        } else if h.is_empty() {
            return Err(parse_err(1, format!("column {} has no name", i + 1)));
        } else {
            factor_cols.push((i, h.to_string()));
        }
    }
    if let Some(c) = count_idx.iter().position(|&i| i == usize::MAX) {
        return Err(parse_err(
            1,
            format!("missing count column `{}`", COUNT_COLUMNS[c]),
        ));
    }
    if factor_cols.is_empty() {
        return Err(parse_err(1, "no factor columns".into()));
    }

    let design = match design {
        Some(d) => d,
        None => {
            let names: Vec<&str> = factor_cols.iter().map(|(_, n)| n.as_str()).collect();
            Design::full_factorial(&names)?
        }
    };
    // factor columns rearranged into design order, covering all factors or
    // only the base factors
    let lookup = |j: usize| -> Option<usize> {
        let name = &design.factors()[j];
        factor_cols
            .iter()
            .position(|(_, n)| n == name || n.eq_ignore_ascii_case(name))
    };
    let all: Option<Vec<usize>> = (0..design.num_factors()).map(lookup).collect();
    let order = match all {
        Some(o) => o,
        None => design
            .base_factors()
            .iter()
            .map(|&j| lookup(j))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| {
                parse_err(
                    1,
                    format!(
                        "factor columns {:?} do not cover the design factors {:?}",
                        factor_cols.iter().map(|(_, n)| n).collect::<Vec<_>>(),
                        design.factors()
                    ),
                )
            })?,
    };
    if order.len() != factor_cols.len() {
        let unused: Vec<&str> = factor_cols
            .iter()
            .enumerate()
            .filter(|(k, _)| !order.contains(k))
            .map(|(_, (_, n))| n.as_str())
            .collect();
        return Err(parse_err(
            1,
            format!("columns {unused:?} are not design factors"),
        ));
    }

    let mut runs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let mut levels = Vec::with_capacity(order.len());
        for &k in &order {
            let (col, name) = &factor_cols[k];
            let text = field(*col);
            match text.parse::<i64>() {
                Ok(l @ (1 | 2)) => levels.push(l as u8),
                _ => {
                    return Err(parse_err(
                        line,
                        format!("factor `{name}`: level `{text}` is not 1 or 2"),
                    ))
                }
            }
        }
        let mut counts = [0u64; 4];
        for (c, &i) in count_idx.iter().enumerate() {
            let text = field(i);
            let v: i64 = text.parse().map_err(|_| {
                parse_err(
                    line,
                    format!("`{}`: `{text}` is not an integer", COUNT_COLUMNS[c]),
                )
            })?;
            counts[c] = u64::try_from(v).map_err(|_| {
                parse_err(line, format!("`{}`: negative count {v}", COUNT_COLUMNS[c]))
            })?;
        }
        check_levels(&design, &levels).map_err(|m| parse_err(line, m))?;
        runs.push(RunTable::new(
            levels, counts[0], counts[1], counts[2], counts[3],
        ));
    }
    if runs.is_empty() {
        return Err(parse_err(1, "no runs".into()));
    }
    Ok((design, runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_name() {
        assert_eq!(
            sidecar_path(Path::new("data/miyakawa.csv")),
            PathBuf::from("data/miyakawa.design.json")
        );
    }
}
