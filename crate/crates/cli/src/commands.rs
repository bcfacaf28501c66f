use std::path::Path;

use bisys::contingency::{fitted_table, ipf_fit, to_table};
use bisys::glm::fit;
use bisys::model::hierarchical_model_classes;
use bisys::snratio::{summarize, taguchi_anova};
use bisys::{
    chi2_sf, lr_test, parse_formula, to_loglinear, Correction, Correspondence, Design, DesignSpec,
    EffectTerm, GlmFit64, ModelFormula, Resolution, Tolerance,
};

use crate::error::{CliError, Result};
use crate::input::{load_experiment, Experiment};
use crate::report::{Cell, Column, Report, Section};
use crate::{Command, ExperimentArgs, Switch};

const DEFAULT_FACTORS: [&str; 3] = ["A", "B", "C"];

pub fn dispatch(command: &Command) -> Result<Report> {
    match command {
        Command::SnAnova {
            experiment,
            terms,
            pool,
            correction,
            eta_decimals,
            alpha,
        } => {
            let exp = load(experiment)?;
            sn_anova(
                &exp,
                terms,
                pool,
                (*correction).into(),
                *eta_decimals,
                *alpha,
            )
        }
        Command::LrTest {
            experiment,
            null,
            alt,
            oracle,
        } => lr(&load(experiment)?, null, alt, *oracle == Switch::On),
        Command::Fit {
            experiment,
            model,
            oracle,
        } => fit_model(&load(experiment)?, model, *oracle == Switch::On),
        Command::Alias {
            input,
            factors,
            generators,
            max_order,
        } => {
            let design = match input {
                Some(p) => design_from_file(p)?,
                None => design_from_flags(factors, generators)?,
            };
            Ok(alias(&design, *max_order))
        }
        Command::Correspond {
            formulas,
            factors,
            generators,
            design,
        } => {
            let design = match design {
                Some(p) => design_from_file(p)?,
                None => design_from_flags(factors, generators)?,
            };
            correspond(&design, formulas)
        }
    }
}

fn load(args: &ExperimentArgs) -> Result<Experiment> {
    load_experiment(&args.input, args.design.as_deref())
}

fn design_from_flags(factors: &[String], generators: &[String]) -> Result<Design> {
    let generated: Vec<String> = generators
        .iter()
        .filter_map(|g| g.split('=').next())
        .map(|s| s.trim().to_string())
        .collect();
    let base: Vec<String> = if factors.is_empty() {
        DEFAULT_FACTORS.iter().map(|s| s.to_string()).collect()
    } else {
        factors
            .iter()
            .filter(|f| !generated.contains(f))
            .cloned()
            .collect()
    };
    Ok(Design::fractional_factorial(&base, generators)?)
}

/// A design JSON, a JSON experiment (its `design` block) or a CSV experiment.
fn design_from_file(path: &Path) -> Result<Design> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        return Ok(load_experiment(path, None)?.design);
    }
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    let spec_value = value.get("design").cloned().unwrap_or(value);
    let spec: DesignSpec = serde_json::from_value(spec_value).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    Ok(Design::from_spec(&spec)?)
}

fn parse_terms(design: &Design, words: &[String]) -> Result<Vec<EffectTerm>> {
    words
        .iter()
        .map(|w| w.trim())
        .filter(|w| !w.is_empty())
        .map(|w| design.parse_term(w).map_err(CliError::from))
        .collect()
}

fn run_columns(design: &Design) -> Vec<Column> {
    let mut cols = vec![Column::new("Run", None)];
    cols.extend(
        design
            .factors()
            .iter()
            .map(|f| Column::new(f.clone(), None)),
    );
    cols
}

fn run_prefix(design: &Design, k: usize) -> Vec<Cell> {
    let mut row = vec![Cell::Int(k as i64 + 1)];
    row.extend(
        design
            .levels(k)
            .into_iter()
            .map(|l| Cell::Int(i64::from(l))),
    );
    row
}

fn round_to(x: f64, decimals: usize) -> f64 {
    let s = 10f64.powi(decimals as i32);
    (x * s).round() / s
}

pub fn sn_anova(
    exp: &Experiment,
    terms: &[String],
    pool: &[String],
    correction: Correction,
    eta_decimals: Option<usize>,
    alpha: f64,
) -> Result<Report> {
    let design = &exp.design;
    let mut model_terms = parse_terms(design, terms)?;
    if model_terms.is_empty() {
        model_terms = (0..design.num_factors()).map(EffectTerm::single).collect();
    }
    let pooled_terms = parse_terms(design, pool)?;

    let summaries = exp
        .runs
        .iter()
        .map(|r| summarize::<f64>(r, correction))
        .collect::<bisys::Result<Vec<_>>>()?;
    let mut eta: Vec<f64> = summaries.iter().map(|s| s.eta_db).collect();
    if let Some(d) = eta_decimals {
        eta.iter_mut().for_each(|e| *e = round_to(*e, d));
    }
    let table = taguchi_anova(design, &eta, &model_terms, &pooled_terms)?;

    let mut report = Report::new("sn-anova", Some(exp.digest.clone()));
    let mut cols = run_columns(design);
    for n in ["n11", "n12", "n21", "n22"] {
        cols.push(Column::new(n, None));
    }
    cols.push(Column::new("p0", Some(3)));
    cols.push(Column::new("eta (dB)", Some(3)));
    let rows = exp
        .runs
        .iter()
        .zip(&summaries)
        .enumerate()
        .map(|(k, (r, s))| {
            let mut row = run_prefix(design, k);
            for c in [r.n11, r.n12, r.n21, r.n22] {
                row.push(Cell::Int(c as i64));
            }
            row.push(Cell::num(s.p0_hat));
            row.push(Cell::num(s.eta_db));
            row
        })
        .collect();
    report.sections.push(Section {
        title: "SN ratios".into(),
        columns: cols,
        rows,
    });

    let mut rows: Vec<Vec<Cell>> = table
        .rows
        .iter()
        .map(|r| {
            vec![
                Cell::text(&r.label),
                Cell::Int(r.df as i64),
                Cell::num(r.sum_sq),
                Cell::num(r.mean_sq),
                Cell::opt(r.f_value),
                Cell::opt(r.p_value),
            ]
        })
        .collect();
    rows.push(vec![
        Cell::text("Residual"),
        Cell::Int(table.residual.df as i64),
        Cell::num(table.residual.sum_sq),
        Cell::opt(table.residual.mean_sq),
        Cell::Empty,
        Cell::Empty,
    ]);
    rows.push(vec![
        Cell::text("Total"),
        Cell::Int(design.runs() as i64 - 1),
        Cell::num(table.total_sum_sq),
        Cell::Empty,
        Cell::Empty,
        Cell::Empty,
    ]);
    report.sections.push(Section {
        title: "ANOVA".into(),
        columns: vec![
            Column::new("Source", None),
            Column::new("df", None),
            Column::new("SS", Some(2)),
            Column::new("MS", Some(2)),
            Column::new("F", Some(4)),
            Column::new("p", Some(5)),
        ],
        rows,
    });

    report.scalar(
        "correction",
        Cell::text(match correction {
            Correction::Always => "always",
            Correction::Never => "never",
        }),
        None,
    );
    if let Some(d) = eta_decimals {
        report.note(format!(
            "SN ratios rounded to {d} decimals before the ANOVA"
        ));
    }
    if !table.pooled.is_empty() {
        let names: Vec<&str> = table.pooled.iter().map(|(l, _)| l.as_str()).collect();
        report.note(format!("pooled into the residual: {}", names.join(", ")));
    }
    if table.residual_df_zero {
        report.note("residual has no degrees of freedom; F and p omitted");
    }
    report.note(optimal_condition(design, &eta, &table, alpha)?);
    Ok(report)
}

/// Level combination of the significant terms' factors with the highest
/// predicted SN ratio under the significant effects.
fn optimal_condition(
    design: &Design,
    eta: &[f64],
    table: &bisys::AnovaTable64,
    alpha: f64,
) -> Result<String> {
    let sig: Vec<&bisys::snratio::AnovaRow<f64>> = table
        .rows
        .iter()
        .filter(|r| r.p_value.is_some_and(|p| p < alpha))
        .collect();
    if sig.is_empty() {
        return Ok(format!("no term is significant at {alpha}"));
    }
    let k = eta.len() as f64;
    let mean = eta.iter().sum::<f64>() / k;
    let mut effects = Vec::new();
    for r in &sig {
        let c = design.column_product(r.term)?;
        let est = c
            .iter()
            .zip(eta)
            .map(|(&ci, &e)| f64::from(ci) * e)
            .sum::<f64>()
            / k;
        effects.push((r.term, est));
    }
    let factors = sig
        .iter()
        .fold(EffectTerm(0), |acc, r| EffectTerm(acc.0 | r.term.0))
        .indices();
    let mut best: Option<(u64, f64)> = None;
    for combo in 0..(1u64 << factors.len()) {
        // bit set means level 2 (contrast -1)
        let sign = |term: EffectTerm| -> f64 {
            let flips = factors
                .iter()
                .enumerate()
                .filter(|(b, &f)| term.has(f) && combo & (1 << b) != 0)
                .count();
            if flips % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        };
        let pred = mean + effects.iter().map(|&(t, e)| e * sign(t)).sum::<f64>();
        if best.is_none_or(|(_, b)| pred > b) {
            best = Some((combo, pred));
        }
    }
    let (combo, pred) = best.expect("at least one combination");
    let cond: String = factors
        .iter()
        .enumerate()
        .map(|(b, &f)| {
            format!(
                "{}{}",
                design.factors()[f],
                if combo & (1 << b) != 0 { 2 } else { 1 }
            )
        })
        .collect();
    let labels: Vec<&str> = sig.iter().map(|r| r.label.as_str()).collect();
    Ok(format!(
        "significant at {alpha}: {}; highest predicted SN ratio at {cond} ({pred:.3} dB)",
        labels.join(", ")
    ))
}

fn fitted_section(design: &Design, f: &GlmFit64, title: String) -> Section {
    let mut cols = run_columns(design);
    for n in ["m11", "m12", "m21", "m22"] {
        cols.push(Column::new(n, Some(1)));
    }
    let rows = f
        .fitted
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let mut row = run_prefix(design, k);
            row.extend(m.iter().flatten().map(|&v| Cell::num(v)));
            row
        })
        .collect();
    Section {
        title,
        columns: cols,
        rows,
    }
}

fn coefficient_section(f: &GlmFit64) -> Section {
    Section {
        title: format!("Coefficients under {}", f.formula),
        columns: vec![Column::new("Term", None), Column::new("Estimate", Some(4))],
        rows: f
            .labels
            .iter()
            .zip(&f.beta)
            .map(|(l, &b)| vec![Cell::text(l), Cell::num(b)])
            .collect(),
    }
}

fn oracle_tolerance() -> Tolerance {
    Tolerance::new(1e-12, 1e-10, 20_000).expect("valid tolerance")
}

/// Largest per-cell gap between the GLM fit and IPF on the same model, or
/// `None` when the formula has no log-linear counterpart.
fn ipf_gap(exp: &Experiment, formula: &ModelFormula, f: &GlmFit64) -> Result<Option<f64>> {
    let Correspondence::Loglinear(model) = to_loglinear(formula, &exp.design) else {
        return Ok(None);
    };
    let observed = to_table::<f64>(&exp.design, &exp.runs)?;
    let ipf = ipf_fit(&observed, &model, &oracle_tolerance())?;
    let glm = fitted_table(&exp.design, f)?;
    Ok(Some(
        ipf.table
            .cells
            .iter()
            .zip(&glm.cells)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max),
    ))
}

fn describe_fit(
    report: &mut Report,
    exp: &Experiment,
    role: &str,
    formula: &ModelFormula,
    f: &GlmFit64,
    oracle: bool,
) -> Result<()> {
    match to_loglinear(formula, &exp.design) {
        Correspondence::Loglinear(m) => report.scalar(
            &format!("loglinear {role}"),
            Cell::text(m.to_string()),
            None,
        ),
        Correspondence::NoCorrespondence { reason } => {
            report.scalar(&format!("loglinear {role}"), Cell::text("none"), None);
            report.note(format!("{formula} has no log-linear counterpart: {reason}"));
        }
    }
    report.scalar(
        &format!("deviance {role}"),
        Cell::num(f.deviance_vs_saturated),
        Some(2),
    );
    report.scalar(
        &format!("iterations {role}"),
        Cell::Int(f.iterations as i64),
        None,
    );
    if !f.converged {
        report.note(format!("{formula}: the fit stopped at the iteration limit"));
    }
    let boundary: Vec<String> = f
        .boundary_flags
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(k, _)| (k + 1).to_string())
        .collect();
    if !boundary.is_empty() {
        report.note(format!(
            "{formula}: run(s) {} on the boundary (a fitted cell is near 0; the MLE lies at infinity in some coefficient)",
            boundary.join(", ")
        ));
    }
    if oracle {
        match ipf_gap(exp, formula, f)? {
            Some(gap) => {
                report.scalar(&format!("ipf max abs diff {role}"), Cell::num(gap), None);
                let verdict = if gap < 1e-6 { "agree" } else { "DISAGREE" };
                report.note(format!(
                    "IPF cross-check for {formula}: {verdict} (max cell difference {gap:.2e})"
                ));
            }
            None => report.note(format!(
                "IPF cross-check for {formula}: oracle unavailable (no hierarchical correspondence)"
            )),
        }
    }
    Ok(())
}

pub fn lr(exp: &Experiment, null: &str, alt: &str, oracle: bool) -> Result<Report> {
    let design = &exp.design;
    let null_f = parse_formula(null, design)?;
    let alt_f = parse_formula(alt, design)?;
    let res = lr_test::<f64>(design, &exp.runs, &null_f, &alt_f)?;

    let mut report = Report::new("lr-test", Some(exp.digest.clone()));
    report.sections.push(fitted_section(
        design,
        &res.null_fit,
        format!("Fitted values under {null_f}"),
    ));
    report.sections.push(fitted_section(
        design,
        &res.alt_fit,
        format!("Fitted values under {alt_f}"),
    ));
    report.sections.push(coefficient_section(&res.alt_fit));
    report.scalar("null", Cell::text(null_f.to_string()), None);
    report.scalar("alt", Cell::text(alt_f.to_string()), None);
    report.scalar("statistic", Cell::num(res.statistic), Some(2));
    report.scalar("df", Cell::Int(res.df as i64), None);
    report.scalar("p", Cell::num(res.p_value), Some(6));
    describe_fit(&mut report, exp, "null", &null_f, &res.null_fit, oracle)?;
    describe_fit(&mut report, exp, "alt", &alt_f, &res.alt_fit, oracle)?;
    if res.df_zero {
        report.note("the models have the same number of parameters; p is reported as 1");
    }
    if !oracle {
        report.note("IPF cross-check skipped");
    }
    Ok(report)
}

pub fn fit_model(exp: &Experiment, model: &str, oracle: bool) -> Result<Report> {
    let design = &exp.design;
    let formula = parse_formula(model, design)?;
    let f: GlmFit64 = fit(design, &exp.runs, &formula)?;
    let mut report = Report::new("fit", Some(exp.digest.clone()));
    report.sections.push(coefficient_section(&f));
    report.sections.push(fitted_section(
        design,
        &f,
        format!("Fitted values under {formula}"),
    ));
    report.scalar("model", Cell::text(formula.to_string()), None);
    let df = design.runs() - f.num_params();
    report.scalar("residual df", Cell::Int(df as i64), None);
    if df > 0 {
        let p = chi2_sf(f.deviance_vs_saturated.max(0.0), df as f64)?;
        report.scalar("goodness-of-fit p", Cell::num(p), Some(6));
    }
    describe_fit(&mut report, exp, "model", &formula, &f, oracle)?;
    Ok(report)
}

pub fn alias(design: &Design, max_order: Option<usize>) -> Report {
    let mut report = Report::new("alias", None);
    let p = design.num_factors();
    let gens = design.generators().len();
    report.scalar("factors", Cell::text(design.factors().join(",")), None);
    report.scalar("runs", Cell::Int(design.runs() as i64), None);
    report.scalar(
        "design",
        Cell::text(if gens == 0 {
            format!("2^{p}")
        } else {
            format!("2^({p}-{gens})")
        }),
        None,
    );
    report.scalar(
        "resolution",
        Cell::text(design.resolution().to_string()),
        None,
    );
    if design.resolution() == Resolution::Full {
        report.note("full factorial: no aliasing");
        return report;
    }
    let word = |t: EffectTerm| design.word(t);
    let group: Vec<String> = design.defining_group().into_iter().map(word).collect();
    report.scalar(
        "defining relation",
        Cell::text(format!("I = {}", group.join(" = "))),
        None,
    );
    let a = design.alias_structure(max_order.unwrap_or(p));
    let rows = a
        .alias_classes
        .iter()
        .map(|c| {
            let mut words: Vec<String> = c.terms.iter().map(|&t| word(t)).collect();
            if c.with_intercept {
                words.insert(0, "I".into());
            }
            vec![
                Cell::text(words.join(" = ")),
                Cell::Int(c.terms.len() as i64),
            ]
        })
        .collect();
    report.sections.push(Section {
        title: format!("Alias classes (effects up to order {})", a.max_order),
        columns: vec![
            Column::new("Aliased effects", None),
            Column::new("Size", None),
        ],
        rows,
    });
    report
}

pub fn correspond(design: &Design, formulas: &[String]) -> Result<Report> {
    let models: Vec<ModelFormula> = if formulas.is_empty() {
        hierarchical_model_classes(design)?
    } else {
        formulas
            .iter()
            .map(|f| parse_formula(f, design))
            .collect::<bisys::Result<_>>()?
    };
    let mut report = Report::new("correspond", None);
    let mut rows = Vec::new();
    for m in &models {
        match to_loglinear(m, design) {
            Correspondence::Loglinear(l) => {
                rows.push(vec![Cell::text(m.to_string()), Cell::text(l.to_string())])
            }
            Correspondence::NoCorrespondence { reason } => {
                rows.push(vec![Cell::text(m.to_string()), Cell::text("none")]);
                report.note(format!("{m}: {reason}"));
            }
        }
    }
    report.sections.push(Section {
        title: "Factor model and log-linear model".into(),
        columns: vec![
            Column::new("Factor model", None),
            Column::new("Log-linear model", None),
        ],
        rows,
    });
    Ok(report)
}
