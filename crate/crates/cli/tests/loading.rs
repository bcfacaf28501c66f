mod common;

use bisys_cli::input::load_experiment;
use bisys_cli::CliError;
use common::{data, run, temp_file};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const HEADER: &str = "A,B,C,n11,n12,n21,n22";

fn miyakawa_rows() -> Vec<String> {
    std::fs::read_to_string(data("miyakawa.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(str::to_string)
        .collect()
}

fn parse_line(e: CliError) -> (String, u64) {
    match e {
        CliError::Parse { line, message, .. } => (message, line),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn bundled_fixtures() {
    let e = load_experiment(&data("miyakawa.csv"), None).unwrap();
    assert_eq!(e.runs.len(), 8);
    assert_eq!(e.design.num_factors(), 3);
    assert_eq!(e.runs[0].cells(), [[27, 13], [11, 9]]);

    let e = load_experiment(&data("imaginary.csv"), None).unwrap();
    assert_eq!(e.runs.len(), 8);
    let r = &e.runs[4];
    assert_eq!((r.n11, r.n12, r.n21, r.n22), (10, 0, 3, 2));
}

#[test]
fn json_and_csv_agree() {
    let a = load_experiment(&data("miyakawa.csv"), None).unwrap();
    let b = load_experiment(&data("miyakawa.json"), None).unwrap();
    assert_eq!(a.runs, b.runs);
    assert_eq!(a.design, b.design);
    assert_ne!(a.digest, b.digest);
}

#[test]
fn empty_runs_are_rejected() {
    let (_d, p) = temp_file("e.csv", &format!("{HEADER}\n"));
    assert!(load_experiment(&p, None).is_err());
    let (_d, p) = temp_file(
        "e.json",
        r#"{"design": {"factors": ["A", "B"]}, "runs": []}"#,
    );
    assert!(load_experiment(&p, None).is_err());
}

#[test]
fn bad_level_reports_its_line() {
    let mut rows = miyakawa_rows();
    rows[2] = "1,3,1,17,23,8,12".into();
    let (_d, p) = temp_file("x.csv", &format!("{HEADER}\n{}\n", rows.join("\n")));
    let (msg, line) = parse_line(load_experiment(&p, None).unwrap_err());
    assert_eq!(line, 4);
    assert!(msg.contains("level"), "{msg}");
}

#[test]
fn negative_count_is_rejected_with_line() {
    let mut rows = miyakawa_rows();
    rows[5] = "2,1,2,38,-2,10,10".into();
    let (_d, p) = temp_file("x.csv", &format!("{HEADER}\n{}\n", rows.join("\n")));
    let (msg, line) = parse_line(load_experiment(&p, None).unwrap_err());
    assert_eq!(line, 7);
    assert!(msg.contains("negative"), "{msg}");

    let json = std::fs::read_to_string(data("miyakawa.json"))
        .unwrap()
        .replace("\"n12\": 13", "\"n12\": -13");
    let (_d, p) = temp_file("x.json", &json);
    let (msg, line) = parse_line(load_experiment(&p, None).unwrap_err());
    assert!(line > 1);
    assert!(msg.contains("negative"), "{msg}");
}

#[test]
fn non_integer_count_is_a_parse_error() {
    let mut rows = miyakawa_rows();
    rows[0] = "1,1,1,27,13.5,11,9".into();
    let (_d, p) = temp_file("x.csv", &format!("{HEADER}\n{}\n", rows.join("\n")));
    let (_, line) = parse_line(load_experiment(&p, None).unwrap_err());
    assert_eq!(line, 2);
}

#[test]
fn duplicate_and_missing_runs() {
    let mut rows = miyakawa_rows();
    rows[3] = rows[2].clone();
    let (_d, p) = temp_file("x.csv", &format!("{HEADER}\n{}\n", rows.join("\n")));
    let e = load_experiment(&p, None).unwrap_err();
    assert_eq!(e.category(), "data");
    assert!(e.to_string().contains("duplicate"));

    let rows = miyakawa_rows();
    let (_d, p) = temp_file("x.csv", &format!("{HEADER}\n{}\n", rows[..7].join("\n")));
    let e = load_experiment(&p, None).unwrap_err();
    assert!(e.to_string().contains("missing"));
}

#[test]
fn missing_count_column() {
    let (_d, p) = temp_file("x.csv", "A,B,n11,n12,n21\n1,1,1,1,1\n");
    let (msg, line) = parse_line(load_experiment(&p, None).unwrap_err());
    assert_eq!(line, 1);
    assert!(msg.contains("n22"));
}

#[test]
fn run_column_is_ignored_and_order_is_free() {
    let rows = miyakawa_rows();
    let body: Vec<String> = rows
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let f: Vec<&str> = r.split(',').collect();
            // counts first, factors reversed, run number last
            format!(
                "{},{},{},{},{},{},{},{}",
                f[3],
                f[4],
                f[5],
                f[6],
                f[2],
                f[1],
                f[0],
                k + 1
            )
        })
        .collect();
    let text = format!("n11,n12,n21,n22,C,B,A,Run\n{}\n", body.join("\n"));
    let (_d, p) = temp_file("x.csv", &text);
    let e = load_experiment(&p, None).unwrap();
    // factor order follows the header, so the design is C,B,A; same tables per level tuple
    assert_eq!(e.design.factors(), ["C", "B", "A"]);
    let base = load_experiment(&data("miyakawa.csv"), None).unwrap();
    for r in &base.runs {
        let lv = vec![r.levels[2], r.levels[1], r.levels[0]];
        let other = e.runs.iter().find(|x| x.levels == lv).unwrap();
        assert_eq!(other.cells(), r.cells());
    }
}

#[test]
fn sidecar_design_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("frac.csv");
    std::fs::write(
        &csv,
        "A,B,C,D,n11,n12,n21,n22\n\
         1,1,1,1,20,5,4,21\n1,1,2,2,18,7,6,19\n1,2,1,2,15,10,8,17\n1,2,2,1,22,3,2,23\n\
         2,1,1,2,19,6,5,20\n2,1,2,1,21,4,3,22\n2,2,1,1,17,8,7,18\n2,2,2,2,16,9,9,16\n",
    )
    .unwrap();
    std::fs::write(
        dir.path().join("frac.design.json"),
        r#"{"factors": ["A","B","C","D"], "generators": ["D=ABC"]}"#,
    )
    .unwrap();
    let e = load_experiment(&csv, None).unwrap();
    assert!(!e.design.is_full());
    assert_eq!(e.runs.len(), 8);

    // a D level that breaks D = ABC
    let text = std::fs::read_to_string(&csv)
        .unwrap()
        .replace("1,1,1,1,20", "1,1,1,2,20");
    std::fs::write(&csv, text).unwrap();
    let (msg, line) = parse_line(load_experiment(&csv, None).unwrap_err());
    assert_eq!(line, 2);
    assert!(msg.contains("generated"), "{msg}");
}

#[test]
fn digest_is_stable_and_covers_the_sidecar() {
    let a = load_experiment(&data("miyakawa.csv"), None).unwrap();
    let b = load_experiment(&data("miyakawa.csv"), None).unwrap();
    assert_eq!(a.digest, b.digest);
    assert_eq!(a.digest.len(), 64);
    // base-factor columns are enough for a fraction; D follows from D = ABC
    let c = load_experiment(&data("miyakawa.csv"), Some(&data("fraction_d_abc.json"))).unwrap();
    assert_eq!(c.design.num_factors(), 4);
    assert_eq!(c.runs[1].levels, vec![1, 1, 2, 2]);
    assert_ne!(c.digest, a.digest);
}

#[test]
fn shuffled_runs_give_identical_analyses() {
    let rows = miyakawa_rows();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let reference = |path: &str| {
        [
            run(&[
                "sn-anova",
                path,
                "--terms",
                "A,B,C,AC",
                "--pool",
                "AB,BC,ABC",
            ])
            .unwrap(),
            run(&["lr-test", path, "--null", "A/B/C", "--alt", "AC/B"]).unwrap(),
            run(&["fit", path, "--model", "AB/C"]).unwrap(),
        ]
    };
    let base = reference(data("miyakawa.csv").to_str().unwrap());
    for _ in 0..5 {
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rng);
        let (_d, p) = temp_file("s.csv", &format!("{HEADER}\n{}\n", shuffled.join("\n")));
        let other = reference(p.to_str().unwrap());
        for (a, b) in base.iter().zip(&other) {
            assert_eq!(a.sections, b.sections);
            assert_eq!(a.scalars, b.scalars);
            assert_eq!(a.notes, b.notes);
        }
    }
}
