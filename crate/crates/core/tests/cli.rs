use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cohort_select::ideal::count_range_grid;
use serde_json::{json, Value};

const AGES: [(&str, Option<f64>, Option<f64>); 7] = [
    ("18-24", Some(18.0), Some(25.0)),
    ("25-34", Some(25.0), Some(35.0)),
    ("35-44", Some(35.0), Some(45.0)),
    ("45-54", Some(45.0), Some(55.0)),
    ("55-64", Some(55.0), Some(65.0)),
    ("65-74", Some(65.0), Some(75.0)),
    ("75+", Some(75.0), None),
];

/// A survey-like population skewed towards young men: every gender × age
/// stratum is populated, younger ones more heavily.
fn write_survey(dir: &Path) -> PathBuf {
    let mut text = String::from("id,gender,age,score\n");
    let mut k = 0;
    for (g, gender) in ["male", "female"].iter().enumerate() {
        for (a, (_, lo, _)) in AGES.iter().enumerate() {
            let count = (70 - 8 * a) * (2 - g) / 2 + 12;
            for i in 0..count {
                let age = lo.unwrap() + (i % 7) as f64;
                text.push_str(&format!("r{k:04},{gender},{age},{}\n", 40.0 + (i * (a + 1) % 13) as f64));
                k += 1;
            }
        }
    }
    let path = dir.join("survey.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn characteristics() -> Value {
    let ages: Vec<Value> = AGES
        .iter()
        .map(|(name, lo, hi)| {
            let mut g = json!({ "name": name, "min": lo });
            if let Some(hi) = hi {
                g["max"] = json!(hi);
            }
            g
        })
        .collect();
    json!([
        { "name": "gender", "column": "gender",
          "groups": [ { "name": "male", "values": ["male"] }, { "name": "female", "values": ["female"] } ] },
        { "name": "age", "column": "age", "groups": ages }
    ])
}

fn uniform_age() -> Value {
    json!({ "18-24": 15, "25-34": 15, "35-44": 15, "45-54": 15, "55-64": 15, "65-74": 15, "75+": 10 })
}

fn base_config() -> Value {
    json!({
        "dataset": { "path": "survey.csv" },
        "characteristics": characteristics(),
        "ideals": [
            { "name": "census", "marginals": { "gender": { "male": 50, "female": 50 }, "age": uniform_age() } }
        ],
        "sample_size": 50,
        "seed": 11,
        "grid_step": 0.05,
        "neyman": { "target_column": "score" },
        "output_dir": "out"
    })
}

struct Study {
    dir: tempfile::TempDir,
    config: PathBuf,
}

impl Study {
    fn new(config: Value) -> Study {
        let dir = tempfile::tempdir().unwrap();
        write_survey(dir.path());
        let path = dir.path().join("study.json");
        std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
        Study { dir, config: path }
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_cohort"))
            .args(args)
            .arg("--config")
            .arg(&self.config)
            .env("RUST_LOG", "info")
            .output()
            .unwrap()
    }

    fn out(&self, file: &str) -> PathBuf {
        self.dir.path().join("out").join(file)
    }

    fn json(&self, file: &str) -> Value {
        serde_json::from_str(&std::fs::read_to_string(self.out(file)).unwrap()).unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn column_sum(path: &Path, column: &str) -> f64 {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == column).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].parse::<f64>().unwrap()).sum()
}

#[test]
fn stratify_writes_distribution_and_top_rows() {
    let s = Study::new(base_config());
    let o = s.run(&["stratify", "--top", "10"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv_path = s.out("joint_initial.csv");
    let rows = csv::Reader::from_path(&csv_path).unwrap().records().count();
    assert_eq!(rows, 14);
    assert!((column_sum(&csv_path, "fraction") - 1.0).abs() <= 1e-9);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(lines.len(), 11);
    assert!(lines[10].starts_with("other"));
    assert!(lines[0].starts_with("male|18-24"));
    let summary = s.json("stratification.json");
    assert_eq!(summary["dimension"], 14);
    assert_eq!(summary["marginals"][1]["groups"].as_array().unwrap().len(), 7);
}

#[test]
fn unknown_column_is_named() {
    let mut cfg = base_config();
    cfg["characteristics"][0]["column"] = json!("sex");
    let s = Study::new(cfg);
    let o = s.run(&["stratify"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("sex"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_two() {
    let s = Study::new(base_config());
    assert_eq!(code(&s.run(&["baseline", "--method", "quota"])), 2);
    assert_eq!(code(&s.run(&["baseline"])), 2);
    let bare = Command::new(env!("CARGO_BIN_EXE_cohort")).arg("solve").output().unwrap();
    assert_eq!(code(&bare), 2);
    let mut cfg = base_config();
    cfg["methods"] = json!(["op"]);
    let one = Study::new(cfg);
    let o = one.run(&["compare"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("at least two methods"));
}

fn synthetic_config(size: usize, seed: u64) -> Value {
    json!({
        "dataset": { "path": "data/gen.csv" },
        "synthetic": {
            "size": size,
            "characteristics": [
                { "name": "gender", "groups": ["male", "female"], "skew": [0.7, 0.3] },
                { "name": "age", "groups": ["young", "old"], "skew": [0.5, 0.5] }
            ]
        },
        "seed": seed
    })
}

#[test]
fn generate_follows_skew_and_repeats() {
    let s = Study::new(synthetic_config(1000, 3));
    assert_eq!(code(&s.run(&["generate"])), 0);
    let path = s.dir.path().join("data/gen.csv");
    let first = std::fs::read(&path).unwrap();
    let mut r = csv::Reader::from_path(&path).unwrap();
    let males = r.records().filter(|rec| &rec.as_ref().unwrap()[1] == "male").count();
    // 3 standard deviations of a binomial(1000, 0.7)
    assert!((males as f64 - 700.0).abs() <= 3.0 * (1000.0f64 * 0.21).sqrt(), "{males} males");
    let stub: Value =
        serde_json::from_str(&std::fs::read_to_string(s.dir.path().join("data/gen.csv.schema.json")).unwrap()).unwrap();
    assert_eq!(stub["characteristics"].as_array().unwrap().len(), 2);

    assert_eq!(code(&s.run(&["generate"])), 0);
    assert_eq!(std::fs::read(&path).unwrap(), first);

    let empty = Study::new(synthetic_config(0, 3));
    assert_eq!(code(&empty.run(&["generate"])), 2);
}

#[test]
fn solve_reaches_feasible_ideal() {
    let s = Study::new(base_config());
    let o = s.run(&["solve"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let run = s.json("census_op.json");
    assert!(run["cosine_distance"].as_f64().unwrap() <= 1e-6);
    assert_eq!(run["converged"], true);
    assert_eq!(run["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum::<u64>(), 50);
    assert!((column_sum(&s.out("census_op_allocation.csv"), "fraction") - 1.0).abs() <= 1e-9);
}

#[test]
fn range_baseline_logs_enumeration_count() {
    let mut cfg = base_config();
    cfg["ideals"][0]["marginals"]["gender"] = json!({ "male": [40, 60], "female": [40, 60] });
    let s = Study::new(cfg);
    let o = s.run(&["baseline", "--method", "psrs"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let expected = count_range_grid(&[(0.4, 0.6), (0.4, 0.6)], 0.05).unwrap();
    assert_eq!(expected, 5);
    assert!(stderr(&o).contains(&format!("enumerated {expected} lattice combinations")), "{}", stderr(&o));
    assert_eq!(s.json("census_psrs.json")["evaluations"], 5);
}

fn twice_female() -> Value {
    json!({
        "name": "twice-female",
        "marginals": { "gender": { "male": [0, 100], "female": [0, 100] }, "age": uniform_age() },
        "constraints": [ { "terms": [
            { "characteristic": "gender", "group": "female", "coefficient": 1 },
            { "characteristic": "gender", "group": "male", "coefficient": -2 } ],
          "relation": "=", "rhs": 0 } ]
    })
}

#[test]
fn generalized_spec_runs_only_with_optimizer() {
    let mut cfg = base_config();
    cfg["ideals"] = json!([twice_female()]);
    let s = Study::new(cfg);
    let o = s.run(&["baseline", "--method", "ra"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("generalized variation unsupported by baselines"));
    let o = s.run(&["solve"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = &s.json("twice-female_op.json")["chosen_marginals"][0];
    assert!((m[1].as_f64().unwrap() - 2.0 / 3.0).abs() <= 1e-6);
}

#[test]
fn infeasible_constraints_exit_three() {
    let mut cfg = base_config();
    let mut ideal = twice_female();
    ideal["constraints"] = json!([
        { "terms": [ { "characteristic": "gender", "group": "female", "coefficient": 1 } ], "relation": ">=", "rhs": 0.8 },
        { "terms": [ { "characteristic": "gender", "group": "female", "coefficient": 1 } ], "relation": "<=", "rhs": 0.2 }
    ]);
    cfg["ideals"] = json!([ideal]);
    let s = Study::new(cfg);
    let o = s.run(&["solve"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn exhausted_iterations_exit_four() {
    let mut cfg = base_config();
    // old women are scarce, so this ideal is out of reach
    cfg["ideals"][0]["marginals"] = json!({
        "gender": { "male": 10, "female": 90 },
        "age": { "18-24": 0, "25-34": 0, "35-44": 0, "45-54": 0, "55-64": 10, "65-74": 30, "75+": 60 }
    });
    cfg["solver"] = json!({ "max_iters": 1, "multistart": 0, "kkt_tol": 1e-15 });
    let s = Study::new(cfg);
    let o = s.run(&["solve"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert_eq!(s.json("census_op.json")["converged"], false);
}

fn cohort_ids(path: &Path) -> Vec<(String, usize)> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[0].to_string(), rec[1].parse().unwrap())
        })
        .collect()
}

#[test]
fn select_draws_planned_counts() {
    let s = Study::new(base_config());
    for (args, stem) in [
        (vec!["select"], "census_op"),
        (vec!["select", "--method", "psrs"], "census_psrs"),
        (vec!["baseline", "--method", "wrs", "--select"], "census_wrs"),
        (vec!["baseline", "--method", "ra", "--select"], "census_ra"),
    ] {
        let o = s.run(&args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let rows = cohort_ids(&s.out(&format!("{stem}_cohort.csv")));
        assert_eq!(rows.len(), 50);
        let mut ids: Vec<&String> = rows.iter().map(|r| &r.0).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 50);
        let run = s.json(&format!("{stem}.json"));
        let mut per = vec![0u64; 14];
        for (_, h) in &rows {
            per[*h] += 1;
        }
        let counts: Vec<u64> = run["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).collect();
        assert_eq!(per, counts, "{stem}");
    }
    let once = std::fs::read(s.out("census_op_cohort.csv")).unwrap();
    assert_eq!(code(&s.run(&["select"])), 0);
    assert_eq!(std::fs::read(s.out("census_op_cohort.csv")).unwrap(), once);
}

#[test]
fn compare_cells_match_single_runs() {
    let mut cfg = base_config();
    cfg["ideals"] = json!([
        { "name": "census", "marginals": { "gender": { "male": 50, "female": 50 }, "age": uniform_age() } },
        { "name": "older", "marginals": { "gender": { "male": [40, 50], "female": [50, 60] },
          "age": { "18-24": 5, "25-34": 5, "35-44": 10, "45-54": 20, "55-64": 20, "65-74": 20, "75+": 20 } } },
        twice_female()
    ]);
    let s = Study::new(cfg);
    let o = s.run(&["compare"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = s.json("report.json");
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 15);
    let generalized_errors = rows.iter().filter(|r| r["ideal"] == "twice-female" && r["status"] == "error").count();
    assert_eq!(generalized_errors, 4);
    assert!(s.out("timing.json").exists());

    for row in rows.iter().filter(|r| r["status"] == "ok") {
        assert!(
            (row["result"]["fractions"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum::<f64>() - 1.0)
                .abs()
                <= 1e-9
        );
    }
    for (ideal, method) in [("older", "osrs"), ("older", "wrs"), ("census", "op"), ("twice-female", "op")] {
        let cmd = if method == "op" { vec!["solve"] } else { vec!["baseline", "--method", method] };
        let mut args = cmd.clone();
        args.extend(["--ideal", ideal]);
        let o = s.run(&args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let single = s.json(&format!("{ideal}_{method}.json"));
        let cell = rows.iter().find(|r| r["ideal"] == ideal && r["method"] == method).unwrap();
        assert_eq!(&cell["result"], &single, "{ideal}/{method}");
    }
}

#[test]
fn report_rechecks_stored_distances() {
    let s = Study::new(base_config());
    assert_eq!(code(&s.run(&["compare"])), 0);
    let md = std::fs::read(s.out("report.md")).unwrap();
    let o = s.run(&["report"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read(s.out("report.md")).unwrap(), md);

    let mut report = s.json("report.json");
    let d = report["rows"][0]["result"]["cosine_distance"].as_f64().unwrap();
    report["rows"][0]["result"]["cosine_distance"] = json!(d + 1e-6);
    std::fs::write(s.out("report.json"), serde_json::to_string(&report).unwrap()).unwrap();
    let o = s.run(&["report"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("do not match"));
}

#[test]
fn single_characteristic_age_study_reports_every_method() {
    let cfg = json!({
        "dataset": { "path": "survey.csv" },
        "characteristics": [ characteristics()[1].clone() ],
        "ideal": { "marginals": { "age": {
            "18-24": 40, "25-34": 30, "35-44": 20, "45-54": 10, "55-64": 0, "65-74": 0, "75+": 0 } } },
        "sample_size": 100,
        "seed": 5,
        "neyman": { "target_column": "score" }
    });
    let s = Study::new(cfg);
    let o = s.run(&["compare"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = s.json("report.json");
    let rows = report["rows"].as_array().unwrap();
    let methods: Vec<&str> = rows.iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(methods, ["psrs", "osrs", "ra", "wrs", "op"]);
    for r in rows {
        assert_eq!(r["status"], "ok", "{r}");
        assert!(r["result"]["cosine_distance"].as_f64().unwrap().is_finite());
    }
    let op = rows[4]["result"]["cosine_distance"].as_f64().unwrap();
    for r in &rows[..4] {
        assert!(op <= r["result"]["cosine_distance"].as_f64().unwrap() + 1e-12);
    }
    let md = std::fs::read_to_string(s.out("report.md")).unwrap();
    assert_eq!(md.lines().filter(|l| l.starts_with("| ideal | fixed |")).count(), 5);
    let alloc = s.out("allocations.csv");
    assert!((column_sum(&alloc, "fraction") - 5.0).abs() <= 1e-9);
}
