use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{IdealConfig, RunConfig};
use super::report::{self, ComparisonReport, ReportRow, Timing};
use super::{Method, Status};
use crate::allocation::{apportion, draw_positions, selection_rows, write_selection_csv, CohortPlan};
use crate::baselines::{range_wrapper, run_baseline, BaselineContext};
use crate::error::{Error, Result};
use crate::ideal::{count_range_grid, joint_from_marginals, validate_spec, IdealSpec, Variation};
use crate::metrics::{cosine_distance, euclidean_distance, kl_divergence};
use crate::optimizer::{solve, SolveProblem};
use crate::population::{generate_synthetic_population, load_population, stratify, Population, StratificationIndex};

/// A loaded population with its stratification.
pub struct Context {
    pub config: RunConfig,
    pub population: Population,
    pub index: StratificationIndex,
}

impl Context {
    pub fn load(config: &RunConfig) -> Result<Self> {
        config.validate_basics()?;
        let population = load_population(&config.dataset.path, &config.dataset.id_column)?;
        let index = stratify(&population, &config.characteristics)?;
        Ok(Context { config: config.clone(), population, index })
    }

    /// The ideal as a validated spec.
    pub fn spec(&self, ideal: &IdealConfig) -> Result<IdealSpec> {
        let spec = ideal.to_spec(&self.config.characteristics, self.config.sample_size)?;
        validate_spec(&spec, &self.index).into_result()?;
        Ok(spec)
    }
}

/// Everything one method produced for one ideal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub ideal: String,
    pub variation: Variation,
    pub method: Method,
    pub fractions: Vec<f64>,
    pub counts: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_marginals: Option<Vec<Vec<f64>>>,
    pub joint_ideal: Vec<f64>,
    pub cosine_distance: f64,
    pub euclidean_distance: f64,
    /// `KL(F ‖ JI)`; absent when F puts mass where JI has none.
    pub kl_divergence: Option<f64>,
    /// Optimizer only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    /// Lattice combinations tried by a baseline, or optimizer iterations.
    pub evaluations: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub selected: Option<Vec<usize>>,
}

impl MethodRun {
    fn new(
        ideal: &str,
        variation: Variation,
        method: Method,
        fractions: Vec<f64>,
        joint_ideal: Vec<f64>,
        index: &StratificationIndex,
        n: usize,
    ) -> Result<Self> {
        Ok(MethodRun {
            ideal: ideal.to_string(),
            variation,
            method,
            counts: apportion(&fractions, &index.init_counts(), n)?,
            cosine_distance: cosine_distance(&fractions, &joint_ideal)?,
            euclidean_distance: euclidean_distance(&fractions, &joint_ideal)?,
            kl_divergence: kl_divergence(&fractions, &joint_ideal).ok(),
            fractions,
            joint_ideal,
            chosen_marginals: None,
            converged: None,
            evaluations: 1,
            warnings: Vec::new(),
            selected: None,
        })
    }

    pub fn plan(&self) -> CohortPlan {
        CohortPlan { counts: self.counts.clone(), n: self.counts.iter().sum(), selected_ids: None, seed: None }
    }
}

/// Runs `method` on the spec; shared by the single-method commands and
/// `compare` so both give the same numbers.
pub fn run_method(ctx: &Context, ideal: &str, spec: &IdealSpec, method: Method) -> Result<MethodRun> {
    let cfg = &ctx.config;
    let index = &ctx.index;
    let n = spec.sample_size;
    let variation = spec.variation();
    let Some(baseline) = method.baseline() else {
        let problem = SolveProblem::from_spec(spec, index)?
            .with_seed(cfg.seed)
            .with_multistart(cfg.solver.multistart)
            .with_tolerances(cfg.solver.tolerances());
        let res = solve(&problem)?;
        let mut run = MethodRun::new(ideal, variation, method, res.fractions, res.joint_ideal, index, n)?;
        run.chosen_marginals = res.chosen_marginals;
        run.converged = Some(res.converged);
        run.evaluations = res.iterations;
        return Ok(run);
    };

    let neyman = cfg.neyman_config();
    if method == Method::Osrs && neyman.is_none() {
        return Err(Error::Validation("osrs needs a `neyman` section naming the target column".into()));
    }
    let bctx = BaselineContext { population: Some(&ctx.population), neyman: neyman.as_ref(), seed: cfg.seed };
    let (alloc, evaluations) = match variation {
        Variation::Fixed => (run_baseline(baseline, index, &spec.fixed_marginals(index)?, n, &bctx)?, 1),
        Variation::Generalized => {
            return Err(Error::Unsupported("generalized variation unsupported by baselines".into()))
        }
        Variation::Range => {
            let mut combos: u128 = 1;
            for m in spec.ordered_marginals(index)? {
                combos = combos.saturating_mul(count_range_grid(&m.bounds(), cfg.grid_step)?);
            }
            info!("{method}: enumerated {combos} lattice combinations at step {}", cfg.grid_step);
            if combos > 10_000 {
                warn!("{method}: {combos} combinations; each runs the full method");
            }
            let out = range_wrapper(baseline, index, spec, cfg.grid_step, &bctx)?;
            (out.best, out.evaluations)
        }
    };
    let marginals = match &alloc.chosen_marginals {
        Some(m) => m.clone(),
        None => spec.fixed_marginals(index)?,
    };
    let ji = joint_from_marginals(index.layout(), &marginals);
    let mut run = MethodRun::new(ideal, variation, method, alloc.fractions, ji, index, n)?;
    if let Some(sel) = &alloc.selected {
        let mut counts = vec![0; index.dimension()];
        for &p in sel {
            counts[index.stratum_of(p)] += 1;
        }
        run.counts = counts;
    }
    run.chosen_marginals = alloc.chosen_marginals;
    run.evaluations = evaluations;
    run.warnings = alloc.warnings;
    run.selected = alloc.selected;
    Ok(run)
}

pub(super) fn single(cfg: &RunConfig, method: Method, ideal: Option<&str>, select: bool) -> Result<Status> {
    let ctx = Context::load(cfg)?;
    let (name, ideal_cfg) = cfg.select_ideal(ideal)?;
    let spec = ctx.spec(ideal_cfg)?;
    let run = run_method(&ctx, &name, &spec, method)?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
    let stem = format!("{name}_{method}");
    write_json(&out.join(format!("{stem}.json")), &run)?;
    write_allocation_csv(&out.join(format!("{stem}_allocation.csv")), &ctx.index, &run)?;
    info!("{method} on `{name}` ({}): cosine distance {:.6}", run.variation, run.cosine_distance);
    println!("{}\t{}\t{}\t{}", name, run.variation, method, run.cosine_distance);
    if select {
        let positions = match &run.selected {
            Some(p) => p.clone(),
            None => draw_positions(&run.plan(), &ctx.index, cfg.seed)?,
        };
        let rows = selection_rows(&ctx.index, &positions, method.as_str());
        let path = out.join(format!("{stem}_cohort.csv"));
        write_selection_csv(create(&path)?, &rows)?;
        info!("wrote {} selected subjects to {}", rows.len(), path.display());
    }
    Ok(match run.converged {
        Some(false) => Status::NotConverged,
        _ => Status::Done,
    })
}

pub(super) fn compare(cfg: &RunConfig) -> Result<Status> {
    if cfg.methods.len() < 2 {
        return Err(Error::Validation("compare needs at least two methods".into()));
    }
    let ctx = Context::load(cfg)?;
    let ideals = cfg.named_ideals();
    if ideals.is_empty() {
        return Err(Error::Validation("config has no `ideal`".into()));
    }
    let specs: Vec<Result<IdealSpec>> = ideals.iter().map(|(_, i)| ctx.spec(i)).collect();
    let mut cells = Vec::new();
    for ((name, _), spec) in ideals.iter().zip(&specs) {
        for &m in &cfg.methods {
            cells.push((name.clone(), spec.as_ref(), m));
        }
    }
    let done: Vec<(ReportRow, f64)> = cells
        .into_par_iter()
        .map(|(name, spec, method)| {
            let start = Instant::now();
            let row = match spec {
                Ok(spec) => {
                    ReportRow::from_result(&name, Some(spec.variation()), method, run_method(&ctx, &name, spec, method))
                }
                Err(e) => ReportRow::failed(&name, None, method, e),
            };
            (row, start.elapsed().as_secs_f64())
        })
        .collect();
    let timing: Vec<Timing> =
        done.iter().map(|(r, t)| Timing { ideal: r.ideal.clone(), method: r.method, seconds: *t }).collect();
    let rows: Vec<ReportRow> = done.into_iter().map(|(r, _)| r).collect();
    for r in &rows {
        if let Some(e) = &r.error {
            warn!("{} / {}: {e}", r.ideal, r.method);
        }
    }
    let report = ComparisonReport::new(cfg, &ctx.index, rows);
    let out = &cfg.output_dir;
    report.write(out)?;
    write_json(&out.join("timing.json"), &timing)?;
    print!("{}", report.to_markdown());
    info!("wrote report.json, report.csv and report.md to {}", out.display());
    Ok(Status::Done)
}

pub(super) fn report(cfg: &RunConfig) -> Result<Status> {
    let path = cfg.output_dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let report: ComparisonReport = serde_json::from_str(&text)?;
    report.check_distances(report::RECHECK_TOL)?;
    report.write(&cfg.output_dir)?;
    print!("{}", report.to_markdown());
    Ok(Status::Done)
}

#[derive(Serialize)]
struct MarginalSummary<'a> {
    characteristic: &'a str,
    groups: Vec<&'a str>,
    counts: Vec<usize>,
    fractions: Vec<f64>,
}

#[derive(Serialize)]
struct StratumSummary {
    stratum: usize,
    label: String,
    count: usize,
    fraction: f64,
}

#[derive(Serialize)]
struct Stratification<'a> {
    population_size: usize,
    dimension: usize,
    marginals: Vec<MarginalSummary<'a>>,
    strata: Vec<StratumSummary>,
}

pub(super) fn summarize(cfg: &RunConfig, top: usize) -> Result<Status> {
    let ctx = Context::load(cfg)?;
    for (_, ideal) in cfg.named_ideals() {
        ctx.spec(ideal)?;
    }
    let index = &ctx.index;
    let total = index.total();
    let marginals = index
        .schemas()
        .iter()
        .enumerate()
        .map(|(c, s)| {
            let counts: Vec<usize> = {
                let mut v = vec![0; s.group_count()];
                for st in index.strata() {
                    v[st.index[c]] += st.init_count;
                }
                v
            };
            MarginalSummary {
                characteristic: &s.name,
                groups: s.group_names(),
                fractions: counts.iter().map(|&k| k as f64 / total as f64).collect(),
                counts,
            }
        })
        .collect();
    let strata: Vec<StratumSummary> = index
        .strata()
        .iter()
        .enumerate()
        .map(|(h, s)| StratumSummary {
            stratum: h,
            label: index.label(h),
            count: s.init_count,
            fraction: s.joint_initial_fraction,
        })
        .collect();

    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
    let mut w = csv::Writer::from_writer(create(&out.join("joint_initial.csv"))?);
    w.write_record(["stratum", "label", "count", "fraction"])?;
    for s in &strata {
        w.write_record([s.stratum.to_string(), s.label.clone(), s.count.to_string(), s.fraction.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("joint_initial.csv", e))?;

    let mut order: Vec<&StratumSummary> = strata.iter().collect();
    order.sort_by(|a, b| b.count.cmp(&a.count).then(a.stratum.cmp(&b.stratum)));
    println!("{total} subjects in {} strata", strata.len());
    let shown = top.min(order.len());
    for s in &order[..shown] {
        println!("{:<40} {:>8} {:>10.4}", s.label, s.count, s.fraction);
    }
    if shown < order.len() {
        let rest = &order[shown..];
        let count: usize = rest.iter().map(|s| s.count).sum();
        println!("{:<40} {:>8} {:>10.4}", "other", count, count as f64 / total as f64);
    }

    let summary = Stratification { population_size: total, dimension: strata.len(), marginals, strata };
    write_json(&out.join("stratification.json"), &summary)?;
    Ok(Status::Done)
}

pub(super) fn generate(cfg: &RunConfig) -> Result<Status> {
    let synth =
        cfg.synthetic.as_ref().ok_or_else(|| Error::Validation("generate needs a `synthetic` section".into()))?;
    let pop = generate_synthetic_population(&synth.spec, synth.size, cfg.seed)?;
    let path = &cfg.dataset.path;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    pop.write_csv(create(path)?)?;
    let stub = serde_json::json!({
        "dataset": { "path": path.file_name().map(|f| f.to_string_lossy().into_owned()), "id_column": pop.id_column() },
        "characteristics": synth.spec.schemas(),
    });
    let mut schema_path = path.clone().into_os_string();
    schema_path.push(".schema.json");
    write_json(&PathBuf::from(schema_path), &stub)?;
    info!("wrote {} subjects to {}", pop.len(), path.display());
    Ok(Status::Done)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path.display().to_string(), e))
}

pub(super) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_allocation_csv(path: &Path, index: &StratificationIndex, run: &MethodRun) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["stratum", "label", "init", "joint_initial", "joint_ideal", "fraction", "count"])?;
    for (h, s) in index.strata().iter().enumerate() {
        w.write_record([
            h.to_string(),
            index.label(h),
            s.init_count.to_string(),
            s.joint_initial_fraction.to_string(),
            run.joint_ideal[h].to_string(),
            run.fractions[h].to_string(),
            run.counts[h].to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}
