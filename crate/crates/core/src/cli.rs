//! The subcommands behind the `cpmcmc` binary. Each writes its files into the
//! output directory and returns a summary for the terminal.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptation::adapt;
use crate::config::{KChoice, LoadedConfig, ADAPT_LABEL, SYNTH_LABEL};
use crate::error::{Error, Result};
use crate::estimator::{
    aggregate, default_k, iact, read_run_store, run_replicates, variance_time_curve_with, write_run_store, CoupledRun,
    Statistic, VarianceTimeRow, WindowSums,
};
use crate::ggm::{edge_probabilities, ggm_synthetic, write_edge_report, write_matrix_csv};
use crate::model::Model;
use crate::rng::RngStream;
use crate::schedule::ScheduleFile;
use crate::with_model;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;

/// Process exit status for an error.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Config(_) | Error::Io(_) | Error::Json(_) | Error::Domain(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
        }
    }
    let file = fs::File::create(path).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptSummary {
    pub path: PathBuf,
    pub stages: usize,
    pub alpha0: f64,
    pub moves_min: Option<usize>,
    pub moves_mean: Option<f64>,
    pub moves_max: Option<usize>,
}

pub fn cmd_adapt(cfg: &LoadedConfig, out: &Path) -> Result<AdaptSummary> {
    let loaded = cfg.model()?;
    let stream = RngStream::new(cfg.config.seed).child(ADAPT_LABEL);
    let (schedule, name) = with_model!(&loaded, m => (adapt(m, &cfg.config.adapt, &stream)?, m.name().to_string()));
    let file = ScheduleFile::new(&schedule, &name, cfg.config.seed);
    let path = out.join(&cfg.config.output.schedule);
    let mut w = create(&path)?;
    w.write_all(file.to_json()?.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    let m = schedule.mcmc_counts();
    Ok(AdaptSummary {
        path,
        stages: schedule.stages(),
        alpha0: schedule.alpha0(),
        moves_min: m.iter().copied().min(),
        moves_mean: (!m.is_empty()).then(|| m.iter().sum::<usize>() as f64 / m.len() as f64),
        moves_max: m.iter().copied().max(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub path: PathBuf,
    pub replicates: usize,
    pub incomplete: usize,
    /// Meeting time to number of runs.
    pub tau_histogram: BTreeMap<usize, usize>,
}

pub fn load_schedule(cfg: &LoadedConfig, out: &Path) -> Result<ScheduleFile> {
    let path = out.join(&cfg.config.output.schedule);
    let text = fs::read_to_string(&path).map_err(|e| {
        Error::Config(format!(
            "cannot read schedule {} (run `adapt` first): {e}",
            path.display()
        ))
    })?;
    let file = ScheduleFile::from_json(&text)?;
    if file.model != cfg.config.model_name() {
        return Err(Error::Config(format!(
            "schedule was built for model `{}`, config names `{}`",
            file.model,
            cfg.config.model_name()
        )));
    }
    Ok(file)
}

/// Runs the replicates on `workers` threads (the rayon default when `None`).
pub fn cmd_run(cfg: &LoadedConfig, out: &Path, workers: Option<usize>) -> Result<RunSummary> {
    let loaded = cfg.model()?;
    let schedule = load_schedule(cfg, out)?.schedule()?;
    let settings = cfg.config.run.settings()?;
    let (seed, count) = (cfg.config.seed, cfg.config.run.replicates);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let runs = pool.install(|| with_model!(&loaded, m => run_replicates(m, &schedule, &settings, seed, count)))?;
    let path = out.join(&cfg.config.output.runs);
    let mut w = create(&path)?;
    write_run_store(&mut w, &runs)?;
    w.flush()?;
    let mut tau_histogram = BTreeMap::new();
    for tau in runs.iter().filter_map(|r| r.tau) {
        *tau_histogram.entry(tau).or_insert(0) += 1;
    }
    Ok(RunSummary {
        path,
        replicates: runs.len(),
        incomplete: runs.iter().filter(|r| !r.completed).count(),
        tau_histogram,
    })
}

pub fn load_runs(cfg: &LoadedConfig, out: &Path) -> Result<Vec<CoupledRun>> {
    let path = out.join(&cfg.config.output.runs);
    let file = fs::File::open(&path).map_err(|e| {
        Error::Config(format!(
            "cannot read run store {} (run `run` first): {e}",
            path.display()
        ))
    })?;
    read_run_store(BufReader::new(file))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableEstimate {
    pub name: String,
    pub estimate: f64,
    pub variance: Option<f64>,
    pub std_error: Option<f64>,
    pub ci: Option<(f64, f64)>,
}

/// Contents of the report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateFile {
    pub model: String,
    pub k: usize,
    pub l: usize,
    pub statistic: Statistic,
    pub confidence: f64,
    pub r_used: usize,
    pub r_incomplete: usize,
    /// Only one completed run, so no variance is available.
    pub no_variance: bool,
    pub observables: Vec<ObservableEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateSummary {
    pub report: EstimateFile,
    pub report_path: PathBuf,
    pub variance_time_path: PathBuf,
    pub edges_path: Option<PathBuf>,
}

/// Doubling grid `k, 2k, 4k, ...` capped by and ending at `l_max`.
pub fn doubling_grid(k: usize, l_max: usize) -> Vec<usize> {
    let mut grid = Vec::new();
    let mut l = k.max(1);
    while l < l_max {
        grid.push(l);
        l *= 2;
    }
    grid.push(l_max);
    grid
}

/// `h_bar_k_l` for every observable of every completed run; rows are runs.
pub fn window_estimates(
    runs: &[&CoupledRun],
    observables: usize,
    k: usize,
    l: usize,
    which: Statistic,
) -> Result<Vec<Vec<f64>>> {
    runs.iter()
        .map(|r| {
            (0..observables)
                .map(|j| WindowSums::new(r, j, which)?.h_bar(k, l))
                .collect()
        })
        .collect()
}

pub fn cmd_estimate(cfg: &LoadedConfig, out: &Path) -> Result<EstimateSummary> {
    let loaded = cfg.model()?;
    let (name, names) = with_model!(&loaded, m => (m.name().to_string(), m.observable_names()));
    let runs = load_runs(cfg, out)?;
    let completed: Vec<&CoupledRun> = runs.iter().filter(|r| r.completed && r.tau.is_some()).collect();
    if completed.is_empty() {
        return Err(Error::Estimator("the run store has no completed runs".into()));
    }
    let section = &cfg.config.estimate;
    let owned: Vec<CoupledRun> = completed.iter().map(|&r| r.clone()).collect();
    let k = match section.k {
        KChoice::Fixed(k) => k,
        KChoice::Named(_) => default_k(&owned).unwrap_or(1),
    };
    let l = section.l.unwrap_or(cfg.config.run.l).max(k);
    let shortest = completed.iter().map(|r| r.len()).min().unwrap_or(0);
    if l > shortest {
        return Err(Error::Estimator(format!(
            "l = {l} exceeds the shortest completed run ({shortest} steps)"
        )));
    }
    let per_run = window_estimates(&completed, names.len(), k, l, section.statistic)?;
    let single = completed.len() == 1;
    let mut observables = Vec::with_capacity(names.len());
    for (j, obs) in names.iter().enumerate() {
        let column: Vec<f64> = per_run.iter().map(|row| row[j]).collect();
        observables.push(if single {
            ObservableEstimate {
                name: obs.clone(),
                estimate: column[0],
                variance: None,
                std_error: None,
                ci: None,
            }
        } else {
            let r = aggregate(&column, section.confidence)?;
            ObservableEstimate {
                name: obs.clone(),
                estimate: r.estimate,
                variance: Some(r.variance),
                std_error: Some(r.std_error),
                ci: Some(r.ci),
            }
        });
    }
    let report = EstimateFile {
        model: name,
        k,
        l,
        statistic: section.statistic,
        confidence: section.confidence,
        r_used: completed.len(),
        r_incomplete: runs.len() - completed.len(),
        no_variance: single,
        observables,
    };
    let report_path = out.join(&cfg.config.output.report);
    let mut w = create(&report_path)?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    w.write_all(b"\n")?;
    w.flush()?;

    let grid = if section.l_grid.is_empty() {
        doubling_grid(k, shortest)
    } else {
        section.l_grid.clone()
    };
    let variance_time_path = out.join(&cfg.config.output.variance_time);
    let mut csv = csv::Writer::from_writer(create(&variance_time_path)?);
    for (j, obs) in names.iter().enumerate() {
        for row in variance_time_curve_with(&owned, j, &grid, section.statistic)? {
            csv.serialize(VarianceTimeCsvRow::new(obs, &row))
                .map_err(|e| Error::Config(format!("CSV: {e}")))?;
        }
    }
    csv.flush()?;

    let edges_path = match &loaded {
        crate::config::LoadedModel::Ggm(m) => {
            let probs: Vec<f64> = report.observables.iter().map(|o| o.estimate).collect();
            let ses: Vec<f64> = report
                .observables
                .iter()
                .map(|o| o.std_error.unwrap_or(f64::NAN))
                .collect();
            let rows = edge_probabilities(m.p(), &probs, &ses)?;
            let path = out.join(&cfg.config.output.edges);
            let mut w = create(&path)?;
            write_edge_report(&mut w, &rows)?;
            w.flush()?;
            Some(path)
        }
        _ => None,
    };
    Ok(EstimateSummary {
        report,
        report_path,
        variance_time_path,
        edges_path,
    })
}

#[derive(Debug, Serialize)]
struct VarianceTimeCsvRow<'a> {
    observable: &'a str,
    l: usize,
    k: Option<usize>,
    variance: Option<f64>,
    mean_time_s: f64,
    variance_x_time: Option<f64>,
    flagged: bool,
}

impl<'a> VarianceTimeCsvRow<'a> {
    fn new(observable: &'a str, row: &VarianceTimeRow) -> Self {
        Self {
            observable,
            l: row.l,
            k: row.k,
            variance: row.variance,
            mean_time_s: row.mean_time_s,
            variance_x_time: row.variance_x_time,
            flagged: row.flagged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p90: usize,
    pub max: usize,
    /// Fraction of runs that met at the first step.
    pub met_at_one: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableIact {
    pub name: String,
    /// Mean over runs of the IACT of `H(t)`, `t = l/2..l`.
    pub mean_iact: Option<f64>,
    pub runs_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub replicates: usize,
    pub incomplete: usize,
    pub tau: Option<TauStats>,
    pub iact: Vec<ObservableIact>,
}

pub fn tau_stats(runs: &[CoupledRun]) -> Option<TauStats> {
    let mut taus: Vec<usize> = runs.iter().filter(|r| r.completed).filter_map(|r| r.tau).collect();
    if taus.is_empty() {
        return None;
    }
    taus.sort_unstable();
    let n = taus.len();
    let median = if n % 2 == 1 {
        taus[n / 2] as f64
    } else {
        (taus[n / 2 - 1] + taus[n / 2]) as f64 / 2.0
    };
    Some(TauStats {
        count: n,
        mean: taus.iter().sum::<usize>() as f64 / n as f64,
        median,
        p90: default_k(runs).unwrap_or(1),
        max: taus[n - 1],
        met_at_one: taus.iter().filter(|&&t| t == 1).count() as f64 / n as f64,
    })
}

/// Mean IACT of each statistic's chain trajectory `H(t)`, `t = l/2..l`, over
/// runs long enough to estimate it.
pub fn mean_iact(runs: &[CoupledRun], names: &[String], l: usize, which: Statistic) -> Vec<ObservableIact> {
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let values: Vec<f64> = runs
                .iter()
                .filter_map(|r| {
                    let series = match which {
                        Statistic::RaoBlackwell => &r.h,
                        Statistic::SinglePath => &r.h_single,
                    };
                    let end = l.min(series.len());
                    let start = (end / 2).max(1) - 1;
                    let s: Vec<f64> = series[start..end]
                        .iter()
                        .filter_map(|row| row.get(j).copied())
                        .collect();
                    iact(&s).ok().map(|e| e.value)
                })
                .collect();
            ObservableIact {
                name: name.clone(),
                mean_iact: (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
                runs_used: values.len(),
            }
        })
        .collect()
}

pub fn cmd_diagnose(cfg: &LoadedConfig, out: &Path) -> Result<(Diagnostics, PathBuf)> {
    let loaded = cfg.model()?;
    let names = with_model!(&loaded, m => m.observable_names());
    let runs = load_runs(cfg, out)?;
    let diag = Diagnostics {
        replicates: runs.len(),
        incomplete: runs.iter().filter(|r| !r.completed).count(),
        tau: tau_stats(&runs),
        iact: mean_iact(&runs, &names, cfg.config.run.l, cfg.config.estimate.statistic),
    };
    let path = out.join(&cfg.config.output.diagnostics);
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &diag)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok((diag, path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GgmTruth {
    pub p: usize,
    pub n: usize,
    /// 1-based node pairs.
    pub edges: Vec<(usize, usize)>,
    /// Row-major.
    pub precision: Vec<f64>,
}

pub fn cmd_synth_ggm(cfg: &LoadedConfig, out: &Path) -> Result<(PathBuf, PathBuf, usize)> {
    let s = &cfg.config.synth_ggm;
    let mut rng = RngStream::new(cfg.config.seed).child(SYNTH_LABEL).rng();
    let synth = ggm_synthetic(s.p, s.n, s.density, &mut rng).map_err(|e| match e {
        Error::Domain(m) => Error::Config(m),
        other => other,
    })?;
    let data_path = out.join(&s.data);
    let mut w = create(&data_path)?;
    write_matrix_csv(&mut w, &synth.y)?;
    w.flush()?;
    let g = &synth.graph;
    let edges: Vec<(usize, usize)> = (0..g.max_edges())
        .filter(|&k| {
            let (i, j) = g.pair(k);
            g.has_edge(i, j)
        })
        .map(|k| {
            let (i, j) = g.pair(k);
            (i + 1, j + 1)
        })
        .collect();
    let truth = GgmTruth {
        p: s.p,
        n: s.n,
        precision: synth.precision.transpose().iter().copied().collect(),
        edges,
    };
    let truth_path = out.join(&s.truth);
    let mut w = create(&truth_path)?;
    serde_json::to_writer_pretty(&mut w, &truth)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok((data_path, truth_path, truth.edges.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    fn setup(text: &str) -> (tempfile::TempDir, LoadedConfig) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, text).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        (dir, cfg)
    }

    const CONSTANT: &str = "seed = 4\n[model]\nname = \"constant\"\nlog_value = -2.0\n\
        [adapt]\nparticles = 50\n[run]\nparticles = 4\nrho = 1.0\nl = 1\nreplicates = 1\n";

    #[test]
    fn constant_model_round_trip() {
        let (dir, cfg) = setup(CONSTANT);
        let out = dir.path();
        let a = cmd_adapt(&cfg, out).unwrap();
        assert_eq!(a.stages, 0);
        let first = fs::read(&a.path).unwrap();
        cmd_adapt(&cfg, out).unwrap();
        assert_eq!(fs::read(&a.path).unwrap(), first);

        let r = cmd_run(&cfg, out, Some(1)).unwrap();
        assert_eq!(r.replicates, 1);
        assert_eq!(r.tau_histogram, BTreeMap::from([(1, 1)]));
        let e = cmd_estimate(&cfg, out).unwrap();
        assert!(e.report.no_variance);
        assert!(e.report.observables[0].variance.is_none());
        let table = fs::read_to_string(&e.variance_time_path).unwrap();
        assert!(table.lines().nth(1).unwrap().ends_with("true"));
    }

    #[test]
    fn worker_count_does_not_change_the_store() {
        let text = "seed = 11\n[model]\nname = \"conjugate\"\ndata = [[0.3], [1.2], [0.8]]\nkernel = \"random_walk\"\n\
            [adapt]\nparticles = 200\n[run]\nparticles = 8\nrho = 0.5\nl = 6\nreplicates = 12\n";
        let (dir, cfg) = setup(text);
        let out = dir.path();
        cmd_adapt(&cfg, out).unwrap();
        cmd_run(&cfg, out, Some(1)).unwrap();
        let one = fs::read(out.join("runs.jsonl")).unwrap();
        cmd_run(&cfg, out, Some(4)).unwrap();
        let four = fs::read(out.join("runs.jsonl")).unwrap();
        let strip = |bytes: &[u8]| -> Vec<(Option<usize>, Vec<Vec<f64>>)> {
            read_run_store(bytes)
                .unwrap()
                .into_iter()
                .map(|r| (r.tau, r.h))
                .collect()
        };
        assert_eq!(strip(&one), strip(&four));

        let e = cmd_estimate(&cfg, out).unwrap();
        assert_eq!(e.report.r_used, 12);
        assert_eq!(e.report.observables.len(), 2);
        let d = cmd_diagnose(&cfg, out).unwrap().0;
        assert_eq!(d.replicates, 12);
        assert!(d.tau.is_some());
    }

    #[test]
    fn k_beyond_every_tau_gives_plain_averages() {
        let text = "seed = 2\n[model]\nname = \"conjugate\"\ndata = [[0.3], [1.2]]\n\
            [adapt]\nparticles = 100\n[run]\nparticles = 6\nl = 40\nreplicates = 5\n[estimate]\nk = 30\n";
        let (dir, cfg) = setup(text);
        let out = dir.path();
        cmd_adapt(&cfg, out).unwrap();
        cmd_run(&cfg, out, None).unwrap();
        let runs = load_runs(&cfg, out).unwrap();
        assert!(runs.iter().all(|r| r.tau.unwrap() <= 30));
        let e = cmd_estimate(&cfg, out).unwrap();
        let plain: f64 = runs
            .iter()
            .map(|r| r.h[29..40].iter().map(|v| v[0]).sum::<f64>() / 11.0)
            .sum::<f64>()
            / runs.len() as f64;
        assert!((e.report.observables[0].estimate - plain).abs() < 1e-12);
    }

    #[test]
    fn mismatched_schedule_is_a_config_error() {
        let (dir, cfg) = setup(CONSTANT);
        cmd_adapt(&cfg, dir.path()).unwrap();
        let other = CONSTANT.replace(
            "name = \"constant\"\nlog_value = -2.0",
            "name = \"conjugate\"\ndata = [[1.0]]",
        );
        fs::write(dir.path().join("run.toml"), other).unwrap();
        let cfg = RunConfig::load(&dir.path().join("run.toml")).unwrap();
        let err = cmd_run(&cfg, dir.path(), None).unwrap_err();
        assert_eq!(exit_code(&err), EXIT_CONFIG);
    }

    #[test]
    fn synthetic_ggm_files() {
        let text = "seed = 5\n[model]\nname = \"ggm\"\ndata = \"ggm_data.csv\"\n\
            [synth_ggm]\np = 4\nn = 30\ndensity = 0.5\n";
        let (dir, cfg) = setup(text);
        let (data, truth, edges) = cmd_synth_ggm(&cfg, dir.path()).unwrap();
        assert_eq!(edges, 3);
        let y = crate::ggm::read_matrix_csv(fs::File::open(data).unwrap()).unwrap();
        assert_eq!((y.nrows(), y.ncols()), (30, 4));
        let t: GgmTruth = serde_json::from_str(&fs::read_to_string(truth).unwrap()).unwrap();
        assert_eq!(t.precision.len(), 16);
        let loaded = cfg.model().unwrap();
        assert!(matches!(loaded, crate::config::LoadedModel::Ggm(_)));
    }

    #[test]
    fn grid_shape() {
        assert_eq!(doubling_grid(3, 20), vec![3, 6, 12, 20]);
        assert_eq!(doubling_grid(5, 5), vec![5]);
    }
}
