use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use enclosure_core::extraction::{
    null_record, validate_admissibility, AdmissibilityReport, FitOptions,
};
use enclosure_core::forward_solver::{build_grid, BoundaryTrace, SolverError};
use enclosure_core::indicator::{IndicatorError, TauGrid};
use enclosure_core::oracle_suite::{run_oracle_suite, SuiteLevel};
use enclosure_core::par;
use enclosure_core::pipeline::{
    forward, invert, CalibrationMode, ForwardRun, Inversion, PipelineError,
};
use enclosure_core::reference_field::{ReferenceError, ReferenceProblem};
use enclosure_core::{DomainSpec, SourcePulse};

use crate::config::{ExperimentConfig, Obstacle};
use crate::manifest::{
    conditions, sha256_hex, timestamp, ExtractionSummary, FileEntry, RunManifest, SolverSummary,
};

pub const TRACE_FILE: &str = "trace.bin";
pub const COMPANION_FILE: &str = "companion_trace.bin";
pub const INDICATOR_FILE: &str = "indicator.csv";
pub const FLOOR_FILE: &str = "floor.csv";
pub const EXTRACTION_FILE: &str = "extraction.txt";
pub const ADMISSIBILITY_FILE: &str = "admissibility.txt";
pub const CONFIG_COPY: &str = "config.toml";
pub const PLOT_FILE: &str = "plot.csv";

/// A condition the method needs does not hold, or no admissible τ is left.
#[derive(Debug)]
pub struct AdmissibilityFailure(pub String);

impl fmt::Display for AdmissibilityFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for AdmissibilityFailure {}

/// A numerical check failed: unstable solve, non-finite data or a failed oracle.
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_ADMISSIBILITY: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

fn solver_is_numerical(e: &SolverError) -> bool {
    matches!(
        e,
        SolverError::Unstable { .. } | SolverError::CflViolation { .. }
    )
}

/// Exit code for an error chain.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<AdmissibilityFailure>() {
            return EXIT_ADMISSIBILITY;
        }
        if cause.is::<NumericalFailure>() {
            return EXIT_NUMERICAL;
        }
        if let Some(ReferenceError::Admissibility { .. }) = cause.downcast_ref::<ReferenceError>() {
            return EXIT_ADMISSIBILITY;
        }
        if let Some(e) = cause.downcast_ref::<SolverError>() {
            if solver_is_numerical(e) {
                return EXIT_NUMERICAL;
            }
        }
        if let Some(e) = cause.downcast_ref::<PipelineError>() {
            match e {
                PipelineError::Solver(s) if solver_is_numerical(s) => return EXIT_NUMERICAL,
                PipelineError::Indicator(IndicatorError::NonFiniteTrace) => return EXIT_NUMERICAL,
                _ => {}
            }
        }
    }
    EXIT_OTHER
}

/// Command-line values that replace config keys.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub horizon: Option<f64>,
    pub resolution: Option<usize>,
    pub surface_order: Option<usize>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub calibration: Option<String>,
    pub tau_min: Option<f64>,
    pub tau_max: Option<f64>,
    pub tau_count: Option<usize>,
    pub tau_spacing: Option<String>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Vec<String> {
        let mut applied = Vec::new();
        macro_rules! set {
            ($field:expr, $value:expr, $key:literal) => {
                if let Some(v) = &$value {
                    $field = v.clone();
                    applied.push(format!("{}={:?}", $key, v));
                }
            };
        }
        set!(cfg.horizon, self.horizon, "horizon");
        set!(cfg.resolution, self.resolution, "resolution");
        set!(cfg.surface_order, self.surface_order, "surface_order");
        set!(cfg.seed, self.seed, "seed");
        set!(cfg.output_dir, self.output_dir, "output_dir");
        set!(cfg.calibration, self.calibration, "calibration");
        set!(cfg.tau.min, self.tau_min, "tau.min");
        set!(cfg.tau.max, self.tau_max, "tau.max");
        set!(cfg.tau.count, self.tau_count, "tau.count");
        set!(cfg.tau.spacing, self.tau_spacing, "tau.spacing");
        applied
    }
}

/// Config with every derived object built and the admissibility report run.
pub struct Prepared {
    pub cfg: ExperimentConfig,
    pub config_text: Vec<u8>,
    pub config_sha256: String,
    pub obstacle: Obstacle,
    pub pulse: SourcePulse,
    pub problem: ReferenceProblem,
    pub taus: TauGrid,
    pub mode: CalibrationMode,
    pub fit: FitOptions,
    pub report: AdmissibilityReport,
}

pub fn prepare(path: &Path, overrides: &Overrides) -> Result<Prepared> {
    let (mut cfg, bytes) = ExperimentConfig::load(path)?;
    let applied = overrides.apply(&mut cfg);
    cfg.check()?;
    let mut hashed = bytes.clone();
    for a in &applied {
        hashed.extend_from_slice(b"\n# override ");
        hashed.extend_from_slice(a.as_bytes());
    }
    let omega = cfg.omega()?;
    let obstacle = cfg.obstacle()?;
    let pulse = cfg.pulse()?;
    let report = validate_admissibility(&omega, obstacle.domain(), &pulse, cfg.horizon);
    if !report.horizon_ok() {
        let c = report.check("horizon").expect("always evaluated");
        return Err(AdmissibilityFailure(format!(
            "horizon condition {} fails: T - eta - R_Omega(p) = {:.6} < 0 (T = {}, eta = {}, R_Omega(p) = {:.6})",
            c.statement,
            c.margin.unwrap_or(f64::NAN),
            cfg.horizon,
            pulse.eta,
            report.r_omega
        ))
        .into());
    }
    if let Some(d) = obstacle.domain() {
        omega
            .require_contains(d, 0.0)
            .context("the obstacle must lie strictly inside omega")?;
    }
    let problem = ReferenceProblem::new(omega, pulse, cfg.horizon, cfg.surface_order)?;
    Ok(Prepared {
        taus: cfg.tau_grid()?,
        mode: cfg.calibration()?,
        fit: cfg.fit_options()?,
        config_sha256: sha256_hex(&hashed),
        config_text: bytes,
        cfg,
        obstacle,
        pulse,
        problem,
        report,
    })
}

impl Prepared {
    fn manifest(&self, command: &str) -> RunManifest {
        let mut warnings = self.report.warnings.clone();
        if self.report.check("obstacle_size").and_then(|c| c.holds) == Some(false) {
            warnings.push(
                "obstacle-size condition fails: the indicator need not be positive for large tau"
                    .into(),
            );
        }
        RunManifest {
            version: format!("enclosure {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            config_sha256: self.config_sha256.clone(),
            started: timestamp(),
            finished: String::new(),
            seed: self.cfg.seed,
            threads: par::current_threads(),
            backend: if par::is_parallel() {
                "rayon"
            } else {
                "sequential"
            }
            .into(),
            calibration: Some(self.mode.name().to_string()),
            horizon: self.cfg.horizon,
            eta: self.pulse.eta,
            r_d_known: self.obstacle.domain().map(|d| d.sup_radius(&self.pulse.p)),
            admissibility: conditions(&self.report),
            warnings,
            solver: Vec::new(),
            inputs: Vec::new(),
            extraction: None,
            admissible_points: None,
            files: Vec::new(),
        }
    }

    fn output_dir(&self) -> Result<PathBuf> {
        let dir = self.cfg.output_dir.clone();
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    fn solver_obstacle(&self, command: &str) -> Result<Option<&DomainSpec>> {
        self.obstacle.for_solver().ok_or_else(|| {
            anyhow!(
                "`{command}` needs an [obstacle] table; use kind = \"none\" for an empty cavity, \
                 or `invert` with a recorded trace for an unknown obstacle"
            )
        })
    }

    fn forward(&self, d: Option<&DomainSpec>, role: &str) -> Result<ForwardRun> {
        eprintln!(
            "solving the {role} cavity problem at resolution {}",
            self.cfg.resolution
        );
        let run = forward(&self.problem, d, self.cfg.resolution, None)
            .with_context(|| format!("{role} forward solve"))?;
        Ok(run)
    }

    /// Obstacle-free companion; needs only Ω, the pulse and T.
    fn companion(&self) -> Result<ForwardRun> {
        self.forward(None, "obstacle-free companion")
    }
}

fn warn_all(m: &RunManifest) {
    for w in &m.warnings {
        eprintln!("warning: {w}");
    }
}

pub fn validate(path: &Path, overrides: &Overrides) -> Result<()> {
    let p = prepare(path, overrides)?;
    print!("{}", p.report.to_text());
    if let Some(d) = p.obstacle.for_solver() {
        let grid = build_grid(&p.problem.omega, d, p.cfg.resolution)
            .with_context(|| format!("building the grid at resolution {}", p.cfg.resolution))?;
        let tg = grid.time_grid(p.cfg.horizon)?;
        println!(
            "grid: h = {:.6}, {} fluid cells, {} wall faces, {} steps of {:.6} (CFL ratio {:.3})",
            grid.h,
            grid.fluid_cells().len(),
            grid.boundary_faces().len(),
            tg.n_steps(),
            tg.dt(),
            grid.cfl_ratio(tg.dt())
        );
    }
    println!(
        "surface nodes: {}, tau points: {}",
        p.problem.quadrature.len(),
        p.taus.len()
    );
    Ok(())
}

pub fn simulate(path: &Path, overrides: &Overrides) -> Result<RunManifest> {
    let p = prepare(path, overrides)?;
    let d = p.solver_obstacle("simulate")?;
    let dir = p.output_dir()?;
    let mut m = p.manifest("simulate");
    warn_all(&m);
    let run = p.forward(d, "measured")?;
    m.solver.push(SolverSummary::new("measured", &run.stats));
    run.trace.write_to(&dir.join(TRACE_FILE))?;
    m.record(&dir, TRACE_FILE)?;
    if d.is_some() {
        let c = p.companion()?;
        m.solver.push(SolverSummary::new("companion", &c.stats));
        c.trace.write_to(&dir.join(COMPANION_FILE))?;
        m.record(&dir, COMPANION_FILE)?;
    }
    finish(&p, &dir, &mut m)?;
    Ok(m)
}

pub fn run(path: &Path, overrides: &Overrides) -> Result<RunManifest> {
    let p = prepare(path, overrides)?;
    let d = p.solver_obstacle("run")?;
    let dir = p.output_dir()?;
    let mut m = p.manifest("run");
    warn_all(&m);
    let run = p.forward(d, "measured")?;
    m.solver.push(SolverSummary::new("measured", &run.stats));
    run.trace.write_to(&dir.join(TRACE_FILE))?;
    m.record(&dir, TRACE_FILE)?;
    // with an empty obstacle the companion would repeat the same solve
    let companion = match d {
        Some(_) => {
            let c = p.companion()?;
            m.solver.push(SolverSummary::new("companion", &c.stats));
            c.trace.write_to(&dir.join(COMPANION_FILE))?;
            m.record(&dir, COMPANION_FILE)?;
            Some(c.trace)
        }
        None => None,
    };
    let inv = invert(
        &run.trace,
        Some(companion.as_ref().unwrap_or(&run.trace)),
        &p.problem,
        &p.taus,
        p.mode,
        p.fit,
    )?;
    conclude(&p, &dir, &mut m, &inv)
}

pub fn invert_recorded(
    path: &Path,
    overrides: &Overrides,
    trace_path: &Path,
    companion_path: Option<&Path>,
) -> Result<RunManifest> {
    let p = prepare(path, overrides)?;
    let dir = p.output_dir()?;
    let mut m = p.manifest("invert");
    warn_all(&m);
    let trace = read_trace(trace_path, &mut m)?;
    let companion = match companion_path {
        Some(c) => read_trace(c, &mut m)?,
        None => {
            let c = p.companion()?;
            m.solver.push(SolverSummary::new("companion", &c.stats));
            c.trace.write_to(&dir.join(COMPANION_FILE))?;
            m.record(&dir, COMPANION_FILE)?;
            c.trace
        }
    };
    let inv = invert(&trace, Some(&companion), &p.problem, &p.taus, p.mode, p.fit).context(
        "the recorded trace does not match this config (surface order, horizon or time grid)",
    )?;
    conclude(&p, &dir, &mut m, &inv)
}

fn read_trace(path: &Path, m: &mut RunManifest) -> Result<BoundaryTrace> {
    let bytes = std::fs::read(path).with_context(|| format!("reading trace {}", path.display()))?;
    m.inputs.push(FileEntry {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    });
    BoundaryTrace::read_from(path).with_context(|| format!("decoding trace {}", path.display()))
}

fn conclude(p: &Prepared, dir: &Path, m: &mut RunManifest, inv: &Inversion) -> Result<RunManifest> {
    m.write_file(dir, INDICATOR_FILE, inv.series.to_csv().as_bytes())?;
    if let Some(f) = &inv.floor {
        m.write_file(dir, FLOOR_FILE, f.to_csv().as_bytes())?;
    }
    let record = match &inv.extraction {
        Ok(e) => e.to_record(),
        Err(e) => null_record(e),
    };
    m.write_file(dir, EXTRACTION_FILE, record.as_bytes())?;
    m.extraction = Some(ExtractionSummary::from_result(&inv.extraction));
    m.admissible_points = Some(inv.series.admissible_count());
    finish(p, dir, m)?;
    match &inv.extraction {
        Ok(e) => {
            println!(
                "R_D(p) estimate {:.6} from slope {:.6} over tau in [{:.3}, {:.3}] ({} points, r^2 {:.6})",
                e.r_d_estimate, e.slope, e.fit_window.0, e.fit_window.1, e.n_points, e.r_squared
            );
            Ok(m.clone())
        }
        Err(e) => Err(AdmissibilityFailure(format!(
            "no radius extracted ({e}); the null result is recorded in {}",
            dir.join(EXTRACTION_FILE).display()
        ))
        .into()),
    }
}

fn finish(p: &Prepared, dir: &Path, m: &mut RunManifest) -> Result<()> {
    m.write_file(dir, ADMISSIBILITY_FILE, p.report.to_text().as_bytes())?;
    m.write_file(dir, CONFIG_COPY, &p.config_text)?;
    m.finished = timestamp();
    m.save(dir)?;
    eprintln!(
        "wrote {} files and the manifest to {}",
        m.files.len(),
        dir.display()
    );
    Ok(())
}

pub fn oracle_suite(level: SuiteLevel, output: Option<&Path>) -> Result<()> {
    let report = run_oracle_suite(level);
    let text = report.to_text();
    print!("{text}");
    if let Some(path) = output {
        std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    if !report.all_passed() {
        return Err(NumericalFailure(format!("{} oracle checks failed", report.failed())).into());
    }
    Ok(())
}

/// Writes `(τ, (1/τ) ln I)` rows where `I > 0`, plus the constant
/// `−2{(T − η) − R_D}` column when the obstacle was known.
pub fn emit_plots(manifest_path: &Path) -> Result<PathBuf> {
    let mut m = RunManifest::load(manifest_path)?;
    let dir = manifest_path
        .parent()
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let table = m.read_verified(&dir, INDICATOR_FILE)?;
    let reference = m.r_d_known.map(|r| -2.0 * ((m.horizon - m.eta) - r));
    let mut reader = csv::Reader::from_reader(table.as_slice());
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{INDICATOR_FILE} has no {name} column"))
    };
    let (tau_col, log_col) = (col("tau")?, col("inv_tau_log_I")?);
    let mut writer = csv::Writer::from_writer(Vec::new());
    match reference {
        Some(_) => writer.write_record(["tau", "inv_tau_log_I", "reference"])?,
        None => writer.write_record(["tau", "inv_tau_log_I"])?,
    }
    for row in reader.records() {
        let row = row?;
        let lt = &row[log_col];
        if lt.is_empty() {
            continue;
        }
        let mut out = vec![row[tau_col].to_string(), lt.to_string()];
        if let Some(r) = reference {
            out.push(format!("{r:.17e}"));
        }
        writer.write_record(&out)?;
    }
    let bytes = writer.into_inner().map_err(|e| anyhow!("csv: {e}"))?;
    m.write_file(&dir, PLOT_FILE, &bytes)?;
    m.save(&dir)?;
    if m.extraction.as_ref().is_some_and(|e| e.status != "ok") {
        eprintln!(
            "note: the run recorded a null extraction; the plot has only the positive-I points"
        );
    }
    Ok(dir.join(PLOT_FILE))
}

/// Reads `ENCLOSURE_THREADS` and sizes the worker pool.
pub fn configure_threads_from_env() -> Result<()> {
    let Ok(v) = std::env::var("ENCLOSURE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| anyhow!("ENCLOSURE_THREADS must be a positive integer, got {v:?}"))?;
    if n == 0 {
        bail!("ENCLOSURE_THREADS must be a positive integer, got 0");
    }
    par::configure_threads(n).map_err(|e| anyhow!("configuring {n} threads: {e}"))
}
