//! Command-line front end. Exit codes: 0 success, 1 property or monitor failure, 2 usage or config error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::characteristics::{causality_scan, check_causality, rest_frame_speeds};
use crate::config::{Manifest, RunConfig};
use crate::error::Error;
use crate::evolve::{evolve, prepare_initial_psi, write_snapshot, InitialData};
use crate::grid::{sobolev_norm, GridField, TorusGrid};
use crate::picard::{energy_monitor, picard_iterate};
use crate::state::COMPONENT_NAMES;
use crate::verify::{det_suite, eigen_suite, samples};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cbdnk", version, about = "Causal first-order viscous conformal fluid toolkit")]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rest-frame characteristic speeds of the configured model.
    Speeds(Common),
    /// Causality conditions, optionally over an n x n lattice of (a1, a2).
    CheckCausality {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scan: Option<usize>,
    },
    /// Closed-form roots and eigenvectors against the numeric spectrum.
    Verify(SuiteArgs),
    /// Closed-form determinant against a dense determinant.
    DetVerify(SuiteArgs),
    /// Evolves the configured initial data.
    Evolve(Common),
    /// Frozen-coefficient iteration on the configured initial data.
    Picard {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Sobolev norms of the initial extended state.
    Norms(Common),
}

#[derive(Debug, Args, Clone)]
pub struct SuiteArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Scale the B block of the principal matrices by 1.05.
    #[arg(long = "corrupt-B")]
    pub corrupt_b: bool,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = write!(out, "{e}");
            return code;
        }
    };
    if let Some(n) = cli.threads {
        // a pool that is already built keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match dispatch(&cli.command, out) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(out, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(out, "error: {msg}");
            EXIT_FAILURE
        }
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InadmissibleModel(_) | Error::InvalidGrid(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type Outcome = std::result::Result<i32, Failure>;

fn load(common: &Common, out: &mut dyn Write) -> std::result::Result<RunConfig, Failure> {
    let (cfg, warnings) = match &common.config {
        Some(p) => RunConfig::load(p).map_err(|e| Failure::Usage(e.to_string()))?,
        None => (RunConfig::default(), Vec::new()),
    };
    for w in warnings {
        writeln!(out, "warning: {w}")?;
    }
    Ok(cfg)
}

fn out_dir(common: &Common) -> std::result::Result<Option<&Path>, Failure> {
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
    }
    Ok(common.out.as_deref())
}

fn dispatch(cmd: &Command, out: &mut dyn Write) -> Outcome {
    match cmd {
        Command::Speeds(c) => speeds(c, out),
        Command::CheckCausality { common, scan } => causality(common, *scan, out),
        Command::Verify(a) => suite(a, false, out),
        Command::DetVerify(a) => suite(a, true, out),
        Command::Evolve(c) => run_evolve(c, out),
        Command::Picard { common, n_max } => run_picard(common, *n_max, out),
        Command::Norms(c) => norms(c, out),
    }
}

fn speeds(common: &Common, out: &mut dyn Write) -> Outcome {
    let begin = Instant::now();
    let cfg = load(common, out)?;
    let dir = out_dir(common)?;
    let model = cfg.model_unchecked();
    writeln!(out, "model eps0={} a1={} a2={} law={}", model.eps0, model.a1, model.a2, model.law.name())?;
    let report = check_causality(&model);
    if let Err(e) = model.validate() {
        writeln!(out, "inadmissible: {e}")?;
        return Ok(EXIT_OK);
    }
    if !report.admissible {
        writeln!(out, "inadmissible: {}", report.diagnostics.join("; "))?;
        return Ok(EXIT_OK);
    }
    let speeds = rest_frame_speeds(&model)?;
    let r = report.ratios;
    let mut csv = String::from("quantity,value\n");
    for (i, s) in speeds.iter().enumerate() {
        writeln!(out, "speed[{i}] = {s:.12}")?;
        csv.push_str(&format!("speed_{i},{s:.17e}\n"));
    }
    for (name, v) in [("sound", r.sound), ("shear", r.shear), ("quartic_plus", r.quartic_plus), ("quartic_minus", r.quartic_minus)] {
        writeln!(out, "ratio {name} = {v:.12}")?;
        csv.push_str(&format!("ratio_{name},{v:.17e}\n"));
    }
    let max = speeds.iter().cloned().fold(0.0, f64::max);
    writeln!(out, "max speed = {max:.12}")?;
    csv.push_str(&format!("max_speed,{max:.17e}\n"));
    if let Some(d) = dir {
        std::fs::write(d.join("speeds.csv"), csv)?;
        Manifest::new("speeds", &cfg, begin.elapsed().as_secs_f64(), "ok").write(&d.join("manifest.json"))?;
    }
    Ok(EXIT_OK)
}

fn causality(common: &Common, scan: Option<usize>, out: &mut dyn Write) -> Outcome {
    let begin = Instant::now();
    let cfg = load(common, out)?;
    let dir = out_dir(common)?;
    let model = cfg.model_unchecked();
    let report = check_causality(&model);
    writeln!(out, "a1 = {}, a2 = {}", model.a1, model.a2)?;
    writeln!(out, "chi > 4 eta: {}", report.chi_exceeds_four_eta)?;
    writeln!(out, "lambda bound: {}", report.lambda_bound_holds)?;
    writeln!(out, "ratios in (0, 1]: {}", report.ratios_in_range)?;
    writeln!(out, "max speed ratio: {:.12}", report.max_speed_ratio)?;
    for d in &report.diagnostics {
        writeln!(out, "  {d}")?;
    }
    writeln!(out, "{}", if report.admissible { "admissible" } else { "inadmissible" })?;
    if let Some(n) = scan {
        let start = Instant::now();
        let points = causality_scan((2.0, 10.0), (0.5, 10.0), n);
        let admissible = points.iter().filter(|p| p.admissible).count();
        writeln!(out, "scan {n}x{n}: {admissible} admissible in {:.3} s", start.elapsed().as_secs_f64())?;
        if let Some(d) = dir {
            let mut csv = String::from("a1,a2,admissible,max_speed_ratio\n");
            for p in &points {
                csv.push_str(&format!("{},{},{},{:.17e}\n", p.a1, p.a2, p.admissible, p.max_speed_ratio));
            }
            std::fs::write(d.join("scan.csv"), csv)?;
        }
    }
    if let Some(d) = dir {
        let status = if report.admissible { "admissible" } else { "inadmissible" };
        Manifest::new("check-causality", &cfg, begin.elapsed().as_secs_f64(), status).write(&d.join("manifest.json"))?;
    }
    Ok(if report.admissible { EXIT_OK } else { EXIT_FAILURE })
}

fn suite(args: &SuiteArgs, det: bool, out: &mut dyn Write) -> Outcome {
    let cfg = load(&args.common, out)?;
    let dir = out_dir(&args.common)?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let b_scale = if args.corrupt_b { 1.05 } else { 1.0 };
    let start = Instant::now();
    let s = samples(args.samples, seed);
    let (passed, text) = if det {
        let r = det_suite(&s, b_scale);
        (
            r.passed(),
            format!(
                "samples {}\nfailures {}\nworst log-det error {:e}\nworst identity error {:e}\n",
                r.samples, r.failures, r.worst_log_error, r.worst_identity_error
            ) + &r.first_failure.map_or(String::new(), |f| format!("first failure: {f}\n")),
        )
    } else {
        let r = eigen_suite(&s, b_scale);
        (
            r.passed(),
            format!(
                "samples {}\nfailures {}\nworst root error {:e}\nworst residual {:e}\nworst off-diagonal {:e}\nmin rank {}\nmin rank ratio {:e}\n",
                r.samples, r.failures, r.worst_root_error, r.worst_residual, r.worst_offdiag, r.min_rank, r.min_rank_ratio
            ) + &r.first_failure.map_or(String::new(), |f| format!("first failure: {f}\n")),
        )
    };
    write!(out, "seed {seed}\n{text}")?;
    writeln!(out, "{} in {:.2} s", if passed { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64())?;
    if let Some(d) = dir {
        std::fs::write(d.join(if det { "det_verify.txt" } else { "verify.txt" }), &text)?;
        let mut c = cfg.clone();
        c.seed = seed;
        Manifest::new(if det { "det-verify" } else { "verify" }, &c, start.elapsed().as_secs_f64(), if passed { "pass" } else { "fail" })
            .write(&d.join("manifest.json"))?;
    }
    Ok(if passed { EXIT_OK } else { EXIT_FAILURE })
}

fn initial(cfg: &RunConfig) -> std::result::Result<(TorusGrid, InitialData), Failure> {
    let model = cfg.model()?;
    let grid = TorusGrid::new(cfg.grid.n)?;
    let data = InitialData::from_spec(&grid, &cfg.initial, &model);
    Ok((grid, data))
}

fn run_evolve(common: &Common, out: &mut dyn Write) -> Outcome {
    let cfg = load(common, out)?;
    let dir = out_dir(common)?;
    let model = cfg.model()?;
    let (_, data) = initial(&cfg)?;
    let start = Instant::now();
    let traj = evolve(&data, &model, &cfg.evolve_config())?;
    let wall = start.elapsed().as_secs_f64();
    let energy = energy_monitor(&traj);
    let status = match &traj.trip {
        None => "completed".to_string(),
        Some(t) => format!("stopped at t = {} (step {}): {}", t.time, t.step, t.error),
    };
    writeln!(out, "steps {} dt {:e} final t {}", traj.steps_taken, traj.dt, traj.final_time())?;
    if let Some(last) = traj.diagnostics.last() {
        writeln!(out, "constraint drift {:e}, divT residual {:e}, min eps {}", last.constraint_drift, last.div_t_res, last.min_eps)?;
    }
    writeln!(out, "energy fit: omega = {:e}, M = {}", energy.omega, energy.m_tilde)?;
    writeln!(out, "{status} in {wall:.2} s")?;
    if let Some(d) = dir {
        traj.write_diagnostics(&d.join("diagnostics.csv"))?;
        energy.write_csv(&d.join("energy.csv"))?;
        for (i, (t, psi)) in traj.times.iter().zip(&traj.snapshots).enumerate() {
            write_snapshot(&d.join(format!("snapshot_{i:05}.bin")), *t, psi)?;
        }
        Manifest::new("evolve", &cfg, wall, &status).write(&d.join("manifest.json"))?;
    }
    Ok(if traj.completed() { EXIT_OK } else { EXIT_FAILURE })
}

fn run_picard(common: &Common, n_max: Option<usize>, out: &mut dyn Write) -> Outcome {
    let cfg = load(common, out)?;
    let dir = out_dir(common)?;
    let model = cfg.model()?;
    let (grid, data) = initial(&cfg)?;
    let mut pc = cfg.picard_config();
    if let Some(n) = n_max {
        pc.n_max = n;
    }
    let start = Instant::now();
    let psi0 = prepare_initial_psi(&grid, &data, &model, cfg.evolve.eps_floor)?;
    let report = picard_iterate(&grid, &model, &psi0, &pc)?;
    let wall = start.elapsed().as_secs_f64();
    write!(out, "{}", report.to_csv())?;
    let verdict = match report.contraction_verdict(0.5) {
        None => "no contraction verdict (fewer than four iterates)".to_string(),
        Some(true) => "contracting".to_string(),
        Some(false) => "ratio above 1/2 for some n >= 4".to_string(),
    };
    let status = if report.non_contracting { "non-contracting".to_string() } else { verdict };
    writeln!(out, "{status}; converged: {}", report.converged)?;
    if let Some(d) = dir {
        report.write_csv(&d.join("iterations.csv"))?;
        let mut c = cfg.clone();
        c.picard.n_max = pc.n_max;
        Manifest::new("picard", &c, wall, &status).write(&d.join("manifest.json"))?;
    }
    Ok(if report.non_contracting { EXIT_FAILURE } else { EXIT_OK })
}

fn norms(common: &Common, out: &mut dyn Write) -> Outcome {
    let begin = Instant::now();
    let cfg = load(common, out)?;
    let dir = out_dir(common)?;
    let model = cfg.model()?;
    let (grid, data) = initial(&cfg)?;
    let psi = prepare_initial_psi(&grid, &data, &model, cfg.evolve.eps_floor)?;
    let mut csv = String::from("component");
    for r in 0..=6 {
        csv.push_str(&format!(",r{r}"));
    }
    csv.push('\n');
    let mut line = |name: &str, f: &GridField, out: &mut dyn Write| -> std::io::Result<()> {
        let vals: Vec<f64> = (0..=6).map(|r| sobolev_norm(&grid, f, r as f64)).collect();
        writeln!(out, "{name:>8} {}", vals.iter().map(|v| format!("{v:.6e}")).collect::<Vec<_>>().join(" "))?;
        csv.push_str(name);
        for v in vals {
            csv.push_str(&format!(",{v:.17e}"));
        }
        csv.push('\n');
        Ok(())
    };
    line("psi", &psi, out)?;
    for (c, name) in COMPONENT_NAMES.iter().enumerate() {
        let f = GridField::from_components(psi.n, vec![psi.component(c).to_vec()]);
        line(name, &f, out)?;
    }
    if let Some(d) = dir {
        std::fs::write(d.join("norms.csv"), csv)?;
        Manifest::new("norms", &cfg, begin.elapsed().as_secs_f64(), "ok").write(&d.join("manifest.json"))?;
    }
    Ok(EXIT_OK)
}
