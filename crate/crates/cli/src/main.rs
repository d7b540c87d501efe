use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rmmht::evaluation::{monte_carlo, set_thread_cap, OrderingCheck, RMM_TO_P1_LIMIT};
use rmmht::experiment::{
    metadata, run_algorithm, surveillance_volume, with_metadata, Algorithm, Experiment, RunConfig,
};
use rmmht::simulation::{parse_scans_csv, parse_truth_csv, region_for, scans_csv, simulate, truth_csv, ScenarioConfig};
use rmmht::{selftest, Error};

/// Environment variable capping the Monte Carlo worker count.
const THREADS_ENV: &str = "RMMHT_THREADS";

#[derive(Parser)]
#[command(name = "rmmht", version, about = "Multi-target tracking with randomly switching motion models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate ground truth and cluttered scans from a scenario file.
    Simulate {
        /// Scenario TOML; the built-in three-target preset when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one tracker over simulated or recorded scans.
    Track {
        #[command(flatten)]
        common: Common,
        /// Scans CSV as written by `simulate`; simulated from the config when omitted.
        #[arg(long)]
        scans: Option<PathBuf>,
        /// Truth CSV matching `--scans`; enables truth-aided starts and OSPA.
        #[arg(long, requires = "scans")]
        truth: Option<PathBuf>,
        /// rmm-mht, imm-mht[:P1|:P2|:P3], imm[:P1|:P2|:P3] or kf-oracle.
        #[arg(long)]
        algo: Option<String>,
        /// Scans per association window.
        #[arg(long)]
        window: Option<usize>,
        /// Write the association LP of every step to `<out>/lp/`.
        #[arg(long)]
        dump_lp: bool,
    },
    /// Monte Carlo comparison of several algorithms.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Monte Carlo replicas; replica i uses seed + i.
        #[arg(long)]
        runs: Option<usize>,
        /// Comma-separated algorithm list, overriding the config.
        #[arg(long)]
        algo: Option<String>,
        /// Scans per association window.
        #[arg(long)]
        window: Option<usize>,
        /// OSPA order.
        #[arg(long)]
        ospa_p: Option<f64>,
        /// OSPA cutoff (m).
        #[arg(long)]
        ospa_c: Option<f64>,
    },
    /// Cross-check the solvers and filters against slow reference implementations.
    Selftest {
        #[arg(long, default_value_t = selftest::DEFAULT_SEED)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// Run config TOML; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; `out` when neither this nor the config sets one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => set_thread_cap(n),
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got `{v}`");
                return ExitCode::from(2);
            }
        }
    }
    let outcome = match cli.command {
        Command::Simulate { config, out, seed } => cmd_simulate(config.as_deref(), &out, seed),
        Command::Track { common, scans, truth, algo, window, dump_lp } => {
            cmd_track(&common, scans.as_deref(), truth.as_deref(), algo, window, dump_lp)
        }
        Command::Compare { common, runs, algo, window, ospa_p, ospa_c } => {
            cmd_compare(&common, runs, algo, window, ospa_p, ospa_c)
        }
        Command::Selftest { seed } => cmd_selftest(seed),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, body: &str) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn load_run_config(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = read(p)?;
            RunConfig::from_toml(&text, p.parent())?
        }
        None => RunConfig::default(),
    };
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &RunConfig) -> PathBuf {
    common.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

fn cmd_simulate(config: Option<&Path>, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let mut cfg = match config {
        Some(p) => ScenarioConfig::from_toml(&read(p)?)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let (truth, scans) = simulate(&cfg)?;
    let region = match cfg.region {
        Some(r) => r,
        None => region_for(&cfg, &truth)?,
    };
    let meta = metadata(
        cfg.seed,
        &[
            ("volume", format!("{:.6}", region.area())),
            ("region", format!("{} {} {} {}", region.x_min, region.x_max, region.y_min, region.y_max)),
            ("P_d", cfg.p_d.to_string()),
            ("lambda_f", cfg.lambda_f.to_string()),
            ("config", cfg.to_toml()),
        ],
    );
    write(out, "truth.csv", &truth_csv(&truth, &meta))?;
    write(out, "scans.csv", &scans_csv(&scans, &meta))?;
    println!(
        "{} steps, {} targets, {} measurements",
        truth.len(),
        cfg.num_targets,
        scans.scans.iter().map(|s| s.count()).sum::<usize>()
    );
    Ok(())
}

fn run_metadata(exp: &Experiment, cfg: &RunConfig, extra: &[(&str, String)]) -> Vec<(String, String)> {
    let mut fields: Vec<(&str, String)> = extra.to_vec();
    fields.push(("P_d", exp.scenario.p_d.to_string()));
    fields.push(("config", cfg.to_toml()));
    metadata(exp.scenario.seed, &fields)
}

fn cmd_track(
    common: &Common,
    scans_path: Option<&Path>,
    truth_path: Option<&Path>,
    algo: Option<String>,
    window: Option<usize>,
    dump_lp: bool,
) -> CliResult<()> {
    let mut cfg = load_run_config(common)?;
    if let Some(a) = algo {
        cfg.algorithm = a;
    }
    if let Some(w) = window {
        cfg.window = w;
    }
    let (truth, scans) = match scans_path {
        Some(p) => {
            let scans = parse_scans_csv(&read(p)?)?;
            let truth = truth_path.map(|t| read(t).and_then(|s| Ok(parse_truth_csv(&s)?))).transpose()?;
            (truth, scans)
        }
        None => {
            let (t, s) = simulate(&cfg.scenario())?;
            (Some(t), s)
        }
    };
    if truth.is_none() {
        cfg.truth_init = false;
    }
    let mut exp = cfg.resolve()?;
    exp.tracker.capture_lp = dump_lp;
    let algorithm = Algorithm::parse(&cfg.algorithm, &exp.transition)?;
    if algorithm.needs_origins() && truth.is_none() {
        return Err(Failure::Usage(format!("{} needs --truth", algorithm.name())));
    }
    let started = Instant::now();
    let output = run_algorithm(&exp, &algorithm, truth.as_ref(), &scans, exp.scenario.seed)?;
    let volume = surveillance_volume(&exp, truth.as_ref(), &scans)?;
    let meta = run_metadata(&exp, &cfg, &[("algorithm", algorithm.name()), ("volume", format!("{volume:.6}"))]);
    let out = out_dir(common, &cfg);
    write(&out, "tracks.csv", &with_metadata(&meta, &output.tracks_csv()))?;
    if !output.diagnostics.is_empty() {
        write(&out, "diagnostics.csv", &with_metadata(&meta, &output.diagnostics_csv()))?;
    }
    for (step, dump) in &output.lp_dumps {
        write(&out.join("lp"), &format!("step_{step:04}.txt"), dump)?;
    }
    if let Some(t) = &truth {
        let (_, ospa, _, _) = rmmht::experiment::score_output(&output, t, &exp.ospa);
        let mean = ospa.iter().sum::<f64>() / ospa.len().max(1) as f64;
        println!("{}: {} steps, time-mean OSPA {mean:.3}", algorithm.name(), ospa.len());
    } else {
        println!("{}: {} steps", algorithm.name(), output.estimates.len());
    }
    eprintln!("elapsed {:.2?}", started.elapsed());
    Ok(())
}

fn cmd_compare(
    common: &Common,
    runs: Option<usize>,
    algo: Option<String>,
    window: Option<usize>,
    ospa_p: Option<f64>,
    ospa_c: Option<f64>,
) -> CliResult<()> {
    let mut cfg = load_run_config(common)?;
    if let Some(r) = runs {
        cfg.runs = r;
    }
    if let Some(a) = algo {
        cfg.algorithms = a.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    }
    if let Some(w) = window {
        cfg.window = w;
    }
    if let Some(p) = ospa_p {
        cfg.ospa.p = p;
    }
    if let Some(c) = ospa_c {
        cfg.ospa.c = c;
    }
    if cfg.runs == 0 {
        return Err(Failure::Usage("runs must be at least 1".into()));
    }
    let exp = cfg.resolve()?;
    let algorithms: Vec<Algorithm> =
        cfg.algorithms.iter().map(|a| Algorithm::parse(a, &exp.transition)).collect::<rmmht::Result<_>>()?;
    if algorithms.is_empty() {
        return Err(Failure::Usage("no algorithms selected".into()));
    }
    let started = Instant::now();
    let mc = monte_carlo(&exp, &algorithms, cfg.runs)?;
    let meta = run_metadata(&exp, &cfg, &[("runs", cfg.runs.to_string())]);
    let out = out_dir(common, &cfg);
    write(&out, "ospa.csv", &with_metadata(&meta, &mc.ospa_csv()))?;
    write(&out, "summary.csv", &with_metadata(&meta, &mc.summary_csv()))?;
    write(&out, "mean_ospa.csv", &with_metadata(&meta, &mc.mean_csv()))?;

    println!("{:<14} {:>5} {:>8} {:>14}", "algorithm", "runs", "failures", "time-mean OSPA");
    for s in &mc.summaries {
        println!("{:<14} {:>5} {:>8} {:>14.3}", s.algorithm, s.runs, s.failures, s.time_mean);
    }
    for (a, run, msg) in &mc.failures {
        eprintln!("run {run} of {a} failed: {msg}");
    }
    if let Some(check) = OrderingCheck::from_monte_carlo(&mc) {
        let flag = |ok: bool| if ok { "ok" } else { "VIOLATED" };
        println!(
            "IMM-MHT P1 <= P2 <= P3: {} ({:.3}, {:.3}, {:.3})",
            flag(check.imm_nondecreasing()),
            check.imm[0],
            check.imm[1],
            check.imm[2]
        );
        println!(
            "RMM-MHT / IMM-MHT-P1 <= {RMM_TO_P1_LIMIT}: {} (ratio {:.4})",
            flag(check.rmm_close_to_best()),
            check.ratio()
        );
        if !(check.imm_nondecreasing() && check.rmm_close_to_best()) {
            println!("ordering violated under the following parameters:\n{}", cfg.to_toml());
        }
    }
    eprintln!("elapsed {:.2?}", started.elapsed());
    if mc.summaries.iter().any(|s| s.runs == 0) {
        return Err(Failure::Runtime("every run of at least one algorithm failed".into()));
    }
    Ok(())
}

fn cmd_selftest(seed: u64) -> CliResult<()> {
    let reports = selftest::run_all(seed);
    print!("{}", selftest::table(&reports));
    let failed = reports.iter().filter(|r| !r.passed()).count();
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} suite(s) failed")));
    }
    println!("all {} suites passed", reports.len());
    Ok(())
}
