//! Command-line surface for the logit-dynamics analysis library.
//!
//! Exit codes: 0 success, 2 input error, 3 cap exceeded, 4 bound-suite
//! violation found.

mod expr;
mod refs;
mod report;

use clap::{Args, Parser, Subcommand};
use metastab_core::chain::{self, SubsetFamily};
use metastab_core::error::Error;
use metastab_core::partition::{self, PartitionCandidate};
use metastab_core::{convergence, sim, spectral, zoo, GameSpec, SubsetMask};
use report::ReportBuilder;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "metastab",
    version,
    about = "Exact logit-dynamics analysis of finite potential games"
)]
struct Cli {
    /// Number of worker threads (defaults to the rayon heuristic).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List, describe, or export zoo games.
    Game {
        #[command(subcommand)]
        action: GameAction,
    },
    /// Spectra, mixing, bottlenecks and hitting structure of one game.
    Analyze(AnalyzeArgs),
    /// Run the partition procedure or verify a candidate partition.
    Partition(PartitionArgs),
    /// Bottleneck classification table over an n-range of a zoo family.
    Sweep(SweepArgs),
    /// Monte Carlo trajectories.
    Simulate(SimulateArgs),
}

#[derive(Subcommand)]
enum GameAction {
    /// List the zoo families and their parameters.
    List,
    /// Print a summary of one game.
    Describe { game: String },
    /// Write a game-spec JSON file (runs the potential check first).
    Export {
        game: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Game file or zoo reference (family:n=...,k=v).
    game: String,
    #[arg(long)]
    beta: f64,
    /// Include the full spectrum section.
    #[arg(long)]
    spectrum: bool,
    /// Include exact mixing times.
    #[arg(long)]
    mixing: bool,
    /// Bottleneck-minimum search family: exhaustive, connected, heuristic.
    #[arg(long)]
    bottleneck: Option<String>,
    /// Hitting profile of a target subset (see the subset grammar).
    #[arg(long)]
    hitting: Option<String>,
    /// Tolerance for mixing-style quantities.
    #[arg(long, default_value_t = 0.25)]
    eps: f64,
    /// Time grid for the bound suite.
    #[arg(long, default_value = "1,2,4,8,16,32,64")]
    t_grid: String,
    /// Step cap for mixing searches.
    #[arg(long, default_value_t = convergence::DEFAULT_MIXING_CAP)]
    mixing_cap: u64,
    /// Maximum size for connected-subset enumeration.
    #[arg(long, default_value_t = 3)]
    max_size: usize,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PartitionArgs {
    game: String,
    #[arg(long)]
    beta: f64,
    /// Polynomial threshold, e.g. "n^3" or "50*n^2".
    #[arg(long)]
    p: String,
    /// Super-polynomial threshold, e.g. "exp(0.4*n)".
    #[arg(long)]
    q: String,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Candidate family: exhaustive, connected, heuristic.
    #[arg(long, default_value = "connected")]
    family: String,
    #[arg(long, default_value_t = 3)]
    max_size: usize,
    #[arg(long, default_value_t = chain::EXHAUSTIVE_CAP)]
    exhaustive_cap: usize,
    /// Verify the candidate partition in this JSON file instead of searching.
    #[arg(long)]
    verify: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Zoo family name.
    family: String,
    /// Inclusive range, e.g. 4..12.
    #[arg(long)]
    n_range: String,
    /// Beta as a function of n: c, c*log(n), c/n, c*log(n)/n.
    #[arg(long)]
    beta_rule: String,
    /// Optional explicit thresholds (defaults: the counterexample schedule
    /// pair per n for that family, n^3 / exp(0.5*n) otherwise).
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    q: Option<String>,
    /// Extra zoo parameters, k=v.
    #[arg(long)]
    param: Vec<String>,
    /// Write the table as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    game: String,
    #[arg(long)]
    beta: f64,
    /// Start profile: comma-separated strategies or idx:K.
    #[arg(long)]
    start: String,
    #[arg(long)]
    steps: u64,
    /// Seed (flag wins over METASTAB_SEED).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    trajectories: u64,
    /// Tracked subsets, semicolon-separated subset specs.
    #[arg(long, default_value = "")]
    track: String,
    /// Record and emit the full path of each trajectory.
    #[arg(long)]
    full_path: bool,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // ignore failure if a pool is already installed
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let code = match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::CapExceeded { .. } => 3,
                _ => 2,
            }
        }
    };
    std::process::exit(code);
}

fn command_line() -> Vec<String> {
    std::env::args().collect()
}

fn run(command: Command) -> Result<i32, Error> {
    match command {
        Command::Game { action } => run_game(action),
        Command::Analyze(args) => run_analyze(args),
        Command::Partition(args) => run_partition(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Simulate(args) => run_simulate(args),
    }
}

fn run_game(action: GameAction) -> Result<i32, Error> {
    match action {
        GameAction::List => {
            println!("family               parameters");
            println!("pure_coordination    n");
            println!("curie_weiss          n");
            println!("ring_coordination    n, a, b, c, d (defaults 1,1,0,0; needs a>d, b>c)");
            println!("pigou                n");
            println!("counterexample       n, beta (5), eps (0.1), literal_sign (0)");
            println!("random_potential     n, m (2), seed (0), range (1)");
            println!("ladder2              none (n=2 fixture)");
            Ok(0)
        }
        GameAction::Describe { game } => {
            let g = refs::resolve_game(&game)?;
            println!("name:            {}", g.name.as_deref().unwrap_or("-"));
            println!("players:         {}", g.n_players());
            println!("strategy counts: {:?}", g.strategy_counts());
            println!("|S|:             {}", g.size());
            println!("fingerprint:     {}", report::fingerprint(&g));
            if g.has_potential() {
                let phi = g.potential()?;
                let lo = phi.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let delta = metastab_core::game::lipschitz_delta(&g)?;
                let check = metastab_core::game::verify_potential(&g, 1e-9)?;
                let minima = g.potential_local_minima()?;
                println!("potential:       [{lo}, {hi}], Delta(n) = {delta}");
                println!(
                    "potential check: {} (max violation {:.3e})",
                    if check.pass { "pass" } else { "FAIL" },
                    check.max_violation
                );
                println!("local minima:    {} profiles", minima.len());
            } else {
                println!("potential:       none");
            }
            if !g.params.is_empty() {
                println!("params:          {:?}", g.params);
            }
            Ok(0)
        }
        GameAction::Export { game, out } => {
            let g = refs::resolve_game(&game)?;
            if g.has_potential() {
                let check = metastab_core::game::verify_potential(&g, 1e-9)?;
                if !check.pass {
                    return Err(Error::Numerical(format!(
                        "potential check failed with violation {}",
                        check.max_violation
                    )));
                }
            }
            report::emit(Some(&out), &g.to_json())?;
            println!("wrote {}", out.display());
            Ok(0)
        }
    }
}

fn parse_family(name: &str, max_size: usize, cap: usize) -> Result<SubsetFamily, Error> {
    match name {
        "exhaustive" => Ok(SubsetFamily::Exhaustive { cap }),
        "connected" => Ok(SubsetFamily::Connected { max_size }),
        "heuristic" => Ok(SubsetFamily::Heuristic),
        other => Err(Error::invalid(format!(
            "unknown family '{other}' (exhaustive, connected, heuristic)"
        ))),
    }
}

fn parse_t_grid(text: &str) -> Result<Vec<u64>, Error> {
    text.split(',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::invalid(format!("bad grid time '{s}'")))
        })
        .collect()
}

fn run_analyze(args: AnalyzeArgs) -> Result<i32, Error> {
    let start = Instant::now();
    let g = refs::resolve_game(&args.game)?;
    let p = chain::build_chain(&g, args.beta)?;
    let mut rb = ReportBuilder::new(command_line());
    rb.set_game(&g, Some(args.beta));
    let t_grid = parse_t_grid(&args.t_grid)?;

    if args.spectrum {
        let t0 = Instant::now();
        rb.push_section("spectrum", &spectral::spectrum(&p)?)?;
        if g.strategy_counts().iter().all(|&m| m >= 2) {
            rb.push_section("trace_det", &spectral::trace_and_det_report(&g, args.beta)?)?;
        }
        rb.record_timing("spectrum", t0.elapsed().as_secs_f64() * 1e3);
    }
    if args.mixing {
        let t0 = Instant::now();
        let tm = convergence::mixing_time(&p, args.eps, args.mixing_cap)?;
        let tq = convergence::mixing_time(&p, 0.25, args.mixing_cap)?;
        rb.push_section(
            "mixing",
            &serde_json::json!({
                "eps": args.eps,
                "t_mix": tm,
                "t_mix_quarter": tq,
            }),
        )?;
        rb.record_timing("mixing", t0.elapsed().as_secs_f64() * 1e3);
    }
    if let Some(name) = &args.bottleneck {
        let t0 = Instant::now();
        let family = parse_family(name, args.max_size, chain::EXHAUSTIVE_CAP)?;
        let star = chain::bottleneck_star(&p, &SubsetMask::full(g.size()), &family, Some(&g))?;
        rb.push_section("bottleneck_star", &star)?;
        rb.record_timing("bottleneck", t0.elapsed().as_secs_f64() * 1e3);
    }
    let mut suite_subsets: Vec<SubsetMask> = Vec::new();
    if let Some(spec) = &args.hitting {
        let t0 = Instant::now();
        let target = refs::parse_subset(&g, spec)?;
        let budget = t_grid.iter().copied().max().unwrap_or(1024).max(1024);
        let profile = convergence::hitting_profile(&p, &target, args.eps, &t_grid, budget)?;
        if !profile.start_set.is_empty() {
            suite_subsets.push(profile.start_set.clone());
        }
        rb.push_section("hitting", &profile)?;
        rb.record_timing("hitting", t0.elapsed().as_secs_f64() * 1e3);
    }

    // bound suite: always included when the game admits exact treatment
    let mut violations = 0usize;
    if g.has_potential() && g.size() <= spectral::DENSE_EIGEN_CAP {
        let t0 = Instant::now();
        let mut family = convergence::connected_subset_family(&p, args.max_size.min(2));
        family.truncate(64);
        suite_subsets.append(&mut family);
        let suite = convergence::verify_bound_suite(&g, &p, &suite_subsets, &t_grid, 1e-8)?;
        violations = suite.violations.len();
        rb.push_section("bound_suite", &suite)?;
        rb.record_timing("bound_suite", t0.elapsed().as_secs_f64() * 1e3);
    }

    rb.record_timing("total", start.elapsed().as_secs_f64() * 1e3);
    let doc = rb.finish();
    report::emit(
        args.out.as_deref(),
        &serde_json::to_string_pretty(&doc).expect("report serializes"),
    )?;
    Ok(if violations > 0 { 4 } else { 0 })
}

fn candidate_from_file(g: &GameSpec, path: &PathBuf) -> Result<PartitionCandidate, Error> {
    #[derive(serde::Deserialize)]
    struct FileComponent {
        r: Vec<usize>,
        t: Vec<usize>,
    }
    #[derive(serde::Deserialize)]
    struct FileCandidate {
        components: Vec<FileComponent>,
        residual: Vec<usize>,
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
    let file: FileCandidate = serde_json::from_str(&text)
        .map_err(|e| Error::invalid(format!("malformed candidate file: {e}")))?;
    let size = g.size();
    Ok(PartitionCandidate {
        components: file
            .components
            .iter()
            .map(|c| {
                Ok((
                    SubsetMask::from_indices(size, &c.r)?,
                    SubsetMask::from_indices(size, &c.t)?,
                ))
            })
            .collect::<Result<_, Error>>()?,
        residual: SubsetMask::from_indices(size, &file.residual)?,
    })
}

fn run_partition(args: PartitionArgs) -> Result<i32, Error> {
    let start = Instant::now();
    let g = refs::resolve_game(&args.game)?;
    let p_fn = expr::parse_growth(&args.p)?;
    let q_fn = expr::parse_growth(&args.q)?;
    let mut rb = ReportBuilder::new(command_line());
    rb.set_game(&g, Some(args.beta));

    match &args.verify {
        Some(path) => {
            let candidate = candidate_from_file(&g, path)?;
            let verification =
                partition::verify_partition(&g, args.beta, &candidate, &p_fn, &q_fn, args.eps)?;
            rb.push_section("partition_verification", &verification)?;
        }
        None => {
            let family = parse_family(&args.family, args.max_size, args.exhaustive_cap)?;
            let cfg = partition::PQConfig::new(p_fn, q_fn, args.eps, family)?;
            cfg.validate_range(2, g.n_players().max(2))?;
            let result = partition::run_a_pq(&g, args.beta, &cfg)?;
            if result.stationary_regime {
                rb.push_section(
                    "partition",
                    &serde_json::json!({"verdict": "stationary regime", "result": result}),
                )?;
            } else {
                rb.push_section("partition", &result)?;
            }
        }
    }
    rb.record_timing("total", start.elapsed().as_secs_f64() * 1e3);
    let doc = rb.finish();
    report::emit(
        args.out.as_deref(),
        &serde_json::to_string_pretty(&doc).expect("report serializes"),
    )?;
    Ok(0)
}

fn parse_n_range(text: &str) -> Result<std::ops::RangeInclusive<usize>, Error> {
    let (lo, hi) = text
        .split_once("..")
        .ok_or_else(|| Error::invalid(format!("expected A..B, got '{text}'")))?;
    let lo: usize = lo
        .parse()
        .map_err(|_| Error::invalid(format!("bad range start '{lo}'")))?;
    let hi: usize = hi
        .trim_start_matches('=')
        .parse()
        .map_err(|_| Error::invalid(format!("bad range end '{hi}'")))?;
    if lo > hi {
        return Err(Error::invalid("empty n range"));
    }
    Ok(lo..=hi)
}

fn sweep_csv(rows: &[partition::SweepRow]) -> String {
    let mut out = String::from("n,beta,subset,subset_size,pi_mass,b,inv_b,p_of_n,q_of_n,class\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.16e},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
            r.n,
            r.beta,
            r.subset,
            r.subset_size,
            r.pi_mass,
            r.b,
            r.inv_b,
            r.p_val,
            r.q_val,
            match r.class {
                partition::Classification::PolySide => "poly",
                partition::Classification::SuperSide => "super",
                partition::Classification::Unclassified => "unclassified",
            }
        ));
    }
    out
}

fn run_sweep(args: SweepArgs) -> Result<i32, Error> {
    let start = Instant::now();
    let family = zoo::Family::parse(&args.family)?;
    let n_range = parse_n_range(&args.n_range)?;
    let beta_rule = expr::parse_beta_rule(&args.beta_rule)?;
    let mut params = std::collections::BTreeMap::new();
    for pair in &args.param {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("expected key=value, got '{pair}'")))?;
        params.insert(
            k.to_string(),
            v.parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad value '{v}'")))?,
        );
    }
    let pq = match (&args.p, &args.q) {
        (Some(p), Some(q)) => Some((expr::parse_growth(p)?, expr::parse_growth(q)?)),
        (None, None) => None,
        _ => return Err(Error::invalid("--p and --q must be given together")),
    };
    let rows = partition::classification_sweep(family, &params, &beta_rule, n_range, pq)?;

    let csv = sweep_csv(&rows);
    if let Some(path) = &args.csv {
        report::emit(Some(path), &csv)?;
    }
    let mut rb = ReportBuilder::new(command_line());
    rb.push_section(
        "sweep",
        &serde_json::json!({
            "family": family.name(),
            "beta_rule": beta_rule.label(),
            "rows": rows,
        }),
    )?;
    rb.record_timing("total", start.elapsed().as_secs_f64() * 1e3);
    let doc = rb.finish();
    match (&args.out, &args.csv) {
        (Some(path), _) => report::emit(
            Some(path),
            &serde_json::to_string_pretty(&doc).expect("report serializes"),
        )?,
        (None, None) => print!("{csv}"),
        _ => {}
    }
    Ok(0)
}

fn simulate_csv(trajectories: &[sim::Trajectory], labels: &[String], full_path: bool) -> String {
    let mut header = String::from("trajectory,seed,stream,start,steps,final_state");
    for label in labels {
        header.push_str(&format!(",occupation[{label}],first_hit[{label}]"));
    }
    let mut out = header;
    out.push('\n');
    for (k, t) in trajectories.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{}",
            k, t.seed, t.stream, t.start, t.steps, t.final_state
        ));
        for (occ, hit) in t.occupation.iter().zip(&t.first_hit) {
            out.push_str(&format!(
                ",{},{}",
                occ,
                hit.map(|h| h.to_string()).unwrap_or_default()
            ));
        }
        out.push('\n');
    }
    if full_path {
        out.push_str("trajectory,t,state\n");
        for (k, t) in trajectories.iter().enumerate() {
            if let Some(path) = &t.path {
                for (step, state) in path.iter().enumerate() {
                    out.push_str(&format!("{k},{step},{state}\n"));
                }
            }
        }
    }
    out
}

fn run_simulate(args: SimulateArgs) -> Result<i32, Error> {
    let g = refs::resolve_game(&args.game)?;
    let start = refs::parse_profile(&g, &args.start)?;
    let seed = match args.seed {
        Some(s) => s,
        None => std::env::var("METASTAB_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or(0),
    };
    let mut labels = Vec::new();
    let mut tracked = Vec::new();
    for spec in args.track.split(';').filter(|s| !s.is_empty()) {
        tracked.push(refs::parse_subset(&g, spec)?);
        labels.push(spec.to_string());
    }
    let trajectories = sim::simulate_batch(
        &g,
        args.beta,
        start,
        args.steps,
        seed,
        args.trajectories,
        &tracked,
        args.full_path,
    )?;
    let csv = simulate_csv(&trajectories, &labels, args.full_path);
    report::emit(args.csv.as_deref(), &csv)?;
    Ok(0)
}
