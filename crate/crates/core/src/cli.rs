//! Command-line front end: attractors → rates → exit times → metastability
//! → verification → plot data, all driven by one TOML config.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::config::{BoundaryMethod, ExperimentConfig};
use crate::dynamics::{
    estimate_boundary_bisection, estimate_boundary_repelling_cycles, find_attractors, trace_separatrix_duffing, Attractor,
    AttractorCatalog, BasinBoundary, Landscape,
};
use crate::error::{Error, Result};
use crate::markov::{
    eps_scaling_report, exit_law_report, verify_statement_1, verify_statement_2, Comparison, Ctmc, ExitLawReport, ScalingReport,
    Statement1Report, Statement2Report,
};
use crate::rates::{
    build_generators, ergodic_measures, goldbeter_rates_quadrature, prelimit_exit_ratio, shifted_kernel_rate, validate_cutoff,
    GeneratorMatrix, Target, Widths,
};
use crate::sde::{exit_cap, exit_times, metastability_run, simulate_path, ExitRecord, SwitchingPath};

#[derive(Debug, Parser)]
#[command(name = "levymeta", version, about = "Metastability under small heavy-tailed Lévy noise")]
pub struct Cli {
    /// Experiment config (TOML).
    #[arg(short, long, global = true, default_value = "config.toml")]
    pub config: PathBuf,
    /// Output directory (overrides `outputs.directory`).
    #[arg(short, long, global = true)]
    pub out: Option<PathBuf>,
    /// Root seed (overrides `sim.seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Replicas (overrides `sim.replicas`).
    #[arg(long, global = true)]
    pub replicas: Option<usize>,
    /// Worker threads; outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Find attractors and the basin boundary; writes catalog.json.
    Attractors,
    /// Limiting generator with standard errors; writes generator.{csv,json}.
    Rates,
    /// First exits from reduced domains; writes exits.jsonl and exit-law reports.
    ExitTimes,
    /// Switching paths and the finite-dimensional comparisons; writes switching.jsonl.
    Metastability,
    /// Collect every report; exit code 5 when a check fails.
    Verify,
    /// Plot-ready CSVs under plots/.
    ReportData,
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Argument(_) => 2,
        Error::MissingArtifact(_) => 3,
        Error::InsufficientSamples { .. } => 5,
        _ => 4,
    }
}

/// Parse, run and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(s) = cli.seed {
        cfg.sim.seed = s;
    }
    if let Some(r) = cli.replicas {
        if r == 0 {
            return Err(Error::Config { key: "sim.replicas".into(), msg: "must be positive".into() });
        }
        cfg.sim.replicas = r;
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.outputs.directory.clone());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::arg(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Attractors => cmd_attractors(&cfg, &out).map(|_| 0),
        Command::Rates => cmd_rates(&cfg, &out).map(|_| 0),
        Command::ExitTimes => cmd_exit_times(&cfg, &out).map(|_| 0),
        Command::Metastability => cmd_metastability(&cfg, &out).map(|_| 0),
        Command::Verify => cmd_verify(&out).map(|v| if v.pass { 0 } else { 5 }),
        Command::ReportData => cmd_report_data(&cfg, &out).map(|_| 0),
    })
}

/// Attractors, boundary and derived widths of a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogArtifact {
    pub system: String,
    pub dim: usize,
    pub radius: f64,
    pub center: Vec<f64>,
    pub attractors: AttractorCatalog,
    pub periods: Vec<Option<f64>>,
    pub boundary: BasinBoundary,
    pub delta0: f64,
    pub gamma: f64,
    pub inward_fraction: f64,
    pub warnings: Vec<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p)?;
    }
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p)?;
    }
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|_| Error::MissingArtifact(format!("{} (run the producing command first)", path.display())))?;
    Ok(serde_json::from_str(&s)?)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let s = fs::read_to_string(path).map_err(|_| Error::MissingArtifact(path.display().to_string()))?;
    s.lines().filter(|l| !l.is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

fn wants_csv(cfg: &ExperimentConfig) -> bool {
    cfg.outputs.formats.iter().any(|f| f == "csv")
}

pub fn cmd_attractors(cfg: &ExperimentConfig, out: &Path) -> Result<CatalogArtifact> {
    let spec = cfg.system_spec()?;
    let seeds = cfg.seeds()?;
    log::info!("searching attractors from {} seeds", seeds.len());
    let catalog = find_attractors(&spec, &seeds)?;
    if catalog.is_empty() {
        return Err(Error::domain("no attractor found from the configured seeds"));
    }
    let boundary = match cfg.boundary.method {
        BoundaryMethod::None => BasinBoundary::default(),
        BoundaryMethod::DuffingSeparatrix => {
            if cfg.system.name != "duffing" {
                return Err(Error::Config {
                    key: "boundary.method".into(),
                    msg: "the separatrix tracer applies to the duffing system only".into(),
                });
            }
            let friction = cfg.system.params.get("delta").copied().unwrap_or(0.5);
            BasinBoundary {
                polylines: vec![trace_separatrix_duffing(friction, &spec)?],
            }
        }
        BoundaryMethod::Bisection => estimate_boundary_bisection(&spec, &catalog, &cfg.bisection_grid().expect("validated"))?,
        BoundaryMethod::RepellingCycles => estimate_boundary_repelling_cycles(&spec, &catalog, &cfg.bisection_grid().expect("validated"))?,
    };
    if catalog.len() > 1 && boundary.is_empty() {
        return Err(Error::Config {
            key: "boundary.method".into(),
            msg: format!("{} attractors found; a boundary estimate is required", catalog.len()),
        });
    }
    let landscape = Landscape::new(spec.clone(), catalog.clone(), boundary.clone())?;
    let inward = spec.inward_fraction(4096);
    let mut warnings = vec![];
    if inward < 1.0 {
        warnings.push(format!("the field points inward on {:.1}% of the box surface", 100.0 * inward));
    }
    let art = CatalogArtifact {
        system: spec.field.name(),
        dim: spec.dim,
        radius: spec.ball.radius,
        center: spec.ball.center.clone(),
        periods: catalog
            .entries
            .iter()
            .map(|e| match e {
                Attractor::Cycle { period, .. } => Some(*period),
                Attractor::Point { .. } => None,
            })
            .collect(),
        attractors: catalog,
        boundary,
        delta0: landscape.delta0,
        gamma: landscape.gamma,
        inward_fraction: inward,
        warnings,
    };
    write_json(&out.join("catalog.json"), &art)?;
    Ok(art)
}

/// Rebuild the landscape from catalog.json with the tube cap the widths need.
pub fn load_landscape(cfg: &ExperimentConfig, out: &Path) -> Result<Landscape> {
    let art: CatalogArtifact = read_json(&out.join("catalog.json"))?;
    let spec = cfg.system_spec()?;
    if art.system != spec.field.name() || art.dim != spec.dim {
        return Err(Error::MissingArtifact(format!(
            "catalog.json describes `{}`, the config `{}`; rerun attractors",
            art.system,
            spec.field.name()
        )));
    }
    let mut l = Landscape::new(spec, art.attractors, art.boundary)?;
    let cap = cfg.boundary.tube_cap.unwrap_or(cfg.widths().entry());
    let w = cfg.widths();
    if cap < w.entry() {
        return Err(Error::Config {
            key: "boundary.tube_cap".into(),
            msg: format!("must be at least delta + delta_prime = {}", w.entry()),
        });
    }
    if w.entry() >= l.delta0 || cap > l.delta0 {
        return Err(Error::Config {
            key: "sim.delta".into(),
            msg: format!("delta + delta_prime and the tube cap must stay below delta0 = {}", l.delta0),
        });
    }
    l.set_tube_cap(cap)?;
    Ok(l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub delta: f64,
    pub delta_prime: f64,
    pub rates: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    pub cemetery: Vec<f64>,
    pub cemetery_se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorValidity {
    pub offdiagonal_nonnegative: bool,
    /// `|Σ_j Q(ι,j) + cemetery(ι)| / σ(ι,ι)` per row.
    pub row_sum_sigmas: Vec<f64>,
    pub chapman_kolmogorov_error: f64,
    pub pass: bool,
}

pub fn generator_validity(g: &GeneratorMatrix) -> Result<GeneratorValidity> {
    let k = g.kappa;
    let offdiagonal_nonnegative = (0..k).all(|i| (0..k).all(|j| i == j || g.rates[i][j] >= 0.0) && g.cemetery[i] >= 0.0);
    let row_sum_sigmas: Vec<f64> = (0..k)
        .map(|i| {
            let s = g.rates[i].iter().sum::<f64>() + g.cemetery[i];
            if s == 0.0 {
                0.0
            } else {
                s.abs() / g.se[i][i]
            }
        })
        .collect();
    let chain = Ctmc::new(g.clone())?;
    let mut ck: f64 = 0.0;
    for s in [0.1, 1.0, 10.0] {
        for t in [0.1, 1.0, 10.0] {
            let d = chain.transition(s + t) - chain.transition(s) * chain.transition(t);
            ck = ck.max(d.abs().max());
        }
    }
    Ok(GeneratorValidity {
        offdiagonal_nonnegative,
        pass: offdiagonal_nonnegative && row_sum_sigmas.iter().all(|&s| s <= 1.0) && ck <= 1e-10,
        row_sum_sigmas,
        chapman_kolmogorov_error: ck,
    })
}

/// Rate symmetry of a two-well system: `Q(0,1)` against `Q(1,0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub comparison: Comparison,
    /// `α/(2π) ∫_{E^±} ‖z − 𝔰_±‖^{−2−α} dz` by Monte Carlo, per attractor.
    pub shifted_kernel: Vec<(f64, f64)>,
}

/// Which cycle is inner and whether `Q^o < Q^i` with 3σ separation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub inner: usize,
    pub outer: usize,
    pub q_inner: f64,
    pub q_inner_se: f64,
    pub q_outer: f64,
    pub q_outer_se: f64,
    pub separation_sigmas: f64,
    pub pass: bool,
    pub quadrature: Option<crate::rates::RayQuadrature>,
}

pub fn ordering_report(l: &Landscape, g: &GeneratorMatrix) -> OrderingReport {
    let d: Vec<f64> = l.catalog.entries.iter().map(|e| e.diameter()).collect();
    let inner = if d[0] <= d[1] { 0 } else { 1 };
    let outer = 1 - inner;
    let (qi, si) = (g.rates[inner][outer], g.se[inner][outer]);
    let (qo, so) = (g.rates[outer][inner], g.se[outer][inner]);
    let sep = (qi - qo) / si.hypot(so);
    OrderingReport {
        inner,
        outer,
        q_inner: qi,
        q_inner_se: si,
        q_outer: qo,
        q_outer_se: so,
        separation_sigmas: sep,
        pass: qo < qi && sep >= 3.0,
        quadrature: None,
    }
}

pub fn cmd_rates(cfg: &ExperimentConfig, out: &Path) -> Result<GeneratorMatrix> {
    let l = load_landscape(cfg, out)?;
    let coupling = cfg.coupling_spec()?;
    let noise = cfg.noise_spec()?;
    let ms = ergodic_measures(&l, cfg.system.ergodic_samples);
    let w = cfg.widths();
    validate_cutoff(&l, &coupling, &ms, &noise, w.delta)?;
    let half = Widths {
        delta: w.delta / 2.0,
        delta_prime: w.delta_prime / 2.0,
    };
    log::info!("sampling the generator");
    let mut gens = build_generators(&l, &coupling, &noise, &ms, &[w, half, Widths::PLAIN], cfg.budgets(), cfg.sim.seed)?;
    if cfg.budgets.prelimit_samples > 0 {
        for &eps in &cfg.sim.epsilons {
            for (iota, m) in ms.iter().enumerate() {
                let r = prelimit_exit_ratio(&l, &coupling, &noise, m, iota, w, eps, cfg.budgets.prelimit_samples, cfg.sim.seed)?;
                gens[0].prelimit.push(r);
            }
        }
    }
    let limit = gens.pop().expect("three generators");
    let table: Vec<DeltaRow> = gens
        .iter()
        .chain(std::iter::once(&limit))
        .map(|g| DeltaRow {
            delta: g.widths.delta,
            delta_prime: g.widths.delta_prime,
            rates: g.rates.clone(),
            se: g.se.clone(),
            cemetery: g.cemetery.clone(),
            cemetery_se: g.cemetery_se.clone(),
        })
        .collect();
    let g = gens.swap_remove(0);
    write_json(&out.join("generator.json"), &g)?;
    write_json(&out.join("generator_limit.json"), &limit)?;
    if wants_csv(cfg) {
        write_text(&out.join("generator.csv"), &g.to_csv())?;
        write_text(&out.join("generator_limit.csv"), &limit.to_csv())?;
    }
    write_json(&out.join("reports/delta_table.json"), &table)?;
    write_json(&out.join("reports/generator_validity.json"), &generator_validity(&g)?)?;
    if cfg.system.name == "duffing" && l.kappa() == 2 {
        let budget = cfg.budgets.y_samples * cfg.budgets.z_samples;
        let shifted = (0..2)
            .map(|i| {
                let y = l.catalog.entries[i].base_point();
                shifted_kernel_rate(&l, &coupling, &noise, y, y, &Target::Basin(1 - i), budget, cfg.sim.seed)
            })
            .collect::<Result<Vec<_>>>()?;
        let rep = SymmetryReport {
            comparison: Comparison::new("Q(0,1) vs Q(1,0)", g.rates[0][1], g.se[0][1], g.rates[1][0], g.se[1][0], 3.0),
            shifted_kernel: shifted,
        };
        write_json(&out.join("reports/symmetry.json"), &rep)?;
    }
    if cfg.system.name == "goldbeter" && l.kappa() == 2 {
        let mut rep = ordering_report(&l, &g);
        if cfg.noise.shape == "pareto" && cfg.coupling.phi == "substrate" {
            rep.quadrature = Some(goldbeter_rates_quadrature(&l, noise.alpha, noise.cutoff, 256)?);
        }
        write_json(&out.join("reports/ordering.json"), &rep)?;
    }
    Ok(g)
}

/// One line of exits.jsonl.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitLine {
    pub epsilon: f64,
    #[serde(flatten)]
    pub record: ExitRecord,
}

fn sources(cfg: &ExperimentConfig, kappa: usize) -> Result<Vec<usize>> {
    let s = cfg.sim.sources.clone().unwrap_or_else(|| (0..kappa).collect());
    if s.iter().any(|&i| i >= kappa) {
        return Err(Error::Config {
            key: "sim.sources".into(),
            msg: format!("basin indices must be below {kappa}"),
        });
    }
    Ok(s)
}

pub fn cmd_exit_times(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<ExitLawReport>> {
    let l = load_landscape(cfg, out)?;
    let g: GeneratorMatrix = read_json(&out.join("generator.json"))?;
    let coupling = cfg.coupling_spec()?;
    let noise = cfg.noise_spec()?;
    let mut lines = vec![];
    let mut reports = vec![];
    for &eps in &cfg.sim.epsilons {
        for iota in sources(cfg, l.kappa())? {
            let q = g.exit_rate(iota);
            if !(q > 0.0) {
                return Err(Error::domain(format!("basin {iota} has no exit rate; nothing to simulate")));
            }
            let start = l.catalog.entries[iota].base_point().to_vec();
            let mut sc = cfg.sim_config(eps, 1.0);
            sc.horizon = exit_cap(&noise, &sc, q);
            log::info!("exits from basin {iota} at eps = {eps}");
            let recs = exit_times(&l, &coupling, &noise, &sc, &start, iota, q, cfg.sim.replicas as u64)?;
            match exit_law_report(&recs, &noise, eps, &g) {
                Ok(r) => reports.push(r),
                Err(Error::InsufficientSamples { got, need }) => {
                    log::warn!("basin {iota}, eps {eps}: only {got} uncensored exits (need {need})");
                }
                Err(e) => return Err(e),
            }
            lines.extend(recs.into_iter().map(|record| ExitLine { epsilon: eps, record }));
        }
    }
    write_jsonl(&out.join("exits.jsonl"), &lines)?;
    write_json(&out.join("reports/exit_law.json"), &reports)?;
    let mut scaling: Vec<ScalingReport> = vec![];
    for a in &reports {
        for b in &reports {
            if a.source == b.source && (b.epsilon * 2.0 - a.epsilon).abs() <= 1e-12 * a.epsilon {
                scaling.push(eps_scaling_report(a, b, noise.alpha)?);
            }
        }
    }
    write_json(&out.join("reports/eps_scaling.json"), &scaling)?;
    Ok(reports)
}

/// Mean occupation fractions of the switching runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationReport {
    pub epsilon: f64,
    pub horizon: f64,
    pub fractions: Vec<f64>,
    pub se: Vec<f64>,
    pub switches_mean: f64,
    pub absorbed: usize,
}

pub fn cmd_metastability(cfg: &ExperimentConfig, out: &Path) -> Result<(Statement1Report, Statement2Report)> {
    let l = load_landscape(cfg, out)?;
    let limit: GeneratorMatrix = read_json(&out.join("generator_limit.json"))?;
    let coupling = cfg.coupling_spec()?;
    let noise = cfg.noise_spec()?;
    let v = &cfg.verify;
    if v.start >= l.kappa() || v.basin.is_some_and(|b| b >= l.kappa()) {
        return Err(Error::Config {
            key: "verify.start".into(),
            msg: format!("basin indices must be below {}", l.kappa()),
        });
    }
    if v.observable >= l.system.dim {
        return Err(Error::Config {
            key: "verify.observable".into(),
            msg: format!("coordinate index must be below {}", l.system.dim),
        });
    }
    let eps = cfg.smallest_epsilon();
    let h = noise.time_scale(eps);
    let horizon = cfg.sim.horizon / h;
    let sc = cfg.sim_config(eps, horizon);
    let start = l.catalog.entries[v.start].base_point().to_vec();
    log::info!("switching runs at eps = {eps}");
    let paths: Vec<SwitchingPath> = (0..cfg.sim.replicas as u64)
        .into_par_iter()
        .map(|r| metastability_run(&l, &coupling, &noise, &sc, &start, horizon, r))
        .collect::<Result<_>>()?;
    write_jsonl(&out.join("switching.jsonl"), &paths)?;
    let k = l.kappa();
    let occ: Vec<Vec<f64>> = paths.iter().map(|p| p.occupation(k).iter().map(|t| t / horizon).collect()).collect();
    let col = |j: usize| -> crate::stats::Moments { occ.iter().map(|o| o[j]).collect() };
    let rep = OccupationReport {
        epsilon: eps,
        horizon,
        fractions: (0..k).map(|j| col(j).mean).collect(),
        se: (0..k).map(|j| col(j).std_error()).collect(),
        switches_mean: paths.iter().map(|p| (p.times.len() - 1) as f64).sum::<f64>() / paths.len() as f64,
        absorbed: paths.iter().filter(|p| p.states.last() == Some(&None)).count(),
    };
    write_json(&out.join("reports/occupation.json"), &rep)?;
    let chain = Ctmc::new(limit)?;
    let n = v.replicas.unwrap_or(cfg.sim.replicas);
    log::info!("finite-dimensional comparison over {n} paths");
    let s1 = verify_statement_1(&l, &coupling, &noise, &sc, &chain, &start, &v.times, n)?;
    write_json(&out.join("reports/statement1.json"), &s1)?;
    let ms = ergodic_measures(&l, cfg.system.ergodic_samples);
    let coord = v.observable;
    let s2 = verify_statement_2(
        &l,
        &coupling,
        &noise,
        &sc,
        &chain,
        &ms,
        &start,
        |x: &[f64]| x[coord],
        v.s,
        v.t,
        v.basin.unwrap_or(v.start),
        cfg.blur(&noise, eps),
        n,
    )?;
    write_json(&out.join("reports/statement2.json"), &s2)?;
    Ok((s1, s2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// Collect pass flags from every report present under `reports/`.
pub fn cmd_verify(out: &Path) -> Result<VerifySummary> {
    let dir = out.join("reports");
    let mut checks = vec![];
    let mut push = |name: String, pass: bool| checks.push(Check { name, pass });
    let opt = |f: &str| -> Option<PathBuf> { Some(dir.join(f)).filter(|p| p.exists()) };
    if let Some(p) = opt("generator_validity.json") {
        let r: GeneratorValidity = read_json(&p)?;
        push("generator validity".into(), r.pass);
    }
    if let Some(p) = opt("symmetry.json") {
        let r: SymmetryReport = read_json(&p)?;
        push("rate symmetry".into(), r.comparison.pass);
    }
    if let Some(p) = opt("ordering.json") {
        let r: OrderingReport = read_json(&p)?;
        push("rate ordering".into(), r.pass);
    }
    if let Some(p) = opt("exit_law.json") {
        let rs: Vec<ExitLawReport> = read_json(&p)?;
        for r in rs {
            push(format!("exit law basin {} eps {}", r.source, r.epsilon), r.pass);
        }
    }
    if let Some(p) = opt("eps_scaling.json") {
        let rs: Vec<ScalingReport> = read_json(&p)?;
        for r in rs {
            push(format!("eps scaling basin {} at {}", r.source, r.epsilon), r.pass);
        }
    }
    if let Some(p) = opt("statement1.json") {
        let r: Statement1Report = read_json(&p)?;
        push("finite-dimensional distributions".into(), r.pass);
    }
    if let Some(p) = opt("statement2.json") {
        let r: Statement2Report = read_json(&p)?;
        push("blurred observable".into(), r.comparison.pass);
    }
    if checks.is_empty() {
        return Err(Error::MissingArtifact(format!("no reports under {}", dir.display())));
    }
    let summary = VerifySummary {
        pass: checks.iter().all(|c| c.pass),
        checks,
    };
    write_json(&dir.join("verify.json"), &summary)?;
    for c in &summary.checks {
        println!("{} {}", if c.pass { "PASS" } else { "FAIL" }, c.name);
    }
    Ok(summary)
}

pub const PHASE_HEADER: &str = "kind,id,index,u1,u2";
pub const TRACE_HEADER: &str = "t,u1,u2,basin";
pub const EXIT_HIST_HEADER: &str = "epsilon,source,rescaled_time";
pub const GENERATOR_HEADER: &str = "from,to,rate,se";

/// Phase-portrait rows for attractors and boundary polylines (planar systems).
pub fn phase_csv(art: &CatalogArtifact) -> String {
    let mut s = format!("{PHASE_HEADER}\n");
    let mut rows = |kind: &str, id: usize, pl: &[Vec<f64>]| {
        for (i, p) in pl.iter().enumerate() {
            let _ = writeln!(s, "{kind},{id},{i},{},{}", p[0], p.get(1).copied().unwrap_or(0.0));
        }
    };
    for (id, a) in art.attractors.entries.iter().enumerate() {
        rows("attractor", id, &a.polyline());
    }
    for (id, pl) in art.boundary.polylines.iter().enumerate() {
        rows("boundary", id, pl);
    }
    s
}

/// Sampled path with the regime of the switching process at each time.
pub fn trace_csv(times: &[f64], states: &[Vec<f64>], regime: impl Fn(f64) -> Option<usize>) -> String {
    let mut s = format!("{TRACE_HEADER}\n");
    for (t, x) in times.iter().zip(states) {
        let b = regime(*t).map(|b| b.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{t},{},{},{b}", x[0], x.get(1).copied().unwrap_or(0.0));
    }
    s
}

pub fn exit_hist_csv(lines: &[ExitLine], g: &GeneratorMatrix, noise: &crate::noise::HeavyTailSpec) -> String {
    let mut s = format!("{EXIT_HIST_HEADER}\n");
    for l in lines.iter().filter(|l| !l.record.censored) {
        let scale = noise.time_scale(l.epsilon) * g.exit_rate(l.record.source);
        let _ = writeln!(s, "{},{},{}", l.epsilon, l.record.source, l.record.time * scale);
    }
    s
}

pub fn cmd_report_data(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let art: CatalogArtifact = read_json(&out.join("catalog.json"))?;
    let plots = out.join("plots");
    write_text(&plots.join("phase.csv"), &phase_csv(&art))?;
    let noise = cfg.noise_spec()?;
    let generator: Option<GeneratorMatrix> = read_json(&out.join("generator.json")).ok();
    let exit_lines: Vec<ExitLine> = read_jsonl(&out.join("exits.jsonl")).unwrap_or_default();
    let hist = match &generator {
        Some(g) => exit_hist_csv(&exit_lines, g, &noise),
        None => format!("{EXIT_HIST_HEADER}\n"),
    };
    write_text(&plots.join("exit_hist.csv"), &hist)?;
    let gen_csv = generator.as_ref().map(|g| g.to_csv()).unwrap_or_else(|| format!("{GENERATOR_HEADER}\n"));
    write_text(&plots.join("generator.csv"), &gen_csv)?;
    let r = &cfg.report;
    if r.horizon == 0.0 {
        write_text(&plots.join("trace.csv"), &format!("{TRACE_HEADER}\n"))?;
        return Ok(());
    }
    let l = load_landscape(cfg, out)?;
    if r.start >= l.kappa() {
        return Err(Error::Config {
            key: "report.start".into(),
            msg: format!("basin index must be below {}", l.kappa()),
        });
    }
    let coupling = cfg.coupling_spec()?;
    let eps = r.epsilon.unwrap_or_else(|| cfg.smallest_epsilon());
    let mut sc = cfg.sim_config(eps, r.horizon);
    sc.sample_dt = r.sample_dt;
    let start = l.catalog.entries[r.start].base_point().to_vec();
    let path = simulate_path(&l, &coupling, &noise, &sc, &start, r.replica)?;
    // same replica, same jump stream: the switching run labels the path
    let sw = metastability_run(&l, &coupling, &noise, &sc, &start, r.horizon, r.replica)?;
    write_text(&plots.join("trace.csv"), &trace_csv(&path.times, &path.states, |t| sw.state_at(t)))?;
    write_jsonl(&plots.join("trace_switching.jsonl"), std::slice::from_ref(&sw))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_trace_is_header_only() {
        assert_eq!(trace_csv(&[], &[], |_| None), "t,u1,u2,basin\n");
    }

    #[test]
    fn trace_rows_follow_schema() {
        let s = trace_csv(&[0.0, 0.5], &[vec![1.0, 2.0], vec![0.25, -1.0]], |t| (t < 0.3).then_some(1));
        let rows: Vec<&str> = s.lines().collect();
        assert_eq!(rows, vec!["t,u1,u2,basin", "0,1,2,1", "0.5,0.25,-1,"]);
    }

    #[test]
    fn floats_round_trip_in_csv() {
        let x = 0.1 + 0.2;
        let s = trace_csv(&[x], &[vec![x, 1.0 / 3.0]], |_| Some(0));
        let cols: Vec<f64> = s.lines().nth(1).unwrap().split(',').take(3).map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols, vec![x, x, 1.0 / 3.0]);
    }

    #[test]
    fn phase_rows_cover_attractors_and_boundary() {
        let art = CatalogArtifact {
            system: "x".into(),
            dim: 2,
            radius: 1.0,
            center: vec![0.0, 0.0],
            attractors: AttractorCatalog {
                entries: vec![
                    Attractor::Point { state: vec![1.0, 0.0] },
                    Attractor::Cycle {
                        samples: vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, -1.0]],
                        period: 3.0,
                    },
                ],
                unclassified: vec![],
            },
            periods: vec![None, Some(3.0)],
            boundary: BasinBoundary {
                polylines: vec![vec![vec![0.5, 0.5], vec![0.6, 0.6]]],
            },
            delta0: 0.1,
            gamma: 0.01,
            inward_fraction: 1.0,
            warnings: vec![],
        };
        let s = phase_csv(&art);
        assert_eq!(s.lines().next(), Some(PHASE_HEADER));
        // point, closed cycle of three, two boundary points
        assert_eq!(s.lines().count(), 1 + 1 + 4 + 2);
        assert!(s.lines().any(|l| l == "boundary,0,1,0.6,0.6"));
    }

    #[test]
    fn exit_hist_skips_censored() {
        let g = GeneratorMatrix::from_rates(vec![vec![0.0, 2.0], vec![1.0, 0.0]], vec![0.0, 0.0]).unwrap();
        let noise = crate::noise::HeavyTailSpec::isotropic(1.0, 2, 0.5).unwrap();
        let rec = |t: f64, censored: bool| ExitLine {
            epsilon: 0.5,
            record: ExitRecord {
                replica: 0,
                source: 0,
                time: t,
                state: vec![0.0, 0.0],
                target: Some(1),
                basin: Some(1),
                censored,
                jumps: 1,
            },
        };
        let s = exit_hist_csv(&[rec(3.0, false), rec(9.0, true)], &g, &noise);
        assert_eq!(s, "epsilon,source,rescaled_time\n0.5,0,3\n");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config { key: "a".into(), msg: "b".into() }), 2);
        assert_eq!(exit_code(&Error::MissingArtifact("x".into())), 3);
        assert_eq!(exit_code(&Error::Blowup { time: 1.0 }), 4);
        assert_eq!(exit_code(&Error::InsufficientSamples { got: 1, need: 50 }), 5);
    }
}
