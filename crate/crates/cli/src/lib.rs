//! Command-line front end: config ingestion, suite orchestration and
//! deterministic JSON/CSV report emission.
//!
//! Exit codes: 0 all checks passed, 1 an invariant failed, 2 usage or
//! config error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use splab_core::expr;
use splab_core::fock::{compress_pair, Fock, FockOperator};
use splab_core::ideal;
use splab_core::linalg::{C64, CMatrix};
use splab_core::morita;
use splab_core::reps;
use splab_core::systems::{Family, SystemDescription};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "splab", version, about = "subproduct-system laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    /// Override the pass tolerance for residual checks.
    #[arg(long)]
    tol: Option<f64>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Construct the system and validate its axioms.
    Build {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the suites requested by the config.
    Verify {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Decay scan of an operator expression.
    Scan {
        #[arg(long)]
        op: String,
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Quotient-norm estimator of an operator expression.
    Cpnorm {
        #[arg(long)]
        op: String,
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compare the estimator against the boundary-sphere symbol sup.
    Sphere {
        /// Coefficients a,b,g of a*|z1|^2 + b*|z2|^2 + g (d-1 alphas then gamma).
        #[arg(long)]
        coeffs: String,
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Validate and classify a representation from a JSON file.
    Rep {
        config: PathBuf,
        rep: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Wold decomposition of a representation from a JSON file.
    Wold {
        config: PathBuf,
        rep: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Morita linking-system checks against the config's Y system.
    Morita {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Debug, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct MoritaConfig {
    pub k: usize,
    #[serde(default)]
    pub samples: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemDescription,
    #[serde(default)]
    pub suites: Option<Vec<String>>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub tol_ideal: Option<f64>,
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default)]
    pub morita: Option<MoritaConfig>,
}

/// Flat config accepted by `splab morita`:
/// `{"k", "system", "N", "samples", "seed"}`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoritaFileConfig {
    pub k: usize,
    pub system: SystemDescription,
    #[serde(rename = "N", default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl MoritaFileConfig {
    fn into_run_config(self) -> RunConfig {
        let mut system = self.system;
        if system.n.is_none() {
            system.n = self.n;
        }
        RunConfig {
            system,
            suites: None,
            seed: self.seed,
            tol: None,
            tol_ideal: None,
            out: None,
            morita: Some(MoritaConfig { k: self.k, samples: self.samples }),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepFile {
    #[serde(default)]
    pub system: Option<SystemDescription>,
    pub dims: Vec<usize>,
    #[serde(rename = "T1")]
    pub t1: BTreeMap<String, Vec<Vec<[f64; 2]>>>,
}

/// Errors that map to exit code 2.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn cfg_err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Round to 15 significant digits so reports have a fixed float format.
fn sig15(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.14e}").parse().unwrap_or(x)
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if n.is_f64() {
                    *v = json!(sig15(f));
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

struct Session {
    config: RunConfig,
    fock: Fock,
    seed: u64,
    tol: f64,
    tol_ideal: f64,
}

fn session_from(config: RunConfig, common: &Common) -> Result<Session, ConfigError> {
    let system = config
        .system
        .build()
        .map_err(|e| ConfigError(format!("system construction failed: {e}")))?;
    let seed = common.seed.or(config.seed).unwrap_or(0);
    let tol = common.tol.or(config.tol).unwrap_or(1e-10);
    let tol_ideal = config.tol_ideal.unwrap_or(ideal::TOL_IDEAL);
    Ok(Session { config, fock: Fock::new(Arc::new(system)), seed, tol, tol_ideal })
}

fn load_config(path: &Path, common: &Common) -> Result<Session, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let config: RunConfig =
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("bad config: {e}")))?;
    session_from(config, common)
}

/// `morita` accepts either the flat `{"k", "system", ...}` schema or a full
/// run config with a `morita` section.
fn load_morita_config(path: &Path, common: &Common) -> Result<Session, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    if let Ok(flat) = serde_json::from_str::<MoritaFileConfig>(&text) {
        return session_from(flat.into_run_config(), common);
    }
    let config: RunConfig =
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("bad config: {e}")))?;
    session_from(config, common)
}

fn decay_to_json(op: &str, r: &ideal::DecayReport) -> Value {
    json!({
        "op": op,
        "norms": r.norms,
        "tails": r.tails,
        "verdict": r.verdict,
        "rate": r.rate,
    })
}

fn suite_axioms(s: &Session) -> (Value, bool) {
    let v = s.fock.system.validate(s.tol);
    let pass = v.pass();
    (serde_json::to_value(&v).unwrap(), pass)
}

fn suite_shifts(s: &Session) -> (Value, bool) {
    let sys = &s.fock.system;
    let fock = &s.fock;
    let shifts: Vec<Vec<FockOperator>> = (0..=sys.n_max)
        .map(|n| (0..sys.fiber_dim(n)).map(|k| fock.shift_basis(n, k).unwrap()).collect())
        .collect();
    let mut semigroup = 0.0_f64;
    for n in 1..sys.n_max {
        for m in 1..=(sys.n_max - n) {
            for zi in 0..sys.fiber_dim(n) {
                for hi in 0..sys.fiber_dim(m) {
                    let z = fock.basis_vector(n, zi);
                    let h = fock.basis_vector(m, hi);
                    let lhs = &shifts[n][zi] * &shifts[m][hi];
                    let rhs = fock.shift(n + m, &compress_pair(sys, n, m, &z, &h)).unwrap();
                    semigroup = semigroup.max(lhs.op.residual_on_exact(&rhs.op));
                }
            }
        }
    }
    let mut adjoint = 0.0_f64;
    for n in 1..=sys.n_max {
        for kappa in 0..sys.fiber_dim(n) {
            let v = fock.basis_vector(n, kappa);
            adjoint = adjoint.max(fock.adjoint_action_check(n, &v).unwrap());
        }
    }
    let pass = semigroup <= s.tol && adjoint <= s.tol;
    (
        json!({"semigroup_residual": semigroup, "adjoint_residual": adjoint, "pass": pass}),
        pass,
    )
}

fn suite_gauge(s: &Session) -> (Value, bool) {
    let sys = &s.fock.system;
    let fock = &s.fock;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0x6761756765);
    let lambda = C64::from_polar(1.0, 0.9817);
    let mut gauge = 0.0_f64;
    for kappa in 0..sys.fiber_dim(1) {
        let op = fock.shift_basis(1, kappa).unwrap();
        let g = op.gauge_conjugate(lambda).unwrap();
        gauge = gauge.max(g.residual(&op.scale(lambda)));
    }
    let mut band = 0.0_f64;
    let mut fejer = 0.0_f64;
    for _ in 0..20 {
        let e = expr::random_expr(&mut rng, sys, 3);
        let op = match expr::eval_fock(&e, fock) {
            Ok(op) => op,
            Err(_) => continue,
        };
        let mut sum = fock.zero_op();
        for k in -(sys.n_max as i64)..=(sys.n_max as i64) {
            sum = &sum + &op.spectral_component(k);
        }
        band = band.max(sum.residual(&op));
        let order = rng.gen_range(0..=5usize);
        fejer = fejer.max(op.fejer(order).op_norm() - op.op_norm());
    }
    let pass = gauge <= 1e-12 && band == 0.0 && fejer <= 1e-10;
    (
        json!({"monomial_scaling_residual": gauge, "band_partition_residual": band, "fejer_excess": fejer, "pass": pass}),
        pass,
    )
}

fn canonical_ideal_ops(s: &Session) -> Vec<String> {
    let sys = &s.fock.system;
    let mut ops = Vec::new();
    if sys.q == 1 {
        if sys.fiber_dim(1) >= 2 {
            ops.push("S1[e1]*S1[e2]~-S1[e2]~*S1[e1]".to_string());
        } else {
            ops.push("S1[e1]*S1[e1]~-S1[e1]~*S1[e1]".to_string());
        }
    } else {
        let label = &sys.fibers[1].basis[0].label;
        ops.push(format!("S1[{label}]*S1[{label}]~-S1[{label}]~*S1[{label}]"));
    }
    ops.push("I".to_string());
    ops.push(format!("Q{}", sys.n_max.min(3)));
    ops
}

fn suite_ideal(s: &Session) -> Result<(Value, bool), ConfigError> {
    let fock = &s.fock;
    let n_scan = fock.n_max().saturating_sub(1).max(1);
    let mut scans = Vec::new();
    let mut pass = true;
    let mut in_ideal_samples = Vec::new();
    for text in canonical_ideal_ops(s) {
        let e = expr::parse(&text).map_err(|e| ConfigError(e.to_string()))?;
        let op = expr::eval_fock(&e, fock).map_err(|e| ConfigError(e.to_string()))?;
        let r = ideal::decay_scan(&op, n_scan, s.tol_ideal)
            .map_err(|e| ConfigError(e.to_string()))?;
        if text == "I" {
            if r.verdict != ideal::Verdict::NotInIdeal {
                pass = false;
            }
        } else if r.verdict == ideal::Verdict::InIdeal {
            in_ideal_samples.push(op.clone());
        }
        scans.push(decay_to_json(&text, &r));
    }
    let qn = ideal::generated_by_qn_check(fock, &in_ideal_samples)
        .map_err(|e| ConfigError(e.to_string()))?;
    let rec_worst = qn
        .reconstruction
        .iter()
        .map(|&(_, r)| r)
        .fold(0.0_f64, f64::max);
    if rec_worst > 1e-10 {
        pass = false;
    }
    Ok((
        json!({"scans": scans, "qn_ideal": qn, "reconstruction_worst": rec_worst, "pass": pass}),
        pass,
    ))
}

fn suite_sphere(s: &Session) -> Result<(Value, bool), ConfigError> {
    let sys = &s.fock.system;
    if sys.family != Family::Symmetric {
        return cfg_err("the sphere suite needs a symmetric system");
    }
    let d = sys.fiber_dim(1);
    let mut rows = Vec::new();
    let mut pass = true;
    let mut triples: Vec<(Vec<f64>, f64)> = vec![];
    let mut base = vec![0.0; d];
    base[0] = 1.0;
    triples.push((base.clone(), 0.0));
    if d >= 2 {
        let mut pm = vec![0.0; d];
        pm[0] = 1.0;
        pm[1] = -1.0;
        triples.push((pm, 0.0));
    }
    triples.push((vec![1.0; d], -1.0));
    for (alphas, gamma) in triples {
        let r = ideal::sphere_compare(&s.fock, &alphas, gamma, 200, 1000, s.seed)
            .map_err(|e| ConfigError(e.to_string()))?;
        if r.gap > 0.1 {
            pass = false;
        }
        rows.push(json!({
            "alphas": alphas,
            "gamma": gamma,
            "estimate": r.estimate.value,
            "n_star": r.estimate.n_star,
            "sphere_sup": r.sphere_sup,
            "gap": r.gap,
        }));
    }
    Ok((json!({"comparisons": rows, "pass": pass}), pass))
}

fn suite_reps(s: &Session) -> Result<(Value, bool), ConfigError> {
    let sys = &s.fock.system;
    let mut out = serde_json::Map::new();
    let mut pass = true;

    let frep = reps::fock_rep(&s.fock);
    let horizon = sys.n_max.saturating_sub(1).max(1);
    let fc = reps::classify(&frep, horizon, s.tol);
    if !fc.pure || fc.fully_coisometric {
        pass = false;
    }
    out.insert("fock_rep".into(), serde_json::to_value(&fc).unwrap());

    if sys.family == Family::Symmetric {
        let d = sys.fiber_dim(1);
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0x726570);
        let mut evals = Vec::new();
        for _ in 0..3 {
            let mut z: Vec<C64> = (0..d)
                .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let norm = z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            z.iter_mut().for_each(|c| *c /= C64::new(norm, 0.0));
            // Construction uses a fixed tolerance; --tol only moves the
            // pass thresholds below.
            let rep = reps::evaluation_rep(sys.clone(), &z, 1e-8)
                .map_err(|e| ConfigError(e.to_string()))?;
            let cls = reps::classify(&rep, horizon, s.tol);
            if !cls.fully_coisometric || !cls.essential {
                pass = false;
            }
            let mut samples = vec![];
            if d >= 2 {
                samples.push(expr::parse("S1[e1]*S1[e2]~-S1[e2]~*S1[e1]").unwrap());
            }
            let mut family = String::new();
            for i in 1..=d {
                family.push_str(&format!("S1[e{i}]*S1[e{i}]~+"));
            }
            family.push_str("(-1+0i)*I");
            samples.push(expr::parse(&family).unwrap());
            let kc = reps::kernel_ideal_check(&rep, &samples)
                .map_err(|e| ConfigError(e.to_string()))?;
            if kc.max_norm > 1e-9 {
                pass = false;
            }
            evals.push(json!({
                "z": z.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>(),
                "classification": cls,
                "kernel_check": kc,
            }));
        }
        out.insert("evaluation_reps".into(), Value::Array(evals));
    }
    out.insert("pass".into(), json!(pass));
    Ok((Value::Object(out), pass))
}

fn suite_wold(s: &Session) -> Result<(Value, bool), ConfigError> {
    let frep = reps::fock_rep(&s.fock);
    let horizon = s.fock.n_max().saturating_sub(1).max(1);
    let split = match reps::wold_decompose(&frep, horizon, s.tol) {
        Ok(split) => split,
        Err(e) => {
            // A failed hypothesis is an invariant failure, not a bad config.
            return Ok((json!({"error": e.to_string(), "pass": false}), false));
        }
    };
    let pass = split.induced.ncols() == frep.dim()
        && split.coisometric.ncols() == 0
        && split.residuals.invariance <= s.tol.max(1e-9);
    Ok((
        json!({
            "induced_dim": split.induced.ncols(),
            "coisometric_dim": split.coisometric.ncols(),
            "residuals": split.residuals,
            "pass": pass,
        }),
        pass,
    ))
}

fn suite_morita(s: &Session) -> Result<(Value, bool), ConfigError> {
    let Some(mcfg) = &s.config.morita else {
        return cfg_err("the morita suite needs a {\"k\", \"samples\"} config section");
    };
    if s.fock.system.q != 1 {
        return cfg_err("the morita suite needs a scalar-base Y system");
    }
    let samples = mcfg.samples.unwrap_or(20);
    let ctx = morita::build_context(mcfg.k, s.fock.system.clone())
        .map_err(|e| ConfigError(e.to_string()))?;
    let validation = ctx.validate(s.seed);
    let comp = ctx
        .compression_check(samples, s.seed ^ 0x6d6f72)
        .map_err(|e| ConfigError(e.to_string()))?;
    let mut pass = validation.z_dims_ok
        && validation.z_subproduct_residual <= s.tol
        && comp.max_p_residual <= s.tol
        && comp.max_q_residual <= s.tol
        && comp.norm_preservation_gap <= s.tol;

    // Ideal transfer with the canonical in-ideal sample.
    let transfer = if s.fock.system.fiber_dim(1) >= 2 {
        let sop = {
            let e = expr::parse("S1[e1]*S1[e2]~-S1[e2]~*S1[e1]").unwrap();
            expr::eval_fock(&e, &ctx.fock_y).map_err(|e| ConfigError(e.to_string()))?
        };
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0x747261);
        let t1 = ctx.random_word(&mut rng, false, 2);
        let mut unit = vec![C64::new(0.0, 0.0); ctx.y_dim(1)];
        unit[0] = C64::new(1.0, 0.0);
        let t2 = morita::LinkingWord {
            factors: vec![morita::WordFactor {
                gen: morita::LinkingGenerator::upper(1, unit),
                adjoint: false,
            }],
        };
        let tr = ctx
            .ideal_transfer_check(&t1, &t2, &sop, 1e-10)
            .map_err(|e| ConfigError(e.to_string()))?;
        if tr.violations != 0 {
            pass = false;
        }
        Some(tr)
    } else {
        None
    };
    Ok((
        json!({
            "k": mcfg.k,
            "validation": validation,
            "compression": comp,
            "transfer": transfer,
            "pass": pass,
        }),
        pass,
    ))
}

const ALL_SUITES: [&str; 8] =
    ["axioms", "shifts", "gauge", "ideal", "sphere", "reps", "wold", "morita"];

fn default_suites(s: &Session) -> Vec<String> {
    let mut v = vec![
        "axioms".to_string(),
        "shifts".to_string(),
        "gauge".to_string(),
        "ideal".to_string(),
        "reps".to_string(),
        "wold".to_string(),
    ];
    if s.fock.system.family == Family::Symmetric {
        v.insert(4, "sphere".to_string());
    }
    if s.config.morita.is_some() && s.fock.system.q == 1 {
        v.push("morita".to_string());
    }
    v
}

fn run_suites(s: &Session) -> Result<(BTreeMap<String, Value>, bool), ConfigError> {
    let requested = s.config.suites.clone().unwrap_or_else(|| default_suites(s));
    let mut results = BTreeMap::new();
    let mut all_pass = true;
    for name in requested {
        if !ALL_SUITES.contains(&name.as_str()) {
            return cfg_err(format!("unknown suite '{name}'"));
        }
        let (value, pass) = match name.as_str() {
            "axioms" => suite_axioms(s),
            "shifts" => suite_shifts(s),
            "gauge" => suite_gauge(s),
            "ideal" => suite_ideal(s)?,
            "sphere" => suite_sphere(s)?,
            "reps" => suite_reps(s)?,
            "wold" => suite_wold(s)?,
            "morita" => suite_morita(s)?,
            _ => unreachable!(),
        };
        all_pass &= pass;
        results.insert(name, value);
    }
    Ok((results, all_pass))
}

fn parse_rep_file(s: &Session, path: &Path) -> Result<reps::CovariantRep, RepOutcome> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RepOutcome::Config(format!("cannot read {}: {e}", path.display())))?;
    let file: RepFile = serde_json::from_str(&text)
        .map_err(|e| RepOutcome::Config(format!("bad representation file: {e}")))?;
    if let Some(desc) = &file.system {
        if *desc != s.config.system {
            return Err(RepOutcome::Config(
                "representation file declares a different system".into(),
            ));
        }
    }
    let sys = &s.fock.system;
    let h_dim: usize = file.dims.iter().sum();
    let mut t1 = Vec::with_capacity(sys.fiber_dim(1));
    for bv in &sys.fibers[1].basis {
        let rows = file.t1.get(&bv.label).ok_or_else(|| {
            RepOutcome::Config(format!("missing generator for fiber label '{}'", bv.label))
        })?;
        if rows.len() != h_dim || rows.iter().any(|r| r.len() != h_dim) {
            return Err(RepOutcome::Config(format!(
                "generator '{}' must be {h_dim}x{h_dim}",
                bv.label
            )));
        }
        let m = CMatrix::from_fn(h_dim, h_dim, |i, j| C64::new(rows[i][j][0], rows[i][j][1]));
        t1.push(m);
    }
    reps::rep_from_generators(sys.clone(), file.dims, &t1, s.tol)
        .map_err(|e| RepOutcome::Invalid(e.to_string()))
}

enum RepOutcome {
    Config(String),
    Invalid(String),
}

fn emit(report: Value, common: &Common, csv: Option<String>) -> Result<(), ConfigError> {
    let mut report = report;
    round_floats(&mut report);
    let body = match common.format {
        Format::Json => serde_json::to_string_pretty(&report).unwrap() + "\n",
        Format::Csv => match csv {
            Some(table) => table,
            None => return cfg_err("csv output is not available for this command"),
        },
    };
    match &common.out {
        Some(path) => std::fs::write(path, body)
            .map_err(|e| ConfigError(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn wrap_report(command: &str, s: &Session, results: Value, pass: bool) -> Value {
    json!({
        "version": VERSION,
        "command": command,
        "config": s.config,
        "seed": s.seed,
        "tol": s.tol,
        "results": results,
        "pass": pass,
    })
}

fn decay_csv(op: &str, r: &ideal::DecayReport) -> String {
    let mut out = String::from("op,kind,n,value,exact\n");
    for &(n, v, e) in &r.norms {
        out.push_str(&format!("{op},q,{n},{},{e}\n", sig15(v)));
    }
    for &(n, v, e) in &r.tails {
        out.push_str(&format!("{op},tail,{n},{},{e}\n", sig15(v)));
    }
    out
}

fn dispatch(cmd: &Command) -> Result<i32, ConfigError> {
    match cmd {
        Command::Build { config, common } => {
            let s = load_config(config, common)?;
            let (value, pass) = suite_axioms(&s);
            let report = wrap_report("build", &s, json!({"axioms": value, "dims": s.fock.system.fiber_dims()}), pass);
            emit(report, common, None)?;
            Ok(if pass { 0 } else { 1 })
        }
        Command::Verify { config, common } => {
            let s = load_config(config, common)?;
            let (results, pass) = run_suites(&s)?;
            let report = wrap_report("verify", &s, serde_json::to_value(results).unwrap(), pass);
            emit(report, common, None)?;
            Ok(if pass { 0 } else { 1 })
        }
        Command::Scan { op, config, common } => {
            let s = load_config(config, common)?;
            let e = expr::parse(op).map_err(|e| ConfigError(e.to_string()))?;
            let fop = expr::eval_fock(&e, &s.fock).map_err(|e| ConfigError(e.to_string()))?;
            let n_scan = s.fock.n_max();
            let r = ideal::decay_scan(&fop, n_scan, s.tol_ideal)
                .map_err(|e| ConfigError(e.to_string()))?;
            let canonical = expr::print(&e);
            let report = wrap_report("scan", &s, decay_to_json(&canonical, &r), true);
            emit(report, common, Some(decay_csv(&canonical, &r)))?;
            Ok(0)
        }
        Command::Cpnorm { op, config, common } => {
            let s = load_config(config, common)?;
            let e = expr::parse(op).map_err(|e| ConfigError(e.to_string()))?;
            let fop = expr::eval_fock(&e, &s.fock).map_err(|e| ConfigError(e.to_string()))?;
            let est = ideal::cp_seminorm(&fop).map_err(|e| ConfigError(e.to_string()))?;
            let canonical = expr::print(&e);
            let mut csv = String::from("op,n,tail,exact\n");
            for &(n, v, ex) in &est.tails {
                csv.push_str(&format!("{canonical},{n},{},{ex}\n", sig15(v)));
            }
            let report = wrap_report(
                "cpnorm",
                &s,
                json!({"op": canonical, "estimate": est.value, "n_star": est.n_star, "tails": est.tails}),
                true,
            );
            emit(report, common, Some(csv))?;
            Ok(0)
        }
        Command::Sphere { coeffs, config, common } => {
            let s = load_config(config, common)?;
            if s.fock.system.family != Family::Symmetric {
                return cfg_err("sphere comparison needs a symmetric system");
            }
            let parts: Vec<f64> = coeffs
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| ConfigError(format!("bad coefficients: {e}")))?;
            let d = s.fock.system.fiber_dim(1);
            if parts.len() != d + 1 {
                return cfg_err(format!("expected {} coefficients (d alphas then gamma)", d + 1));
            }
            let (alphas, gamma) = (parts[..d].to_vec(), parts[d]);
            let r = ideal::sphere_compare(&s.fock, &alphas, gamma, 200, 1000, s.seed)
                .map_err(|e| ConfigError(e.to_string()))?;
            let pass = r.gap <= 0.1;
            let mut csv = String::from("alphas,gamma,estimate,sup,gap\n");
            csv.push_str(&format!(
                "\"{alphas:?}\",{gamma},{},{},{}\n",
                sig15(r.estimate.value),
                sig15(r.sphere_sup),
                sig15(r.gap)
            ));
            let report = wrap_report("sphere", &s, serde_json::to_value(&r).unwrap(), pass);
            emit(report, common, Some(csv))?;
            Ok(if pass { 0 } else { 1 })
        }
        Command::Rep { config, rep, common } => {
            let s = load_config(config, common)?;
            match parse_rep_file(&s, rep) {
                Ok(r) => {
                    let horizon = s.fock.n_max().saturating_sub(1).max(1);
                    let cls = reps::classify(&r, horizon, s.tol);
                    let report = wrap_report(
                        "rep",
                        &s,
                        json!({"classification": cls, "mult_residual": r.max_mult_residual}),
                        true,
                    );
                    emit(report, common, None)?;
                    Ok(0)
                }
                Err(RepOutcome::Config(msg)) => Err(ConfigError(msg)),
                Err(RepOutcome::Invalid(msg)) => {
                    let s2 = load_config(config, common)?;
                    let report = wrap_report(
                        "rep",
                        &s2,
                        json!({"error": msg}),
                        false,
                    );
                    emit(report, common, None)?;
                    Ok(1)
                }
            }
        }
        Command::Wold { config, rep, common } => {
            let s = load_config(config, common)?;
            let r = match parse_rep_file(&s, rep) {
                Ok(r) => r,
                Err(RepOutcome::Config(msg)) => return Err(ConfigError(msg)),
                Err(RepOutcome::Invalid(msg)) => {
                    let report = wrap_report("wold", &s, json!({"error": msg}), false);
                    emit(report, common, None)?;
                    return Ok(1);
                }
            };
            let horizon = s.fock.n_max().saturating_sub(1).max(1);
            match reps::wold_decompose(&r, horizon, s.tol) {
                Ok(split) => {
                    let pass = split.residuals.invariance <= s.tol.max(1e-9);
                    let report = wrap_report(
                        "wold",
                        &s,
                        json!({
                            "induced_dim": split.induced.ncols(),
                            "coisometric_dim": split.coisometric.ncols(),
                            "residuals": split.residuals,
                        }),
                        pass,
                    );
                    emit(report, common, None)?;
                    Ok(if pass { 0 } else { 1 })
                }
                Err(e) => {
                    let report = wrap_report("wold", &s, json!({"error": e.to_string()}), false);
                    emit(report, common, None)?;
                    Ok(1)
                }
            }
        }
        Command::Morita { config, common } => {
            let s = load_morita_config(config, common)?;
            let (value, pass) = suite_morita(&s)?;
            let report = wrap_report("morita", &s, value, pass);
            emit(report, common, None)?;
            Ok(if pass { 0 } else { 1 })
        }
    }
}

/// Entry point returning the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(ConfigError(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

/// Library hook for tests: run with explicit arguments.
pub fn run_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => match dispatch(&cli.command) {
            Ok(code) => code,
            Err(ConfigError(msg)) => {
                eprintln!("error: {msg}");
                2
            }
        },
        Err(e) => {
            let _ = e.print();
            2
        }
    }
}
