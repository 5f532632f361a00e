//! Subcommands. Each returns `Ok(true)` when every check passed,
//! `Ok(false)` when a check failed, and an error otherwise.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dirlab_core::capacity::{
    capacity, capacity_monotonicity_cached, check_chebyshev_suite, nested_pairs, CapacityCache,
};
use dirlab_core::elliptic::{
    boundedness_certificate, check_resolvent_properties, resolve, resolvent_identity_check,
    DecayConstants,
};
use dirlab_core::embed::{
    check_layer_cake_suite, isocap_scan, isocap_scan_approx, linfty_embedding_check,
    lp_embedding_constant, lq_embedding_check, poincare_constant, weak_lp_embedding_check,
    IsocapScanResult, DEFAULT_MAX_N,
};
use dirlab_core::flow::{
    check_dissipation, check_l2_decay, contraction_checks, contraction_pairs, evolve,
    gagliardo_nirenberg_check, log_grid, smoothing_c1, smoothing_experiment, SmoothingParams,
    StepPolicy,
};
use dirlab_core::forms::check_dirichlet_properties;
use dirlab_core::{Error as CoreError, Func, SolverConfig, SubsetMask};

use crate::instance::{self, Instance, ParseError};
use crate::output::{func, num, Table};

/// Bad flags or inputs; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Exit code for a failed command: 2 for usage and parse problems, 1 for
/// everything that is a finding about the instance.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() || err.downcast_ref::<ParseError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<CoreError>() {
        Some(
            CoreError::InvalidParameter { .. }
            | CoreError::DimensionMismatch { .. }
            | CoreError::InvalidForm(_)
            | CoreError::TooLarge { .. },
        ) => 2,
        _ => 1,
    }
}

#[derive(Debug, Parser)]
#[command(name = "dirlab", version, about = "Checks and experiments for Dirichlet forms on finite graphs")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Instance file (TOML).
    #[arg(long, global = true)]
    pub instance: Option<PathBuf>,
    /// CSV destination; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for every sampled check (instance default otherwise).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Relative tolerance of the form checks (instance default otherwise).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Sample count (instance default otherwise).
    #[arg(long, global = true)]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbedMode {
    Linf,
    Weak,
    Lq,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Submodularity, truncation, evenness and convexity of E.
    CheckForm,
    /// Norm-capacity of a set of point ids; the witness goes to --out.
    Capacity {
        /// Comma-separated point ids; empty for the empty set.
        #[arg(long, allow_hyphen_values = true)]
        set: String,
        #[arg(long, default_value_t = 1e-8)]
        outer_tol: f64,
    },
    /// m(A)^{1/q} / cap(A) over subsets.
    ScanIsocap {
        #[arg(long)]
        q: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_N)]
        max_n: usize,
        /// Scan this many random subsets instead of all of them.
        #[arg(long)]
        approx: Option<usize>,
    },
    /// Embedding checks against isocapacitary constants.
    Embed {
        #[arg(long, value_enum)]
        mode: EmbedMode,
        /// Weak-Lp exponent (weak) or upper exponent (lq).
        #[arg(long, default_value_t = 4.0)]
        p: f64,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(long)]
        approx: Option<usize>,
    },
    /// Chebyshev capacity inequality and capacity monotonicity.
    Chebyshev,
    /// Poincaré constant estimate.
    Poincare,
    /// Solve ∂E(u) + λu = f; f is read from a value file.
    Resolve {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        f: PathBuf,
    },
    /// Boundedness certificate and resolvent identities for a datum f.
    Elliptic {
        #[arg(long)]
        f: PathBuf,
        #[arg(long, default_value_t = 8.0)]
        q: f64,
        #[arg(long, default_value_t = 8.0)]
        p_emb: f64,
        /// Growth exponent; the form's own growth exponent when omitted.
        #[arg(long)]
        r: Option<f64>,
    },
    /// Implicit Euler trace from u0.
    Flow {
        #[arg(long)]
        u0: PathBuf,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        steps: usize,
        /// Geometric step ratio; uniform steps when omitted.
        #[arg(long)]
        ratio: Option<f64>,
    },
    /// Lp contraction and order preservation of the flow on seeded pairs.
    Contraction {
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        /// `start:end:count` (log-spaced) or a comma list.
        #[arg(long, default_value = "0.1,1,4")]
        tgrid: String,
        #[arg(long, default_value_t = 8)]
        steps_per_segment: usize,
    },
    /// L² → Lp smoothing experiment; rows (t, lp_norm, l2_initial, ratio).
    Smoothing {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        sigma: f64,
        /// Hypothesis constant; derived from the Poincaré constant when omitted.
        #[arg(long)]
        c1: Option<f64>,
        #[arg(long, default_value = "0.01:10:13")]
        tgrid: String,
        #[arg(long, default_value_t = 8)]
        steps_per_segment: usize,
        #[arg(long, default_value_t = 200)]
        train: usize,
        #[arg(long, default_value_t = 200)]
        held_out: usize,
        /// Report CSV for the hypothesis, held-out and GN checks.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

struct Ctx {
    inst: Instance,
    out: Option<PathBuf>,
    seed: u64,
    tol: f64,
    samples: usize,
    cfg: SolverConfig,
}

impl Ctx {
    /// Summaries go to stdout when the table goes to a file, else stderr.
    fn say(&self, msg: impl AsRef<str>) {
        if self.out.is_some() {
            println!("{}", msg.as_ref());
        } else {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn params(&self, extra: &str) -> String {
        let base = format!("samples={};seed={}", self.samples, self.seed);
        if extra.is_empty() {
            base
        } else {
            format!("{base};{extra}")
        }
    }

    fn emit(&self, t: &Table) -> Result<()> {
        t.emit(self.out.as_deref())
    }

    fn read_func(&self, path: &Path) -> Result<Func> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        let v = instance::parse_values(&text, self.inst.n()).map_err(|e| {
            usage(format!("{}: {e}", path.display()))
        })?;
        Ok(Func::new(v))
    }

    fn cache(&self, outer_tol: f64) -> CapacityCache<'_> {
        CapacityCache::new(&self.inst.form, outer_tol, self.cfg.clone())
    }

    fn scan(&self, cache: &CapacityCache<'_>, q: f64, max_n: usize, approx: Option<usize>) -> Result<IsocapScanResult> {
        match approx {
            Some(count) => Ok(isocap_scan_approx(cache, q, count, self.seed)?),
            None => match isocap_scan(cache, q, max_n) {
                Err(CoreError::TooLarge { n, max_n }) => Err(usage(format!(
                    "{n} points exceed --max-n {max_n} for an exhaustive scan; \
                     pass --approx N to scan N random subsets, or raise --max-n"
                ))),
                r => Ok(r?),
            },
        }
    }
}

/// Run a parsed command line.
pub fn run(cli: Cli) -> Result<bool> {
    let path = cli
        .common
        .instance
        .clone()
        .ok_or_else(|| usage("--instance is required"))?;
    let inst = instance::load(&path)
        .map_err(|e| anyhow::Error::new(e.clone()).context(format!("{}", path.display())))?;
    let seed = cli.common.seed.unwrap_or(inst.defaults.seed);
    let tol = cli.common.tol.unwrap_or(inst.defaults.tol);
    let samples = cli.common.samples.unwrap_or(inst.defaults.samples);
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(usage(format!("--tol must be finite and >= 0, got {tol}")));
    }
    let cfg = SolverConfig {
        seed,
        ..SolverConfig::default()
    };
    let ctx = Ctx {
        inst,
        out: cli.common.out.clone(),
        seed,
        tol,
        samples,
        cfg,
    };
    match cli.command {
        Command::CheckForm => check_form(&ctx),
        Command::Capacity { set, outer_tol } => cmd_capacity(&ctx, &set, outer_tol),
        Command::ScanIsocap { q, max_n, approx } => scan_isocap(&ctx, q, max_n, approx),
        Command::Embed {
            mode,
            p,
            q,
            eps,
            approx,
        } => embed(&ctx, mode, p, q, eps, approx),
        Command::Chebyshev => chebyshev(&ctx),
        Command::Poincare => poincare(&ctx),
        Command::Resolve { lambda, f } => cmd_resolve(&ctx, lambda, &f),
        Command::Elliptic { f, q, p_emb, r } => elliptic(&ctx, &f, q, p_emb, r),
        Command::Flow { u0, t, steps, ratio } => flow(&ctx, &u0, t, steps, ratio),
        Command::Contraction {
            pairs,
            tgrid,
            steps_per_segment,
        } => contraction(&ctx, pairs, &tgrid, steps_per_segment),
        Command::Smoothing {
            p,
            sigma,
            c1,
            tgrid,
            steps_per_segment,
            train,
            held_out,
            report,
        } => smoothing(
            &ctx,
            SmoothingArgs {
                p,
                sigma,
                c1,
                tgrid,
                steps_per_segment,
                train,
                held_out,
                report,
            },
        ),
    }
}

/// `start:end:count` gives a log-spaced grid, anything else a comma list.
pub fn parse_tgrid(s: &str) -> Result<Vec<f64>> {
    let bad = || usage(format!("invalid time grid `{s}`"));
    let parts: Vec<&str> = s.split(':').collect();
    let grid = if parts.len() == 3 {
        let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if !(a > 0.0 && b > a && n >= 2) {
            return Err(bad());
        }
        log_grid(a, b, n)
    } else {
        s.split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?
    };
    let increasing = grid.windows(2).all(|w| w[1] > w[0]);
    if grid.is_empty() || !(grid[0] > 0.0) || !increasing {
        return Err(usage(format!("time grid `{s}` must be positive and increasing")));
    }
    Ok(grid)
}

fn check_form(ctx: &Ctx) -> Result<bool> {
    let reports = check_dirichlet_properties(&ctx.inst.form, ctx.samples, ctx.seed, ctx.tol);
    let mut t = Table::reports();
    let params = ctx.params(&format!("tol={}", ctx.tol));
    for r in &reports {
        t.push_report(&ctx.inst.name, &params, r);
    }
    ctx.emit(&t)?;
    let pass = reports.iter().all(|r| r.pass);
    for r in reports.iter().filter(|r| !r.pass) {
        ctx.say(format!("{} FAILED at {}", r.name, r.counterexample.iter().map(func).collect::<Vec<_>>().join(" ")));
    }
    Ok(pass)
}

fn parse_set(inst: &Instance, s: &str) -> Result<SubsetMask> {
    let mut idx = Vec::new();
    for id in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        idx.push(
            inst.index_of(id)
                .ok_or_else(|| usage(format!("unknown point id `{id}` in --set")))?,
        );
    }
    Ok(SubsetMask::from_indices(inst.n(), &idx))
}

fn cmd_capacity(ctx: &Ctx, set: &str, outer_tol: f64) -> Result<bool> {
    let mask = parse_set(&ctx.inst, set)?;
    let res = capacity(&ctx.inst.form, &mask, outer_tol, &ctx.cfg)?;
    println!("capacity = {}", num(res.value));
    let mut t = Table::new(&["id", "witness"]);
    for (id, w) in ctx.inst.ids.iter().zip(res.witness.iter()) {
        t.push(vec![id.clone(), num(*w)]);
    }
    if ctx.out.is_some() {
        ctx.emit(&t)?;
    }
    Ok(true)
}

fn set_label(inst: &Instance, set: &SubsetMask) -> String {
    set.indices().map(|i| inst.ids[i].as_str()).collect::<Vec<_>>().join(";")
}

fn scan_isocap(ctx: &Ctx, q: f64, max_n: usize, approx: Option<usize>) -> Result<bool> {
    let cache = ctx.cache(1e-8);
    let scan = ctx.scan(&cache, q, max_n, approx)?;
    let mut t = Table::new(&["subset", "mass", "capacity", "ratio"]);
    for e in &scan.entries {
        t.push(vec![
            set_label(&ctx.inst, &e.set),
            num(e.mass),
            num(e.capacity),
            num(e.mass.powf(1.0 / q) / e.capacity),
        ]);
    }
    ctx.emit(&t)?;
    ctx.say(format!(
        "best constant = {} at {{{}}} ({} subsets, {})",
        num(scan.best_constant),
        set_label(&ctx.inst, &scan.argmax_subset),
        scan.subsets_scanned,
        if scan.exhaustive { "exhaustive" } else { "sampled lower bound" }
    ));
    Ok(true)
}

fn embed(ctx: &Ctx, mode: EmbedMode, p: f64, q: f64, eps: f64, approx: Option<usize>) -> Result<bool> {
    let cache = ctx.cache(1e-8);
    let name = &ctx.inst.name;
    let mut t = Table::reports();
    let pass = match mode {
        EmbedMode::Linf => {
            let r = linfty_embedding_check(&cache, ctx.samples, ctx.seed)?;
            let params = ctx.params("mode=linf");
            t.push_report(name, &params, &r.forward);
            t.push_report(name, &params, &r.converse);
            r.pass()
        }
        EmbedMode::Weak => {
            let scan = ctx.scan(&cache, p, DEFAULT_MAX_N, approx)?;
            let r = weak_lp_embedding_check(&cache, p, &scan, ctx.samples, ctx.seed)?;
            let params = ctx.params(&format!("mode=weak;p={p}"));
            t.push_report(name, &params, &r.forward);
            t.push_report(name, &params, &r.converse);
            r.pass()
        }
        EmbedMode::Lq => {
            let scan = ctx.scan(&cache, q + eps, DEFAULT_MAX_N, approx)?;
            let r = lq_embedding_check(&cache, q, p, eps, &scan, ctx.samples, ctx.seed)?;
            let cake = check_layer_cake_suite(ctx.inst.form.space(), q, ctx.samples, ctx.seed);
            let params = ctx.params(&format!("mode=lq;q={q};p={p};eps={eps}"));
            t.push_report(name, &params, &r);
            t.push_report(name, &params, &cake);
            r.pass && cake.pass
        }
    };
    ctx.emit(&t)?;
    Ok(pass)
}

fn chebyshev(ctx: &Ctx) -> Result<bool> {
    let cache = ctx.cache(1e-8);
    let cheb = check_chebyshev_suite(&cache, ctx.samples, ctx.seed)?;
    let pairs = nested_pairs(ctx.inst.n(), 50, ctx.seed);
    let mono = capacity_monotonicity_cached(&cache, &pairs)?;
    let mut t = Table::reports();
    let params = ctx.params("");
    t.push_report(&ctx.inst.name, &params, &cheb);
    t.push_report(&ctx.inst.name, &params, &mono);
    ctx.emit(&t)?;
    Ok(cheb.pass && mono.pass)
}

fn poincare(ctx: &Ctx) -> Result<bool> {
    let c = poincare_constant(&ctx.inst.form, ctx.samples, ctx.seed, &ctx.cfg)?;
    println!("poincare constant = {}", num(c));
    Ok(true)
}

fn cmd_resolve(ctx: &Ctx, lambda: f64, f: &Path) -> Result<bool> {
    let f = ctx.read_func(f)?;
    let sol = resolve(&ctx.inst.form, lambda, &f, &ctx.cfg)?;
    let shown: Vec<String> = sol.u.iter().map(|x| format!("{x:.9}")).collect();
    println!("u = ({})", shown.join(", "));
    let mut t = Table::new(&["id", "u"]);
    for (id, x) in ctx.inst.ids.iter().zip(sol.u.iter()) {
        t.push(vec![id.clone(), num(*x)]);
    }
    if ctx.out.is_some() {
        ctx.emit(&t)?;
    }
    Ok(true)
}

fn elliptic(ctx: &Ctx, f: &Path, q: f64, p_emb: f64, r: Option<f64>) -> Result<bool> {
    let f = ctx.read_func(f)?;
    let form = &ctx.inst.form;
    let cache = ctx.cache(1e-8);
    let consts = DecayConstants {
        q,
        p_emb,
        r: r.unwrap_or_else(|| form.growth_exponent().max(2.0)),
        c_emb: lp_embedding_constant(&cache, p_emb)?,
    };
    let cert = boundedness_certificate(form, &f, consts, &ctx.cfg)?;
    let name = &ctx.inst.name;
    let params = ctx.params(&format!("q={q};p_emb={p_emb};r={}", consts.r));
    let mut t = Table::reports();
    let mut pass = cert.report.pass && cert.decay.pass();
    t.push_report(name, &params, &cert.report);
    for s in &cert.decay.steps {
        t.push_report(name, &params, s);
    }
    for lambda in [1.0, 2.0, 4.0] {
        let lp = format!("{params};lambda={lambda}");
        for rep in resolvent_identity_check(form, lambda, &f, &ctx.cfg)? {
            pass &= rep.pass;
            t.push_report(name, &lp, &rep);
        }
        for rep in check_resolvent_properties(form, lambda, 50, ctx.seed, &ctx.cfg)? {
            pass &= rep.pass;
            t.push_report(name, &lp, &rep);
        }
    }
    ctx.emit(&t)?;
    ctx.say(format!(
        "sup|u| = {} <= k0 + d = {} (k0 = {}, d = {}, beta = {})",
        num(cert.u_sup),
        num(cert.predicted),
        num(cert.k0),
        num(cert.d),
        num(cert.beta)
    ));
    Ok(pass)
}

fn flow(ctx: &Ctx, u0: &Path, t_end: f64, steps: usize, ratio: Option<f64>) -> Result<bool> {
    let u0 = ctx.read_func(u0)?;
    let policy = match ratio {
        Some(r) => StepPolicy::Geometric { ratio: r },
        None => StepPolicy::Uniform,
    };
    let form = &ctx.inst.form;
    let trace = evolve(form, &u0, t_end, steps, policy, &ctx.cfg)?;
    let mut header = vec!["step".to_string(), "t".into(), "energy".into()];
    header.extend(ctx.inst.ids.iter().cloned());
    let mut t = Table::new(&header);
    for (k, (s, (time, e))) in trace
        .states
        .iter()
        .zip(trace.times.iter().zip(&trace.energy_values))
        .enumerate()
    {
        let mut row = vec![k.to_string(), num(*time), num(*e)];
        row.extend(s.iter().map(|x| num(*x)));
        t.push(row);
    }
    ctx.emit(&t)?;
    let diss = check_dissipation(form, &trace);
    let l2 = check_l2_decay(form, &trace);
    for r in [&diss, &l2] {
        ctx.say(format!("{}: {}", r.name, if r.pass { "pass" } else { "FAIL" }));
    }
    Ok(diss.pass && l2.pass)
}

fn contraction(ctx: &Ctx, pairs: usize, tgrid: &str, steps_per_segment: usize) -> Result<bool> {
    let times = parse_tgrid(tgrid)?;
    let pairs_v = contraction_pairs(ctx.inst.n(), pairs, ctx.seed);
    let reports = contraction_checks(&ctx.inst.form, &pairs_v, &times, steps_per_segment, &ctx.cfg)?;
    let mut t = Table::reports();
    let params = format!("pairs={pairs};seed={};tgrid={tgrid};steps_per_segment={steps_per_segment}", ctx.seed);
    for r in &reports {
        t.push_report(&ctx.inst.name, &params, r);
    }
    ctx.emit(&t)?;
    Ok(reports.iter().all(|r| r.pass))
}

struct SmoothingArgs {
    p: f64,
    sigma: f64,
    c1: Option<f64>,
    tgrid: String,
    steps_per_segment: usize,
    train: usize,
    held_out: usize,
    report: Option<PathBuf>,
}

fn smoothing(ctx: &Ctx, a: SmoothingArgs) -> Result<bool> {
    let form = &ctx.inst.form;
    let times = parse_tgrid(&a.tgrid)?;
    let c1 = match a.c1 {
        Some(c) => c,
        None => smoothing_c1(form, a.sigma, 500, ctx.seed, &ctx.cfg)
            .context("deriving C1 (pass --c1 to set it)")?,
    };
    let mut params = SmoothingParams::new(a.p, a.sigma, c1, ctx.seed);
    params.times = times;
    params.steps_per_segment = a.steps_per_segment;
    params.train = a.train;
    params.held_out = a.held_out;
    params.hypothesis_samples = ctx.samples;
    let res = smoothing_experiment(form, &params, &ctx.cfg)?;
    let mut rows = Table::new(&["t", "lp_norm", "l2_initial", "ratio"]);
    for r in &res.rows {
        rows.push(vec![num(r.t), num(r.lp_norm), num(r.l2_initial), num(r.ratio)]);
    }
    ctx.emit(&rows)?;

    let cache = ctx.cache(1e-8);
    let c2 = lp_embedding_constant(&cache, a.p)?;
    let gn = gagliardo_nirenberg_check(form, a.p, a.sigma, c1, c2, ctx.samples, ctx.seed)?;
    let name = &ctx.inst.name;
    let p = format!(
        "p={};sigma={};c1={};train={};held_out={};seed={}",
        a.p,
        a.sigma,
        num(c1),
        a.train,
        a.held_out,
        ctx.seed
    );
    let mut rep = Table::reports();
    rep.push_report(name, &p, &res.hypothesis);
    rep.push_report(name, &p, &res.report);
    rep.push_report(name, &p, &gn);
    if let Some(path) = &a.report {
        rep.emit(Some(path))?;
    }
    ctx.say(format!(
        "K_emp = {}, held-out max = {} ({})",
        num(res.k_emp),
        num(res.held_out_max),
        if res.report.pass { "pass" } else { "FAIL" }
    ));
    Ok(res.hypothesis.pass && res.report.pass && gn.pass)
}
