//! `hardy`: boundedness checks and operator evaluations for averaging
//! operators between weighted L1 spaces.
//!
//! Exit status: 0 on success, 2 when `check` finds the operator unbounded,
//! 1 on any input, I/O or evaluation failure.

mod instance;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use hardy_core::condition_c::phi_eval;
use hardy_core::grid::decade_grid;
use hardy_core::measures::{extend_apply, kernel_norm_identity, write_identity_csv, WeightedMeasure};
use hardy_core::operator::{
    apply_adjoint_eval, duality, sample_adjoint, sample_apply_u, AdjointForm, SAMPLE_GRID,
};
use hardy_core::quadrature::QuadOptions;
use hardy_core::reproduce::{self, Family};
use hardy_core::suites::{duality_suite, DEFAULT_SEED};
use hardy_core::weakcompact::{default_g_suite, default_s_sequence, weak_star_limit_check};
use hardy_core::{certify_with, phi_profile, CertifyOptions, TestFunction};
use instance::Loaded;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "hardy", version, about = "Averaging operators on weighted L1 spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Problem instance JSON.
    #[arg(long, global = true)]
    instance: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the instance quadrature tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Sampling grid as smin:smax:points_per_decade.
    #[arg(long, global = true, value_parser = parse_grid)]
    grid: Option<Grid>,
    /// Seed for randomized suites.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Cross-check every integral against its alternative form.
    #[arg(long, global = true)]
    self_check: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decide boundedness and write verdict.json.
    Check,
    /// Tabulate Phi(s) and Phi(s)/omega1(s) into phi.csv.
    Phi,
    /// Tabulate U f into apply.csv.
    Apply,
    /// Tabulate the adjoint image of h into adjoint.csv.
    Adjoint,
    /// Image of a point mass (or of the instance measure) and the
    /// kernel-norm identity.
    Delta {
        /// Atom location; overrides `delta_s` from the instance.
        #[arg(long)]
        s: Option<f64>,
    },
    /// Seeded duality-gap suite.
    Duality {
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
    /// Weak-star limit and mass concentration of the normalized kernels.
    Weakcompact,
    /// Run the scripted checks for a reference family: a, b or c.
    ReproduceExample {
        #[arg(value_parser = parse_family)]
        which: Family,
    },
}

#[derive(Clone, Copy, Debug)]
struct Grid {
    s_min: f64,
    s_max: f64,
    per_decade: usize,
}

impl Grid {
    fn points(&self) -> usize {
        decade_grid(self.s_min, self.s_max, self.per_decade).len()
    }
}

fn parse_grid(text: &str) -> std::result::Result<Grid, String> {
    let parts: Vec<&str> = text.split(':').collect();
    let [lo, hi, ppd] = parts[..] else {
        return Err(format!("expected smin:smax:ppd, got {text:?}"));
    };
    let s_min: f64 = lo.parse().map_err(|e| format!("smin: {e}"))?;
    let s_max: f64 = hi.parse().map_err(|e| format!("smax: {e}"))?;
    let per_decade: usize = ppd.parse().map_err(|e| format!("ppd: {e}"))?;
    if !(s_min > 0.0 && s_max > s_min && s_max.is_finite() && per_decade > 0) {
        return Err(format!("need 0 < smin < smax and ppd > 0, got {text:?}"));
    }
    Ok(Grid {
        s_min,
        s_max,
        per_decade,
    })
}

fn parse_family(text: &str) -> std::result::Result<Family, String> {
    text.parse().map_err(|e: hardy_core::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    if let Some(t) = cli.tol {
        if !(t.is_finite() && t > 0.0) {
            bail!("--tol must be positive, got {t}");
        }
    }
    if let Command::ReproduceExample { which } = &cli.command {
        return reproduce_example(*which);
    }
    let path = cli
        .instance
        .as_deref()
        .ok_or_else(|| anyhow!("--instance is required for this command"))?;
    let loaded = instance::load(path, cli.tol)?;
    fs::create_dir_all(&cli.out).with_context(|| format!("cannot create {}", cli.out.display()))?;
    match &cli.command {
        Command::Check => check(cli, &loaded),
        Command::Phi => phi(cli, &loaded),
        Command::Apply => apply(cli, &loaded),
        Command::Adjoint => adjoint(cli, &loaded),
        Command::Delta { s } => delta(cli, &loaded, *s),
        Command::Duality { count } => duality_cmd(cli, &loaded, *count),
        Command::Weakcompact => weakcompact(cli, &loaded),
        Command::ReproduceExample { .. } => unreachable!(),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn check(cli: &Cli, l: &Loaded) -> Result<ExitCode> {
    let mut opts = CertifyOptions {
        self_check: cli.self_check,
        ..CertifyOptions::default()
    };
    if let Some(g) = cli.grid {
        opts.s_min = g.s_min;
        opts.s_max = g.s_max;
        opts.per_decade = g.per_decade;
    }
    let v = certify_with(&l.instance, &opts)?;
    write_text(&cli.out, "verdict.json", &v.to_json()?)?;
    println!("status: {:?}", v.status);
    println!("moment: {:e}", v.moment);
    if let Some(c) = v.norm_estimate {
        println!("norm estimate: {c:.9e}");
    }
    if let Some(w) = &v.witness {
        println!("witness: {}", serde_json::to_string(w)?);
    }
    if let Some(g) = v.max_self_check_gap {
        println!("max self-check gap: {g:.3e}");
    }
    Ok(if v.is_bounded() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn phi(cli: &Cli, l: &Loaded) -> Result<ExitCode> {
    let g = cli.grid.unwrap_or(Grid {
        s_min: 1e-6,
        s_max: 1e6,
        per_decade: 10,
    });
    let p = phi_profile(&l.instance, g.s_min, g.s_max, g.per_decade)?;
    p.write_csv(create(&cli.out, "phi.csv")?)?;
    let sup = p.ratio_values.iter().copied().fold(0.0, f64::max);
    println!("{} points, max ratio {sup:.9e}", p.s_values.len());
    if cli.self_check {
        let gap = p
            .s_values
            .iter()
            .map(|&s| Ok(phi_eval(&l.instance, s, true)?.self_check_gap.unwrap_or(0.0)))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        println!("max self-check gap: {gap:.3e}");
    }
    Ok(ExitCode::SUCCESS)
}

fn sample_range(cli: &Cli) -> (f64, f64, usize) {
    match cli.grid {
        Some(g) => (g.s_min, g.s_max, g.points()),
        None => SAMPLE_GRID,
    }
}

fn apply(cli: &Cli, l: &Loaded) -> Result<ExitCode> {
    let f = l.extras.f.as_ref().ok_or_else(|| anyhow!("instance has no `f` field"))?;
    let (lo, hi, n) = sample_range(cli);
    let image = sample_apply_u(&l.instance, f, lo, hi, n)?;
    image.write_csv(create(&cli.out, "apply.csv")?)?;
    println!("{n} samples of U f on [{lo:e}, {hi:e}]");
    if cli.self_check {
        let probe = TestFunction::exponential(-1.0)?;
        let d = duality(&l.instance, f, &probe, l.instance.quad_tol)?;
        println!("self-check duality gap against exp(-x): {:.3e}", d.gap);
    }
    Ok(ExitCode::SUCCESS)
}

fn adjoint(cli: &Cli, l: &Loaded) -> Result<ExitCode> {
    let h = l.extras.h.as_ref().ok_or_else(|| anyhow!("instance has no `h` field"))?;
    let (lo, hi, n) = sample_range(cli);
    let image = sample_adjoint(&l.instance, h, lo, hi, n)?;
    image.write_csv(create(&cli.out, "adjoint.csv")?)?;
    println!("{n} samples of the adjoint image on [{lo:e}, {hi:e}]");
    if cli.self_check {
        let opts = QuadOptions::with_tol(l.instance.quad_tol);
        let mut worst: f64 = 0.0;
        for x in decade_grid(lo, hi, 2) {
            let a = apply_adjoint_eval(&l.instance, h, x, AdjointForm::Unit, &opts)?;
            let b = apply_adjoint_eval(&l.instance, h, x, AdjointForm::Tail, &opts)?;
            if a.diverged || b.diverged {
                continue;
            }
            let scale = a.value.abs().max(b.value.abs());
            if scale > 0.0 {
                worst = worst.max((a.value - b.value).abs() / scale);
            }
        }
        println!("max self-check gap between unit and tail forms: {worst:.3e}");
    }
    Ok(ExitCode::SUCCESS)
}

fn delta(cli: &Cli, l: &Loaded, s: Option<f64>) -> Result<ExitCode> {
    let mu = match (s.or(l.extras.delta_s), &l.extras.measure) {
        (Some(s), _) => WeightedMeasure::atom(s, 1.0)?,
        (None, Some(mu)) => mu.clone(),
        (None, None) => bail!("need --s, `delta_s` or `measure` in the instance"),
    };
    let image = extend_apply(&l.instance, &mu)?;
    write_text(&cli.out, "delta.json", &image.to_json()?)?;
    image.write_csv(create(&cli.out, "delta.csv")?)?;
    println!("delta0 coefficient: {:e}", image.delta0_coefficient);
    let g = cli.grid.unwrap_or(Grid {
        s_min: 1e-3,
        s_max: 1e3,
        per_decade: 5,
    });
    let rows = decade_grid(g.s_min, g.s_max, g.per_decade)
        .into_iter()
        .map(|s| kernel_norm_identity(&l.instance, s))
        .collect::<hardy_core::Result<Vec<_>>>()?;
    write_identity_csv(&rows, create(&cli.out, "identity.csv")?)?;
    let worst = rows.iter().map(|r| r.rel_gap).fold(0.0, f64::max);
    println!("kernel-norm identity: max relative gap {worst:.3e} over {} points", rows.len());
    Ok(ExitCode::SUCCESS)
}

fn duality_cmd(cli: &Cli, l: &Loaded, count: usize) -> Result<ExitCode> {
    let suite = duality_suite(&l.instance, cli.seed, count, l.instance.quad_tol)?;
    write_text(&cli.out, "duality.json", &suite.to_json()?)?;
    suite.write_csv(create(&cli.out, "duality.csv")?)?;
    println!("seed {}: {} pairs, max gap {:.3e}", suite.seed, suite.rows.len(), suite.max_gap);
    Ok(ExitCode::SUCCESS)
}

fn weakcompact(cli: &Cli, l: &Loaded) -> Result<ExitCode> {
    let s_values = match cli.grid {
        Some(g) => {
            let mut s = decade_grid(g.s_min, g.s_max, g.per_decade);
            s.reverse();
            s
        }
        None => default_s_sequence(),
    };
    let suite = default_g_suite(&l.instance.omega2)?;
    let r = weak_star_limit_check(&l.instance, &suite, &s_values)?;
    write_text(&cli.out, "weakcompact.json", &r.to_json()?)?;
    r.write_csv(create(&cli.out, "weakcompact.csv")?)?;
    let last = r.s_values.len().saturating_sub(1);
    println!("moment {:e}, omega1(0) {:e}, degenerate {}", r.moment, r.omega1_at_zero, r.degenerate);
    for g in &r.series {
        if let Some(gap) = g.gaps.get(last) {
            println!("{}: gap to limit {gap:.3e} at s = {:e}", g.name, r.s_values[last]);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn reproduce_example(which: Family) -> Result<ExitCode> {
    let checks = reproduce::run(which)?;
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("example {which}: {} checks, {failed} failed", checks.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
