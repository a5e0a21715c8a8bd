use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kinetic_core::coupled::{
    conservation_drift, conservation_identity_residual, conserved_quantities, profiles, resonance_coefficients,
    solve_coupled, trial_functions, verify_main_theorem, CoupledOperators, CoupledState,
};
use kinetic_core::greens::{evolve_variants, fit_waves, Bump, Datum, ProfileVariant, Representation, SpatialField, SpatialGrid};
use kinetic_core::io::{emit_report, to_csv, to_json, write_atomic, Check, ReportFormat, RunConfig, VerificationReport};
use kinetic_core::kernels::sqrt_maxwellian;
use kinetic_core::operator::{
    assemble_lba_with, assemble_operator_with, diagnose, AssemblySettings, CollisionOperator, Interpolation, Pair,
};
use kinetic_core::spectral::{
    dispersion_branches, euler_speeds, fit_branch, fluid_modes, long_wave_threshold, macro_speeds, spectral_gap,
    transport_coefficients, FluidBasis,
};
use kinetic_core::{build_grid, digest_hex, GridFunction, GridRef, KineticError, Result};
use serde_json::json;

/// Relative tolerance of A_1 = A_3.
const SYMMETRY_TOL: f64 = 1e-8;
/// Relative drift of the conserved quantities across a coupled run.
const DRIFT_TOL: f64 = 1e-7;

#[derive(Parser)]
#[command(name = "kinetic", version, about = "Linearized Boltzmann operators for a binary gas mixture")]
struct Cli {
    /// JSON run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the velocity grid nodes and weights.
    Grid,
    /// Assemble (or load from cache) collision operators and write their diagnostics.
    Assemble {
        #[arg(long, value_enum, default_value_t = PairArg::All)]
        pair: PairArg,
    },
    /// Fluid modes, Euler speeds and the diffusion mode.
    Modes,
    /// Small-eigenvalue branches of -i k xi1 + L on a uniform k grid.
    Dispersion {
        #[arg(long, default_value_t = 0.5)]
        kmax: f64,
        #[arg(long, default_value_t = 64)]
        nk: usize,
        #[arg(long, value_enum, default_value_t = PairArg::Bb)]
        pair: PairArg,
    },
    /// Navier-Stokes and diffusion coefficients.
    Coeffs,
    /// Green's function profiles along the time ladder, with wave fits.
    Evolve {
        #[arg(long, value_enum, default_value_t = PairArg::Ab)]
        pair: PairArg,
        /// Comma-separated profile variants: full, P1-left, P1-right, P1-both, mode-projected-j.
        #[arg(long, value_delimiter = ',', default_value = "full")]
        variants: Vec<String>,
        #[arg(long, value_enum, default_value_t = DatumArg::Generic)]
        datum: DatumArg,
    },
    /// Coupled A/B evolution driven by an A-only datum.
    Couple {
        #[arg(long, value_enum, default_value_t = DatumArg::Generic)]
        datum: DatumArg,
    },
    /// Run a verification suite; exits with 3 if any check fails.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, value_enum, default_value_t = FormatArg::Json)]
        format: FormatArg,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PairArg {
    Bb,
    Ab,
    Ba,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum DatumArg {
    /// sqrt(M) times the bump.
    Density,
    /// (1 + xi1/2 + |xi|^2/4) sqrt(M) times the bump.
    Generic,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Speeds,
    Operator,
    Transport,
    Conservation,
    Cross,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

struct Context {
    cfg: RunConfig,
    out: PathBuf,
    grid: GridRef,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self> {
        let cfg = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let out = cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
        let grid = build_grid(&cfg.mixture, cfg.grid)?;
        Ok(Self { cfg, out, grid })
    }

    fn basis(&self) -> Result<FluidBasis> {
        fluid_modes(&self.grid, self.cfg.mixture.mass_ratio())
    }

    /// Cache directory for the current quadrature settings, if caching is enabled.
    fn cache_dir(&self) -> Option<PathBuf> {
        let q = serde_json::to_string(&self.cfg.quadrature).expect("quadrature serializes");
        self.cfg.resolved_cache_dir().map(|d| d.join(format!("q-{}", &digest_hex(q.as_bytes())[..12])))
    }

    fn operator(&self, pair: Pair) -> Result<CollisionOperator> {
        let settings = AssemblySettings { radial: self.cfg.quadrature.radial(), ..AssemblySettings::default() };
        let mix = &self.cfg.mixture;
        let order = self.cfg.quadrature.angular_order;
        let dir = self.cache_dir();
        match pair {
            Pair::Ba => kinetic_core::io::cached_operator(dir.as_deref(), pair, &self.grid, mix, Some(order), || {
                assemble_lba_with(&self.grid, mix, order, Interpolation::RadialLegendre, &settings)
            }),
            _ => kinetic_core::io::cached_operator(dir.as_deref(), pair, &self.grid, mix, None, || {
                assemble_operator_with(pair, &self.grid, mix, &settings)
            }),
        }
    }

    fn space(&self) -> Result<SpatialGrid> {
        SpatialGrid::with_spacing(self.cfg.spatial.half_length, self.cfg.spatial.max_dx)
    }

    fn bump(&self) -> Bump {
        Bump { sharpness: self.cfg.spatial.sharpness }
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

fn pair_name(p: Pair) -> &'static str {
    match p {
        Pair::Bb => "bb",
        Pair::Ab => "ab",
        Pair::Ba => "ba",
    }
}

fn pairs(arg: PairArg) -> Vec<Pair> {
    match arg {
        PairArg::Bb => vec![Pair::Bb],
        PairArg::Ab => vec![Pair::Ab],
        PairArg::Ba => vec![Pair::Ba],
        PairArg::All => vec![Pair::Bb, Pair::Ab, Pair::Ba],
    }
}

fn single_pair(arg: PairArg, allowed: &[Pair]) -> Result<Pair> {
    match pairs(arg).as_slice() {
        [p] if allowed.contains(p) => Ok(*p),
        _ => Err(KineticError::Config(format!(
            "pair must be one of {}",
            allowed.iter().map(|p| pair_name(*p)).collect::<Vec<_>>().join(", ")
        ))),
    }
}

fn datum_profile(grid: &GridRef, kind: DatumArg, mass: f64) -> GridFunction {
    match kind {
        DatumArg::Density => GridFunction::from_fn(grid, |p| sqrt_maxwellian(p, mass)),
        DatumArg::Generic => GridFunction::from_fn(grid, |p| {
            (1.0 + 0.5 * p[0] + 0.25 * (p[0] * p[0] + p[1] * p[1] + p[2] * p[2])) * sqrt_maxwellian(p, mass)
        }),
    }
}

/// Sound humps must stay clear of the periodic images up to the last time.
fn check_box(ctx: &Context) -> Result<()> {
    let t = ctx.cfg.spatial.times.last().copied().unwrap_or(0.0);
    let need = euler_speeds()[2] * t + 5.0 * t.sqrt();
    if ctx.cfg.spatial.half_length < need {
        return Err(KineticError::Config(format!(
            "box half-length {} is too small for sound waves up to t = {t}; need at least {need:.1}",
            ctx.cfg.spatial.half_length
        )));
    }
    Ok(())
}

fn grid_cmd(ctx: &Context) -> Result<()> {
    let g = &ctx.grid;
    let rows: Vec<Vec<f64>> = (0..g.len()).map(|i| {
        let p = g.point(i);
        vec![p[0], p[1], p[2], g.weights()[i]]
    }).collect();
    ctx.write("grid.csv", &to_csv(&["xi1", "xi2", "xi3", "weight"], &rows)?)?;
    let summary = json!({ "spec": g.spec(), "nodes": g.len(), "id_hash": g.id_hash() });
    ctx.write("grid.json", &to_json(&summary)?)?;
    print!("{}", to_json(&summary)?);
    Ok(())
}

fn assemble_cmd(ctx: &Context, which: PairArg) -> Result<()> {
    for pair in pairs(which) {
        let op = ctx.operator(pair)?;
        let d = diagnose(&op, &ctx.cfg.mixture, ctx.cfg.seed)?;
        let report = json!({ "pair": pair_name(pair), "dim": op.dim(), "metadata": op.metadata(), "diagnostics": d });
        ctx.write(&format!("operator-{}.json", pair_name(pair)), &to_json(&report)?)?;
        let worst = d.kernel_residuals.iter().map(|(_, r)| *r).fold(0.0, f64::max);
        println!("{}: dim {}, null residual {worst:.3e}, self-adjoint defect {:.3e}", pair_name(pair), op.dim(), d.self_adjoint_defect);
    }
    Ok(())
}

fn modes_cmd(ctx: &Context) -> Result<()> {
    let b = ctx.basis()?;
    let g = &ctx.grid;
    let rows: Vec<Vec<f64>> = (0..g.len())
        .map(|i| {
            let p = g.point(i);
            vec![p[0], p[1], p[2], b.e[0].values()[i], b.e[1].values()[i], b.e[2].values()[i], b.e_d.values()[i]]
        })
        .collect();
    ctx.write("modes.csv", &to_csv(&["xi1", "xi2", "xi3", "E1", "E2", "E3", "E_D"], &rows)?)?;
    let summary = json!({
        "speeds": macro_speeds(&b)?,
        "euler_speeds": euler_speeds(),
        "invariants": b.chi.iter().map(|(j, _)| *j).collect::<Vec<_>>(),
        "e_d_norm": b.e_d_norm,
    });
    ctx.write("modes.json", &to_json(&summary)?)?;
    print!("{}", to_json(&summary)?);
    Ok(())
}

fn dispersion_cmd(ctx: &Context, kmax: f64, nk: usize, which: PairArg) -> Result<()> {
    if !(kmax.is_finite() && kmax > 0.0) || nk == 0 {
        return Err(KineticError::Config("need kmax > 0 and nk >= 1".into()));
    }
    let pair = single_pair(which, &[Pair::Bb, Pair::Ab])?;
    let n = if pair == Pair::Bb { 3 } else { 1 };
    let op = ctx.operator(pair)?;
    let ks: Vec<f64> = (1..=nk).map(|i| kmax * i as f64 / nk as f64).collect();
    let branches = dispersion_branches(&op, &ks, n)?;
    let mut header = vec!["k".to_string()];
    for j in 1..=n {
        header.push(format!("re{j}"));
        header.push(format!("im{j}"));
    }
    let rows: Vec<Vec<f64>> = ks
        .iter()
        .enumerate()
        .map(|(i, k)| std::iter::once(*k).chain(branches.iter().flat_map(|b| [b.eigenvalues[i].re, b.eigenvalues[i].im])).collect())
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let path = ctx.write(&format!("dispersion-{}.csv", pair_name(pair)), &to_csv(&header, &rows)?)?;

    let th = long_wave_threshold(&op, n)?;
    let gap: Vec<Vec<f64>> = ks.iter().map(|k| spectral_gap(&op, *k, n, th.kappa0).map(|g| vec![*k, g])).collect::<Result<_>>()?;
    ctx.write(&format!("gap-{}.csv", pair_name(pair)), &to_csv(&["k", "gap"], &gap)?)?;
    println!("{} branches over {nk} wavenumbers -> {}; kappa0 = {:.4}", n, path.display(), th.kappa0);
    Ok(())
}

fn coeffs_cmd(ctx: &Context) -> Result<()> {
    let b = ctx.basis()?;
    let bb = ctx.operator(Pair::Bb)?;
    let ab = ctx.operator(Pair::Ab)?;
    let tc = transport_coefficients(&bb, &ab, &b)?;
    let eps: Vec<Vec<[f64; 2]>> = tc.epsilon.iter().map(|r| r.iter().map(|z| [z.re, z.im]).collect()).collect();
    let summary = json!({
        "A": tc.a,
        "a2": tc.a2,
        "epsilon": eps,
        "kappa0": { "bb": long_wave_threshold(&bb, 3)?.kappa0, "ab": long_wave_threshold(&ab, 1)?.kappa0 },
        "nu0": { "bb": bb.metadata().nu0, "ab": ab.metadata().nu0 },
    });
    ctx.write("coeffs.json", &to_json(&summary)?)?;
    print!("{}", to_json(&summary)?);
    Ok(())
}

fn evolve_cmd(ctx: &Context, which: PairArg, variants: &[String], datum: DatumArg) -> Result<()> {
    let pair = single_pair(which, &[Pair::Bb, Pair::Ab])?;
    let variants: Vec<ProfileVariant> = variants.iter().map(|v| ProfileVariant::parse(v)).collect::<Result<_>>()?;
    let b = ctx.basis()?;
    let (op, mass, speeds) = match pair {
        Pair::Ab => (ctx.operator(pair)?.compress(std::slice::from_ref(&b.e_d))?, ctx.cfg.mixture.mass_ratio(), vec![0.0]),
        _ => {
            check_box(ctx)?;
            let chis: Vec<GridFunction> = b.chi.iter().map(|(_, f)| f.clone()).collect();
            (ctx.operator(pair)?.compress(&chis)?, 1.0, euler_speeds().to_vec())
        }
    };
    let times = &ctx.cfg.spatial.times;
    let datum = Datum::new(ctx.bump(), datum_profile(&ctx.grid, datum, mass));
    let curves = evolve_variants(&op, &b, &datum, ctx.space()?, times, &variants)?;
    let name = pair_name(pair);
    for (ti, t) in times.iter().enumerate() {
        let labels: Vec<String> = std::iter::once("x".to_string()).chain(variants.iter().map(ProfileVariant::label)).collect();
        let x = &curves[0][ti].x;
        let rows: Vec<Vec<f64>> = (0..x.len()).map(|j| std::iter::once(x[j]).chain(curves.iter().map(|c| c[ti].norms[j])).collect()).collect();
        let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
        ctx.write(&format!("evolve-{name}-t{t}.csv"), &to_csv(&labels, &rows)?)?;
    }
    let mut reports = serde_json::Map::new();
    for (v, c) in variants.iter().zip(&curves) {
        let rep = fit_waves(c, &speeds)?;
        for h in &rep.humps {
            println!("{name} {}: speed {:+.4}, decay {:?}, max offset {:.3}", v.label(), h.speed, h.decay.as_ref().map(|d| d.slope), h.max_offset);
        }
        reports.insert(v.label(), serde_json::to_value(rep)?);
    }
    ctx.write(&format!("evolve-{name}.json"), &to_json(&reports)?)?;
    Ok(())
}

fn couple_cmd(ctx: &Context, datum: DatumArg) -> Result<()> {
    check_box(ctx)?;
    let b = ctx.basis()?;
    let mix = &ctx.cfg.mixture;
    let ops = CoupledOperators::new(ctx.operator(Pair::Ab)?, ctx.operator(Pair::Bb)?, ctx.operator(Pair::Ba)?)?;
    let resonance = resonance_coefficients(&ops.ab, &ops.ba, &b, ctx.cfg.seed)?;
    let ops = ops.conservative(&b, mix)?;
    let space = ctx.space()?;
    let g = Datum::new(ctx.bump(), datum_profile(&ctx.grid, datum, mix.mass_ratio())).field(space);
    let h = SpatialField::zeros(space, &ctx.grid, Representation::Physical);
    let hash = ctx.cfg.hash();
    let states = solve_coupled(&ops, &g, &h, &ctx.cfg.spatial.times, &hash)?;
    let initial = conserved_quantities(&CoupledState { g, h, t: 0.0, config_hash: hash.clone() }, mix)?;
    let ledger: Vec<_> = states.iter().map(|s| conserved_quantities(s, mix)).collect::<Result<_>>()?;
    let drift = conservation_drift(&initial, &ledger);
    let (gp, hp) = profiles(&states, &b)?;
    for (gc, hc) in gp.iter().zip(&hp) {
        let rows: Vec<Vec<f64>> = (0..gc.x.len()).map(|j| vec![gc.x[j], gc.norms[j], hc.norms[j]]).collect();
        ctx.write(&format!("couple-t{}.csv", gc.t), &to_csv(&["x", "g", "h"], &rows)?)?;
    }
    let report = verify_main_theorem(&states, &b, resonance)?;
    let summary = json!({
        "config_hash": hash,
        "drift": drift,
        "drift_tolerance": DRIFT_TOL,
        "drift_ok": drift.iter().all(|d| *d <= DRIFT_TOL),
        "conserved": ledger,
        "report": report,
    });
    ctx.write("couple.json", &to_json(&summary)?)?;
    for h in &report.h.humps {
        println!("h: speed {:+.4}, decay {:?}, max offset {:.3}", h.speed, h.decay.as_ref().map(|d| d.slope), h.max_offset);
    }
    println!("conservation drift {:.3e} {:.3e} {:.3e}", drift[0], drift[1], drift[2]);
    Ok(())
}

fn speed_checks(ctx: &Context) -> Result<Vec<Check>> {
    let s = macro_speeds(&ctx.basis()?)?;
    let err = s.iter().zip(euler_speeds()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(vec![Check::at_most("sound-speeds", "eigenvalues of P0 xi1 P0 vs -+sqrt(5/3), 0", err, ctx.cfg.tolerances.sound_speed)])
}

fn operator_checks(ctx: &Context) -> Result<Vec<Check>> {
    let tol = &ctx.cfg.tolerances;
    let mut out = Vec::new();
    for pair in [Pair::Bb, Pair::Ab] {
        let name = pair_name(pair);
        let d = diagnose(&ctx.operator(pair)?, &ctx.cfg.mixture, ctx.cfg.seed)?;
        for (chi, r) in &d.kernel_residuals {
            out.push(Check::at_most(&format!("{name}-null-{chi}"), "null-space residual", *r, tol.null_residual));
        }
        out.push(Check::at_most(&format!("{name}-self-adjoint"), "self-adjointness defect", d.self_adjoint_defect, tol.self_adjoint));
        out.push(Check::above(&format!("{name}-coercivity"), "micro-space coercivity nu0", d.coercivity, 0.0));
    }
    Ok(out)
}

fn transport_checks(ctx: &Context) -> Result<Vec<Check>> {
    let tol = ctx.cfg.tolerances.coefficient_fit;
    let b = ctx.basis()?;
    let bb = ctx.operator(Pair::Bb)?;
    let ab = ctx.operator(Pair::Ab)?;
    let tc = transport_coefficients(&bb, &ab, &b)?;
    let a = tc.a;
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
    let mut out = vec![Check::at_most("ns-symmetry", "|A1 - A3| / |A3|", rel(a[0], a[2]), SYMMETRY_TOL)];
    for (j, v) in a.iter().enumerate() {
        out.push(Check::above(&format!("ns-sign-{}", j + 1), &format!("-A{}", j + 1), -v, 0.0));
    }
    out.push(Check::above("diffusion-sign", "a2", tc.a2, 0.0));
    let ks: Vec<f64> = (0..13).map(|i| 1e-3 * 10f64.powf(i as f64 / 6.0)).collect();
    for (j, br) in dispersion_branches(&bb, &ks, 3)?.iter().enumerate() {
        let fit = fit_branch(br, 0.05)?;
        out.push(Check::at_most(&format!("ns-fit-{}", j + 1), "branch curvature fit vs A_j", rel(fit.second_order, a[j]), tol));
    }
    let ks: Vec<f64> = (1..=8).map(|i| 0.01 * i as f64).collect();
    let fit = fit_branch(&dispersion_branches(&ab, &ks, 1)?[0], 0.08)?;
    out.push(Check::at_most("diffusion-fit", "AB branch curvature fit vs -a2", rel(fit.second_order, -tc.a2), tol));
    Ok(out)
}

fn conservation_checks(ctx: &Context) -> Result<Vec<Check>> {
    let tol = &ctx.cfg.tolerances;
    let mut out = Vec::new();
    for pair in [Pair::Bb, Pair::Ab] {
        let d = diagnose(&ctx.operator(pair)?, &ctx.cfg.mixture, ctx.cfg.seed)?;
        for ((chi, _), r) in d.kernel_residuals.iter().zip(&d.conservation_residuals) {
            out.push(Check::at_most(&format!("{}-conserves-{chi}", pair_name(pair)), "|(L f, chi)| / (|f| |chi|)", *r, tol.null_residual));
        }
    }
    if ctx.grid.mode() == kinetic_core::GridMode::AxisymM0 {
        let ab = ctx.operator(Pair::Ab)?;
        let ba = ctx.operator(Pair::Ba)?;
        let id = conservation_identity_residual(&ab, &ba, &ctx.cfg.mixture, &trial_functions(&ctx.grid, 16, ctx.cfg.seed))?;
        out.push(Check::at_most("cross-conservation", "mass-weighted cross-species conservation identity", id.mass_weighted, tol.conservation));
    }
    Ok(out)
}

fn cross_checks(ctx: &Context) -> Result<Vec<Check>> {
    let tol = &ctx.cfg.tolerances;
    let b = ctx.basis()?;
    let ab = ctx.operator(Pair::Ab)?;
    let ba = ctx.operator(Pair::Ba)?;
    let res = resonance_coefficients(&ab, &ba, &b, ctx.cfg.seed)?;
    let id = conservation_identity_residual(&ab, &ba, &ctx.cfg.mixture, &trial_functions(&ctx.grid, 16, ctx.cfg.seed))?;
    let [c1, c3] = res.e13_coefficients;
    Ok(vec![
        Check::at_most("cancellation", "|L_BA E_D| / |L_BA|", res.relative_cancellation, tol.cancellation),
        Check::at_most("cross-conservation", "mass-weighted cross-species conservation identity", id.mass_weighted, tol.conservation),
        Check::at_most("resonance", "|c2| / (|c1| + |c3|)", res.e2_coefficient / (c1 + c3), tol.resonance),
        Check::at_most("oddness", "even part of L_BA L_AB^-1 on odd data", res.oddness_defect, tol.oddness),
    ])
}

fn suite_name(s: Suite) -> &'static str {
    match s {
        Suite::Speeds => "speeds",
        Suite::Operator => "operator",
        Suite::Transport => "transport",
        Suite::Conservation => "conservation",
        Suite::Cross => "cross",
        Suite::All => "all",
    }
}

fn verify_cmd(ctx: &Context, suite: Suite, format: FormatArg) -> Result<bool> {
    let checks = match suite {
        Suite::Speeds => speed_checks(ctx)?,
        Suite::Operator => operator_checks(ctx)?,
        Suite::Transport => transport_checks(ctx)?,
        Suite::Conservation => conservation_checks(ctx)?,
        Suite::Cross => cross_checks(ctx)?,
        Suite::All => {
            let mut all = speed_checks(ctx)?;
            all.extend(operator_checks(ctx)?);
            all.extend(transport_checks(ctx)?);
            all.extend(conservation_checks(ctx)?);
            all.extend(cross_checks(ctx)?);
            let mut seen = std::collections::HashSet::new();
            all.retain(|c| seen.insert(c.id.clone()));
            all
        }
    };
    let name = suite_name(suite);
    let report = VerificationReport::new(name, &ctx.cfg.hash(), checks);
    let (fmt, ext) = match format {
        FormatArg::Json => (ReportFormat::Json, "json"),
        FormatArg::Csv => (ReportFormat::Csv, "csv"),
    };
    emit_report(&report, fmt, &ctx.out.join(format!("verify-{name}.{ext}")))?;
    for c in &report.checks {
        println!("{} {}: {:.3e} (tolerance {:.1e})", if c.pass { "PASS" } else { "FAIL" }, c.id, c.measured, c.tolerance);
    }
    Ok(report.passed)
}

fn exit_code(e: &KineticError) -> u8 {
    match e {
        KineticError::Config(_)
        | KineticError::Resolution { .. }
        | KineticError::GridMismatch
        | KineticError::TooLarge { .. }
        | KineticError::Aliasing(_)
        | KineticError::Cache(_)
        | KineticError::Io(_)
        | KineticError::Json(_) => 2,
        _ => 4,
    }
}

fn run(cli: &Cli) -> Result<u8> {
    let ctx = Context::new(cli)?;
    match &cli.command {
        Command::Grid => grid_cmd(&ctx)?,
        Command::Assemble { pair } => assemble_cmd(&ctx, *pair)?,
        Command::Modes => modes_cmd(&ctx)?,
        Command::Dispersion { kmax, nk, pair } => dispersion_cmd(&ctx, *kmax, *nk, *pair)?,
        Command::Coeffs => coeffs_cmd(&ctx)?,
        Command::Evolve { pair, variants, datum } => evolve_cmd(&ctx, *pair, variants, *datum)?,
        Command::Couple { datum } => couple_cmd(&ctx, *datum)?,
        Command::Verify { suite, format } => return Ok(if verify_cmd(&ctx, *suite, *format)? { 0 } else { 3 }),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    #[test]
    fn argument_parsing() {
        let cli = Cli::try_parse_from(["kinetic", "dispersion", "--kmax", "0.3", "--nk", "5", "--out", "x"]).unwrap();
        assert!(matches!(cli.command, Command::Dispersion { nk: 5, .. }));
        assert_eq!(cli.out.as_deref(), Some(Path::new("x")));
        assert!(Cli::try_parse_from(["kinetic", "coeffs", "--bogus"]).is_err());
        assert!(Cli::try_parse_from(["kinetic", "verify"]).is_err());
    }

    #[test]
    fn errors_map_to_exit_codes() {
        assert_eq!(exit_code(&KineticError::Config("x".into())), 2);
        assert_eq!(exit_code(&KineticError::Numerical("x".into())), 4);
        assert_eq!(exit_code(&KineticError::BranchAmbiguity { k: 0.1, overlap: 0.2 }), 4);
    }

    #[test]
    fn single_pair_rejects_all() {
        assert!(single_pair(PairArg::All, &[Pair::Bb]).is_err());
        assert!(single_pair(PairArg::Ba, &[Pair::Bb, Pair::Ab]).is_err());
        assert_eq!(single_pair(PairArg::Ab, &[Pair::Bb, Pair::Ab]).unwrap(), Pair::Ab);
    }
}
