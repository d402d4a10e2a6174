//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so the criteria execute in a
//! fixed order and share the trained networks.

use std::f64::consts::TAU;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use secirs::ao::phase_gradient;
use secirs::beamform::mrt_no_irs;
use secirs::channel::{complex_gaussian, derive_seed, rng_from_seed, sample_large_scale, sample_legit, SimRng};
use secirs::neuralphase::{train, EpochRecord, PlateauScheduler, SchedulerStep, TrainConfig, TrainOutcome};
use secirs::numerics::{hermitian_eig_max, CVec, Complex64};
use secirs::secrecy::{lower_bound_no_irs, objective, QuotientTerms};
use secirs::{optimal_beam, Beamformer, ChannelRealization, Method, PhaseConfig, SystemParams};
use secirs_cli::commands::training_sets;
use secirs_cli::{bench_time, sweep, validate_mc, ExperimentConfig, Networks, SweepRow, SweepVar};

const NS_GRID: [usize; 5] = [16, 24, 32, 40, 48];
const RS_GRID: [f64; 6] = [2.0, 2.5, 3.0, 3.5, 4.0, 4.5];
const REALIZATIONS: usize = 200;

struct Report {
    lines: Vec<(bool, String)>,
    extra: Vec<String>,
}

impl Report {
    fn record(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        let line = format!("{} [{id:>2}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        println!("{line}");
        self.lines.push((pass, line));
    }
}

// ---- independent oracles -------------------------------------------------

type Rows = Vec<Vec<Complex64>>;

fn rows_of(m: &secirs::CMat) -> Rows {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn apply(a: &Rows, x: &[Complex64]) -> Vec<Complex64> {
    a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

fn energy(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// `(H_b + G_r diag(e^{j theta}) H) b`, summed element by element.
fn received(real: &ChannelRealization, theta: &[f64], b: &[Complex64]) -> Vec<Complex64> {
    let mut y = apply(&rows_of(&real.h_b), b);
    let hb = apply(&rows_of(&real.h), b);
    for (n, &t) in theta.iter().enumerate() {
        let e = Complex64::from_polar(1.0, t) * hb[n];
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += real.g_r.get(i, n) * e;
        }
    }
    y
}

/// `phi / (beta_d^2 + beta_r^2 ||Theta H b||^2)` with `phi` expanded as
/// `sigma_e^2 ((1 + P_t g / sigma^2) 2^{-R_s} - 1) / P_t`.
fn ratio_form(real: &ChannelRealization, theta: &[f64], b: &[Complex64], p: &SystemParams) -> f64 {
    let g = energy(&received(real, theta, b));
    let phi = p.sigma2_e * ((1.0 + p.p_t * g / p.sigma2) / p.r_s.exp2() - 1.0) / p.p_t;
    let thb: Vec<Complex64> = apply(&rows_of(&real.h), b)
        .iter()
        .zip(theta)
        .map(|(v, &t)| Complex64::from_polar(1.0, t) * v)
        .collect();
    phi / (p.beta_d.powi(2) + p.beta_r.powi(2) * energy(&thb))
}

fn gamma_q(m: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let (mut term, mut sum) = (1.0, 1.0);
    for k in 1..m {
        term *= x / k as f64;
        sum += term;
    }
    (-x).exp() * sum
}

fn unit(rng: &mut SimRng, n: usize) -> CVec {
    CVec::new((0..n).map(|_| complex_gaussian(rng)).collect())
        .unwrap()
        .normalized()
        .unwrap()
}

struct Case {
    p: SystemParams,
    real: ChannelRealization,
    phase: PhaseConfig,
    beam: Beamformer,
}

fn case(seed: u64) -> Case {
    let mut rng = rng_from_seed(derive_seed(seed, 0xACC, 0));
    let (d, r) = sample_large_scale(derive_seed(seed, 0xACC, 1));
    let n_s = [8, 16, 32, 48][rng.gen_range(0..4)];
    let mut p = SystemParams::reference(n_s).with_large_scale(d, r);
    p.n_e = [1, 2, 4][rng.gen_range(0..3)];
    p.p_t = 10f64.powf(rng.gen_range(0.0..2.0));
    p.r_s = rng.gen_range(0.5..4.5);
    let real = sample_legit(&p, derive_seed(seed, 0xACC, 2));
    let phase = PhaseConfig::random(&mut rng, n_s);
    let beam = Beamformer::new(unit(&mut rng, p.n_t)).unwrap();
    Case { p, real, phase, beam }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

// ---- analytic criteria ---------------------------------------------------

fn closed_form_vs_monte_carlo(rep: &mut Report) {
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let rows = validate_mc(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    // Recheck the closed form itself against the Poisson sum.
    let mut oracle_ok = true;
    for r in &rows {
        let c = secirs_cli::experiments::mc_case(cfg.seed, r.index).unwrap();
        let v = ratio_form(&c.real, c.phase.theta(), c.beam.b().data(), &c.params);
        oracle_ok &= (gamma_q(c.params.n_e, v) - r.p_closed).abs() <= 1e-10;
    }
    let worst = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let pass = rows.len() >= 20 && rows.iter().all(|r| r.pass()) && oracle_ok && secs <= 120.0;
    rep.record(
        1,
        "closed-form outage vs Monte Carlo",
        pass,
        format!(
            "{} configs, {} draws, worst |diff|/band {worst:.3}, closed form matches oracle: {oracle_ok}, {secs:.1} s",
            rows.len(),
            cfg.validate_mc_draws
        ),
    );
}

fn dual_form_identity(rep: &mut Report) {
    let mut worst: f64 = 0.0;
    let mut errors = 0;
    for seed in 0..1000 {
        let c = case(seed);
        let quotient = QuotientTerms::new(&c.real, &c.phase, &c.p).evaluate(c.beam.b());
        let ratio = ratio_form(&c.real, c.phase.theta(), c.beam.b().data(), &c.p);
        worst = worst.max(rel(quotient, ratio));
        if objective(&c.real, &c.phase, &c.beam, &c.p).is_err() {
            errors += 1;
        }
    }
    rep.record(
        2,
        "objective ratio form equals quotient form",
        worst <= 1e-10 && errors == 0,
        format!("1000 instances, worst relative gap {worst:.2e}, internal check failures {errors}"),
    );
}

fn beam_optimality(rep: &mut Report) {
    let mut rng = rng_from_seed(0xBEA);
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..100 {
        let c = case(seed + 5000);
        let terms = QuotientTerms::new(&c.real, &c.phase, &c.p);
        let best = optimal_beam(&c.real, &c.phase, &c.p).unwrap();
        let top = terms.evaluate(best.b());
        let scale = top.abs().max(1.0);
        let a = c.real.effective(&c.phase.phases());
        let mrt = hermitian_eig_max(&a.gram()).unwrap().vector;
        let mut challenger = terms.evaluate(&mrt);
        for _ in 0..1000 {
            challenger = challenger.max(terms.evaluate(&unit(&mut rng, c.p.n_t)));
        }
        worst = worst.max((challenger - top) / scale);
    }
    rep.record(
        3,
        "closed-form precoder dominates random and MRT precoders",
        worst <= 1e-9,
        format!("100 instances x 1000 random + MRT, worst excess {worst:.2e} (relative)"),
    );
}

fn denominator_invariance(rep: &mut Report) {
    let mut rng = rng_from_seed(0xD1);
    let mut worst: f64 = 0.0;
    for seed in 0..1000 {
        let c = case(seed + 9000);
        let theta: Vec<f64> = (0..c.p.n_s).map(|_| rng.gen_range(0.0..TAU)).collect();
        let hb = apply(&rows_of(&c.real.h), c.beam.b().data());
        let rotated: Vec<Complex64> = hb.iter().zip(&theta).map(|(v, &t)| Complex64::from_polar(1.0, t) * v).collect();
        worst = worst.max(rel(energy(&rotated).sqrt(), energy(&hb).sqrt()));
    }
    rep.record(
        4,
        "reflection phases leave the eavesdropper scale unchanged",
        worst <= 1e-12,
        format!("1000 random phase sets, worst relative gap {worst:.2e}"),
    );
}

fn gradient_check(rep: &mut Report) {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let c = case(seed + 20_000);
        let beam = optimal_beam(&c.real, &c.phase, &c.p).unwrap();
        let grad = phase_gradient(&c.real, &c.phase, &beam, &c.p);
        let theta = c.phase.theta();
        let f = |t: &[f64]| ratio_form(&c.real, t, beam.b().data(), &c.p);
        let (mut err, mut norm) = (0.0, 0.0);
        for (n, g) in grad.iter().enumerate() {
            let mut up = theta.to_vec();
            up[n] += h;
            let mut down = theta.to_vec();
            down[n] -= h;
            let fd = (f(&up) - f(&down)) / (2.0 * h);
            err += (fd - g).powi(2);
            norm += g * g;
        }
        worst = worst.max(err.sqrt() / norm.sqrt().max(f64::MIN_POSITIVE));
    }
    rep.record(
        5,
        "analytic phase gradient vs central differences",
        worst <= 1e-6,
        format!("100 instances, h = 1e-6, worst relative error {worst:.2e}"),
    );
}

fn no_irs_bound(rep: &mut Report) {
    let mut violations = 0;
    let mut worst_gap: f64 = 0.0;
    for seed in 0..1000 {
        let c = case(seed + 30_000);
        let bound = lower_bound_no_irs(&c.real.h_b, &c.p).unwrap();
        let p_out = mrt_no_irs(&c.real.h_b, &c.p).unwrap().eval.p_out;
        if bound > p_out + 1e-15 {
            violations += 1;
        }
        let high = SystemParams { p_t: 1e6 * c.p.sigma2_e, ..c.p };
        let gap = mrt_no_irs(&c.real.h_b, &high).unwrap().eval.p_out - lower_bound_no_irs(&c.real.h_b, &high).unwrap();
        worst_gap = worst_gap.max(gap);
    }
    rep.record(
        6,
        "no-IRS lower bound holds and is tight at 60 dB",
        violations == 0 && worst_gap <= 1e-3,
        format!("1000 instances, violations {violations}, worst gap at 60 dB {worst_gap:.2e}"),
    );
}

// ---- learned and simulated criteria ----------------------------------------

struct Trained {
    nets: Networks,
    outcomes: Vec<(usize, TrainOutcome, f64)>,
}

fn base_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.realizations = REALIZATIONS;
    cfg.mc_draws = 200;
    cfg
}

fn train_networks(cfg: &ExperimentConfig) -> Trained {
    let mut nets = Networks::new();
    let mut outcomes = Vec::new();
    for &n_s in &NS_GRID {
        let start = Instant::now();
        let local = ExperimentConfig { n_s, ..cfg.clone() };
        let (train_set, val_set) = training_sets(&local);
        let outcome = train(local.arch(n_s), &train_set, &val_set, &local.train).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let m = &outcome.checkpoint.meta;
        println!(
            "     trained N_s = {n_s}: val loss {:.4} -> {:.4} (best epoch {} of {}), {secs:.0} s",
            outcome.curve[0].val_loss, m.best_val_loss, m.best_epoch, m.epochs_run
        );
        nets.insert(outcome.checkpoint.model.clone());
        outcomes.push((n_s, outcome, secs));
    }
    Trained { nets, outcomes }
}

fn mean_of(rows: &[SweepRow], method: Method, grid: f64) -> f64 {
    rows.iter()
        .find(|r| r.method == method && r.grid_value == grid)
        .map(|r| r.mean_p_out_closed)
        .expect("row present")
}

fn ordering(rep: &mut Report, cfg: &ExperimentConfig, trained: &Trained) {
    let start = Instant::now();
    let mut local = cfg.clone();
    local.grid = vec![48.0];
    let rows = sweep(&local, &trained.nets).unwrap();
    let eval_secs = start.elapsed().as_secs_f64();
    let train_secs = trained.outcomes.iter().find(|o| o.0 == 48).map(|o| o.2).unwrap_or(0.0);
    let ao = mean_of(&rows, Method::Ao, 48.0);
    let nn = mean_of(&rows, Method::Neural, 48.0);
    let rp = mean_of(&rows, Method::RandomPhase, 48.0);
    let ni = mean_of(&rows, Method::MrtNoIrs, 48.0);
    let total = eval_secs + train_secs;
    let pass = ao <= nn + 0.05 && nn + 0.05 <= rp && rp <= ni + 0.02 && total <= 1800.0;
    rep.record(
        7,
        "method ordering at N_s = 48",
        pass,
        format!(
            "ao {ao:.4}, neural {nn:.4}, random {rp:.4}, no-IRS {ni:.4} over {} realizations; \
             ao <= nn+0.05: {}, nn+0.05 <= random: {}, random <= no-IRS+0.02: {}; {total:.0} s incl. training",
            local.realizations,
            ao <= nn + 0.05,
            nn + 0.05 <= rp,
            rp <= ni + 0.02
        ),
    );
}

/// Adjacent-pair violations of the trend (`sign` = -1 for non-increasing).
fn trend_ok(values: &[f64], sign: f64) -> (bool, f64, usize) {
    let bad: Vec<f64> = values
        .windows(2)
        .map(|w| sign * (w[1] - w[0]))
        .filter(|d| *d < 0.0)
        .map(|d| -d)
        .collect();
    let worst = bad.iter().copied().fold(0.0, f64::max);
    (bad.is_empty() || (bad.len() == 1 && worst <= 0.01), worst, bad.len())
}

fn trends(rep: &mut Report, cfg: &ExperimentConfig, trained: &Trained) {
    let mut detail = Vec::new();
    let mut pass = true;

    let mut ns = ExperimentConfig::for_sweep(SweepVar::Ns);
    ns.realizations = cfg.realizations;
    ns.mc_draws = cfg.mc_draws;
    ns.methods = vec![Method::Ao, Method::Neural];
    let rows = sweep(&ns, &trained.nets).unwrap();
    for m in [Method::Ao, Method::Neural] {
        let v: Vec<f64> = NS_GRID.iter().map(|&n| mean_of(&rows, m, n as f64)).collect();
        let (ok, worst, count) = trend_ok(&v, -1.0);
        pass &= ok;
        detail.push(format!("{m} vs N_s {} ({count} rises, worst {worst:.4})", fmt(&v)));
    }

    let mut rs = ExperimentConfig::for_sweep(SweepVar::Rs);
    rs.realizations = cfg.realizations;
    rs.mc_draws = cfg.mc_draws;
    rs.grid = RS_GRID.to_vec();
    let rows = sweep(&rs, &trained.nets).unwrap();
    for m in [Method::MrtNoIrs, Method::RandomPhase, Method::Ao, Method::Neural] {
        let v: Vec<f64> = RS_GRID.iter().map(|&r| mean_of(&rows, m, r)).collect();
        let (ok, worst, count) = trend_ok(&v, 1.0);
        pass &= ok;
        detail.push(format!("{m} vs R_s {} ({count} drops, worst {worst:.4})", fmt(&v)));
    }
    rep.record(8, "monotone trends in N_s and R_s", pass, detail.join("; "));
}

/// Supplementary: mean outage varies little with SNR at fixed R_s.
fn snr_insensitivity(rep: &mut Report, cfg: &ExperimentConfig, trained: &Trained) {
    let mut snr = ExperimentConfig::for_sweep(SweepVar::SnrDb);
    snr.realizations = cfg.realizations;
    snr.mc_draws = cfg.mc_draws;
    let rows = sweep(&snr, &trained.nets).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for m in snr.methods.iter().copied() {
        let v: Vec<f64> = snr.grid.iter().map(|&g| mean_of(&rows, m, g)).collect();
        // Largest rise from any SNR point to any higher one.
        let worse = v
            .iter()
            .enumerate()
            .flat_map(|(i, a)| v[i + 1..].iter().map(move |b| b - a))
            .fold(0.0, f64::max);
        pass &= worse <= 0.05;
        detail.push(format!("{m} vs SNR {} (largest rise {worse:.4})", fmt(&v)));
    }
    let line = format!("{} [ S] SNR insensitivity (supplementary): {}", if pass { "PASS" } else { "FAIL" }, detail.join("; "));
    println!("{line}");
    rep.extra.push(line);
}

fn fmt(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" "))
}

fn timing(rep: &mut Report, cfg: &ExperimentConfig, trained: &Trained) {
    let mut local = ExperimentConfig::for_sweep(SweepVar::Ns);
    local.methods = vec![Method::Neural, Method::Ao];
    local.timing_solves = 20;
    local.seed = cfg.seed;
    let rows = bench_time(&local, &trained.nets).unwrap();
    let per = |m: Method, n: usize| {
        rows.iter()
            .find(|r| r.method == m && r.n_s == n)
            .map(|r| r.per_solve_seconds)
            .unwrap()
    };
    let nn: Vec<f64> = NS_GRID.iter().map(|&n| per(Method::Neural, n)).collect();
    let spread = nn.iter().copied().fold(0.0, f64::max) / nn.iter().copied().fold(f64::INFINITY, f64::min);
    let ao_ratio = per(Method::Ao, 48) / per(Method::Ao, 16);
    rep.record(
        9,
        "solve-time trends",
        spread <= 2.0 && ao_ratio >= 2.0,
        format!(
            "neural per-solve ms {} (max/min {spread:.2}, needs <= 2); ao N_s 48 / 16 = {ao_ratio:.2} (needs >= 2)",
            fmt(&nn.iter().map(|s| s * 1e3).collect::<Vec<_>>())
        ),
    );
}

fn schedule_consistent(curve: &[EpochRecord], cfg: &TrainConfig, best_epoch: usize, epochs_run: usize, early: bool) -> bool {
    // Replay the validation losses through a fresh scheduler.
    let mut s = PlateauScheduler::new(cfg.initial_lr, cfg.plateau_decay_factor, cfg.plateau_patience, cfg.early_stop_patience);
    let mut stopped_at = None;
    for r in curve {
        if (r.lr - s.lr).abs() > 1e-15 * s.lr {
            return false;
        }
        if s.step(r.val_loss) == SchedulerStep::Stop {
            stopped_at = Some(r.epoch);
            break;
        }
    }
    let lr_steps_ok = curve.windows(2).all(|w| {
        let q = w[1].lr / w[0].lr;
        q == 1.0 || (q - cfg.plateau_decay_factor).abs() < 1e-12
    });
    let stop_ok = match stopped_at {
        Some(e) => early && e == epochs_run && epochs_run <= best_epoch + cfg.early_stop_patience,
        None => !early && epochs_run == cfg.max_epochs,
    };
    lr_steps_ok && stop_ok
}

fn training_progress(rep: &mut Report, trained: &Trained, cfg: &TrainConfig) {
    let mut unit_ok = true;
    let mut s = PlateauScheduler::new(0.01, 0.3, 2, 4);
    unit_ok &= s.step(1.0) == SchedulerStep::Improved;
    unit_ok &= s.step(1.0) == SchedulerStep::NoImprovement;
    unit_ok &= s.step(1.0) == SchedulerStep::ReducedLr && (s.lr - 0.003).abs() < 1e-15;
    unit_ok &= s.step(0.5) == SchedulerStep::Improved;
    unit_ok &= s.step(0.6) == SchedulerStep::NoImprovement;
    unit_ok &= s.step(0.6) == SchedulerStep::ReducedLr;
    unit_ok &= s.step(0.6) == SchedulerStep::NoImprovement;
    unit_ok &= s.step(0.6) == SchedulerStep::Stop;

    let (_, out, _) = trained.outcomes.iter().find(|o| o.0 == 16).unwrap();
    let m = &out.checkpoint.meta;
    let improved = m.best_val_loss < out.curve[0].val_loss;
    let early = out.stop == secirs::neuralphase::StopReason::EarlyStop;
    let contract = schedule_consistent(&out.curve, cfg, m.best_epoch, m.epochs_run, early);
    let decays = out.curve.windows(2).filter(|w| w[1].lr < w[0].lr).count();
    rep.record(
        10,
        "training reduces validation loss and follows the schedule",
        unit_ok && improved && contract && (decays > 0 || early || m.epochs_run == cfg.max_epochs),
        format!(
            "N_s = 16, {}/{} samples: val loss {:.4} -> {:.4}, {} epochs, {decays} LR decays, early stop {early}, \
             schedule replay ok {contract}, scheduler unit checks {unit_ok}",
            cfg.train_size,
            cfg.val_size,
            out.curve[0].val_loss,
            m.best_val_loss,
            m.epochs_run
        ),
    );
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut rep = Report { lines: Vec::new(), extra: Vec::new() };
    closed_form_vs_monte_carlo(&mut rep);
    dual_form_identity(&mut rep);
    beam_optimality(&mut rep);
    denominator_invariance(&mut rep);
    gradient_check(&mut rep);
    no_irs_bound(&mut rep);

    let cfg = base_config();
    let trained = train_networks(&cfg);
    ordering(&mut rep, &cfg, &trained);
    trends(&mut rep, &cfg, &trained);
    timing(&mut rep, &cfg, &trained);
    training_progress(&mut rep, &trained, &cfg.train);
    snr_insensitivity(&mut rep, &cfg, &trained);

    let failed = rep.lines.iter().filter(|l| !l.0).count();
    println!("\nacceptance summary ({:.0} s):", start.elapsed().as_secs_f64());
    for (_, line) in &rep.lines {
        println!("  {line}");
    }
    for line in &rep.extra {
        println!("  {line}");
    }
    if failed == 0 {
        println!("all {} criteria passed", rep.lines.len());
        ExitCode::SUCCESS
    } else {
        println!("{failed} of {} criteria failed", rep.lines.len());
        ExitCode::FAILURE
    }
}
