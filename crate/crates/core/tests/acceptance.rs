//! Acceptance criteria 1-8. Prints one line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criteria 4, 6 and 7 need the averaged gray-matter brain curves as a CSV
//! (`mode,control,stress_kpa`). The file is taken from `LPCANN_BRAIN_CSV`,
//! falling back to `data/brain_gray_matter.csv` at the workspace root.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lpcann::dataio::{generate_synthetic, read_csv, Dataset, SyntheticRanges};
use lpcann::discovery::{
    calibrate_alpha, crossover_from_losses, enumerate_best_in_class, loss_landscape_grid, lp_sweep, mask_seed,
    prefers_larger, DiscoveryConfig, GridAxis, SubsetReport, SweepConfig, DEFAULT_FROZEN_EXPONENTS,
};
use lpcann::kinematics::LoadMode;
use lpcann::model::{stress, ModelFamily, ParamVector, TermMask, N_TERMS};
use lpcann::objective::{
    data_loss, loss_gradient, penalty, total_loss, LossSpec, Normalization, PenaltyConfig, Reduction,
};
use lpcann::optimizer::{fit, multi_restart_fit, AdamConfig, InitStrategy};

const CORNER_POWERS: [f64; 8] = [0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 4.0, 8.0];
const PUBLISHED_CORNER_ALPHAS: [f64; 8] = [4.69, 3.94, 3.31, 2.79, 1.97, 1.39, 0.35, 0.02];
const PUBLISHED_GRID_MINIMA: [f64; 8] = [5.83, 5.56, 5.24, 4.82, 3.25, 2.22, 0.57, 0.04];

/// Loss used wherever published loss values are compared: max-stress
/// normalization with squared residuals summed per protocol.
fn published_spec() -> LossSpec {
    LossSpec::new(Normalization::MaxStress, Reduction::Sum)
}

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

fn synthetic(params: &ParamVector) -> Dataset {
    generate_synthetic(params, &SyntheticRanges::default(), 10, None).unwrap()
}

fn brain_data() -> Result<Dataset, String> {
    let path = std::env::var_os("LPCANN_BRAIN_CSV").map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/brain_gray_matter.csv")
    });
    if !path.exists() {
        return Err(format!("blocked: brain dataset not found at {} (set LPCANN_BRAIN_CSV)", path.display()));
    }
    read_csv(&path).map_err(|e| format!("blocked: {e}"))
}

/// Relative tolerance, widened to half a unit of the last printed digit.
fn matches_printed(value: f64, printed: f64, rel: f64, decimals: i32) -> bool {
    let half_ulp = 0.5 * 10f64.powi(-decimals);
    (value - printed).abs() <= (rel * printed.abs()).max(half_ulp)
}

fn criterion_1() -> Outcome {
    let data = synthetic(&ParamVector::mooney_rivlin(1.0, 1.0));
    let r = fit(
        ModelFamily::MooneyRivlin,
        ModelFamily::MooneyRivlin.full_mask(),
        &data,
        LossSpec::normalized(),
        &PenaltyConfig::none(),
        &AdamConfig::default(),
        &InitStrategy::UniformRandom,
    );
    match r {
        Ok(f) => {
            let (w1, w5) = (f.params.amplitudes[0], f.params.amplitudes[4]);
            let pass = (w1 - 1.0).abs() < 1e-3 && (w5 - 1.0).abs() < 1e-3 && f.loss.data() < 1e-8;
            Outcome::new(pass, format!("w1={w1:.6} w5={w5:.6} loss={:.3e}", f.loss.data()))
        }
        Err(e) => Outcome::new(false, format!("fit failed: {e}")),
    }
}

fn criterion_2() -> Outcome {
    let mut worst_min = 0.0_f64;
    let mut failures = Vec::new();
    let mut count = 0;
    for family in [ModelFamily::Invariant8, ModelFamily::Stretch8] {
        for mask in TermMask::combinations(2) {
            let t = mask.term_list();
            let mut amps = [0.0; N_TERMS];
            amps[t[0]] = 1.0;
            amps[t[1]] = 1.0;
            let truth = match family {
                ModelFamily::Invariant8 => ParamVector::invariant(amps, DEFAULT_FROZEN_EXPONENTS),
                _ => ParamVector::stretch(amps),
            };
            let data = synthetic(&truth);
            let grid = loss_landscape_grid(
                family,
                GridAxis { term: t[0], min: 0.0, max: 2.0 },
                GridAxis { term: t[1], min: 0.0, max: 2.0 },
                &data,
                101,
                &PenaltyConfig::none(),
                None,
                LossSpec::normalized(),
            );
            count += 1;
            match grid {
                Ok(g) => {
                    let (a, b) = g.argmin;
                    worst_min = worst_min.max(g.min);
                    if a.abs_diff(50) > 1 || b.abs_diff(50) > 1 || !(g.min < 1e-6) {
                        failures.push(format!("{family}{mask} argmin ({a},{b}) min {:.3e}", g.min));
                    }
                }
                Err(e) => failures.push(format!("{family}{mask}: {e}")),
            }
        }
    }
    let detail = if failures.is_empty() {
        format!("{count} grids, all argmin at (1,1), largest min {worst_min:.2e}")
    } else {
        format!("{} of {count} grids off: {}", failures.len(), failures.join("; "))
    };
    Outcome::new(failures.is_empty(), detail)
}

fn criterion_3() -> Outcome {
    let data = synthetic(&ParamVector::mooney_rivlin(1.0, 1.0));
    let corner = ParamVector::mooney_rivlin(2.0, 2.0);
    let mask = ModelFamily::MooneyRivlin.full_mask();
    let mut alphas = Vec::new();
    let mut minima = Vec::new();
    for p in CORNER_POWERS {
        let alpha = match calibrate_alpha(ModelFamily::MooneyRivlin, mask, &data, p, &corner, published_spec()) {
            Ok(a) => a,
            Err(e) => return Outcome::new(false, format!("calibration failed at p={p}: {e}")),
        };
        let grid = loss_landscape_grid(
            ModelFamily::MooneyRivlin,
            GridAxis { term: 0, min: 0.0, max: 2.0 },
            GridAxis { term: 4, min: 0.0, max: 2.0 },
            &data,
            201,
            &PenaltyConfig::new(p, alpha),
            None,
            published_spec(),
        );
        match grid {
            Ok(g) => minima.push(g.min),
            Err(e) => return Outcome::new(false, format!("grid failed at p={p}: {e}")),
        }
        alphas.push(alpha);
    }
    let alpha_ok = alphas.iter().zip(PUBLISHED_CORNER_ALPHAS).all(|(a, r)| matches_printed(*a, r, 0.02, 2));
    let min_ok = minima.iter().zip(PUBLISHED_GRID_MINIMA).all(|(m, r)| matches_printed(*m, r, 0.02, 2));
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    Outcome::new(alpha_ok && min_ok, format!("alpha=[{}] minima=[{}]", fmt(&alphas), fmt(&minima)))
}

fn criterion_4() -> Outcome {
    let data = match brain_data() {
        Ok(d) => d,
        Err(e) => return Outcome::new(false, e),
    };
    let cfg = DiscoveryConfig { spec: published_spec(), ..DiscoveryConfig::default() };
    let one = enumerate_best_in_class(ModelFamily::Invariant8, &data, 1, 0.0, &cfg);
    let two = enumerate_best_in_class(ModelFamily::Invariant8, &data, 2, 0.0, &cfg);
    let (one, two) = match (one, two) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Outcome::new(false, format!("enumeration failed: {e}")),
    };
    let loss_of = |reports: &[SubsetReport], terms: &[usize]| {
        let m = TermMask::from_terms(terms);
        reports.iter().find(|r| r.mask == m).map_or(f64::INFINITY, |r| r.data_loss)
    };
    let w1 = loss_of(&one, &[0]);
    let w7 = loss_of(&one, &[6]);
    let worst = one.iter().filter(|r| !r.failed()).last().map(|r| r.mask);
    let bold = [[4, 6], [4, 7], [5, 6], [5, 7]];
    let bold_losses: Vec<f64> = bold.iter().map(|t| loss_of(&two, t)).collect();
    let pass = matches_printed(w1, 0.092, 0.10, 3)
        && matches_printed(w7, 0.059, 0.10, 3)
        && bold_losses.iter().all(|l| matches_printed(*l, 0.033, 0.10, 3))
        && worst == Some(TermMask::from_terms(&[0]));
    Outcome::new(
        pass,
        format!(
            "w1 {w1:.4} w7 {w7:.4} bold [{}] worst {}",
            bold_losses.iter().map(|l| format!("{l:.4}")).collect::<Vec<_>>().join(", "),
            worst.map_or("none".into(), |m| m.to_string())
        ),
    )
}

fn criterion_5() -> Outcome {
    let (l1, l2) = (0.0594, 0.0328);
    let star = crossover_from_losses(l1, l2);
    let below = star * (1.0 - 1e-9);
    let above = star * (1.0 + 1e-9);
    let larger_wins = |a: f64| l2 + 2.0 * a < l1 + a;
    let flips = prefers_larger(star, below) && !prefers_larger(star, above) && !prefers_larger(star, star);
    let direct = larger_wins(below) && !larger_wins(above);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let consistent = (0..20).all(|_| {
        let a: f64 = rng.gen_range(0.0..0.06);
        prefers_larger(star, a) == larger_wins(a)
    });
    let pass = (star - 0.0266).abs() < 5e-5 && flips && direct && consistent;
    Outcome::new(pass, format!("alpha*={star:.6}, flips at alpha*: {flips}, agrees with direct comparison: {consistent}"))
}

fn criterion_6() -> Outcome {
    let data = match brain_data() {
        Ok(d) => d,
        Err(e) => return Outcome::new(false, e),
    };
    let grid = loss_landscape_grid(
        ModelFamily::MooneyRivlin,
        GridAxis { term: 0, min: 0.0, max: 1.0 },
        GridAxis { term: 4, min: 0.0, max: 1.0 },
        &data,
        101,
        &PenaltyConfig::none(),
        None,
        published_spec(),
    );
    let grid = match grid {
        Ok(g) => g,
        Err(e) => return Outcome::new(false, format!("grid failed: {e}")),
    };
    let (w1, w5) = grid.argmin_weights();
    let cell = 0.01 + 1e-12;
    let corner = ParamVector::mooney_rivlin(1.0, 1.0);
    let alpha = calibrate_alpha(
        ModelFamily::MooneyRivlin,
        ModelFamily::MooneyRivlin.full_mask(),
        &data,
        1.0,
        &corner,
        published_spec(),
    );
    let alpha = match alpha {
        Ok(a) => a,
        Err(e) => return Outcome::new(false, format!("calibration failed: {e}")),
    };
    let pass = matches_printed(grid.min, 0.0713, 0.02, 4)
        && (w1 - 0.0).abs() <= cell
        && (w5 - 0.84).abs() <= cell
        && matches_printed(alpha, 0.6585, 0.02, 4);
    Outcome::new(pass, format!("min {:.4} at ({w1:.2}, {w5:.2}), alpha_max {alpha:.4}", grid.min))
}

fn criterion_7() -> Outcome {
    let data = match brain_data() {
        Ok(d) => d,
        Err(e) => return Outcome::new(false, e),
    };
    let adam = AdamConfig::default();
    let sweep = |family: ModelFamily, powers: Vec<f64>, alphas: Vec<f64>| {
        let cfg = SweepConfig {
            powers,
            alphas,
            n_runs: 100,
            master_seed: 42,
            init: InitStrategy::UniformRandom,
            weight_norms: None,
        };
        lp_sweep(family, family.full_mask(), &data, &cfg, published_spec(), &adam)
    };
    let sparse = sweep(ModelFamily::Invariant8, vec![0.5, 1.0], vec![0.1]);
    let ridge = sweep(ModelFamily::Invariant8, vec![2.0], vec![0.0, 0.001, 0.01, 0.1]);
    let stretch = sweep(ModelFamily::Stretch8, vec![0.5, 1.0], vec![0.1]);
    let (sparse, ridge, stretch) = match (sparse, ridge, stretch) {
        (Ok(a), Ok(b), Ok(c)) => (a, b, c),
        _ => return Outcome::new(false, "sweep configuration rejected"),
    };
    let active = |c: &lpcann::discovery::SweepCell| c.active_terms.map_or(f64::NAN, |s| s.mean);
    let sparse_ok = sparse.iter().all(|c| active(c) <= 1.5);
    let ridge_ok = ridge.iter().all(|c| active(c) >= 6.0);
    let mut w8_detail = Vec::new();
    let stretch_ok = stretch.iter().all(|c| {
        let means: Vec<f64> = (0..N_TERMS).map(|k| c.mean_amplitude(k).unwrap_or(f64::NAN)).collect();
        let w8 = means[7];
        w8_detail.push(format!("{w8:.4}"));
        means.iter().all(|m| *m <= w8) && (w8 - 0.0534).abs() <= 0.3 * 0.0534
    });
    Outcome::new(
        sparse_ok && ridge_ok && stretch_ok,
        format!(
            "inv8 sparse active [{}], p=2 active [{}], str8 w8 [{}]",
            sparse.iter().map(|c| format!("{:.2}", active(c))).collect::<Vec<_>>().join(", "),
            ridge.iter().map(|c| format!("{:.2}", active(c))).collect::<Vec<_>>().join(", "),
            w8_detail.join(", ")
        ),
    )
}

fn fd_gradient_error(params: &ParamVector, data: &Dataset, pen: &PenaltyConfig) -> f64 {
    let g = loss_gradient(params, data, LossSpec::normalized(), pen).unwrap();
    let x = params.to_free();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        let eval = |d: f64| {
            let mut y = x.clone();
            y[i] += d;
            let p = ParamVector::from_free(params.family, &y).unwrap();
            total_loss(&p, data, LossSpec::normalized(), pen).unwrap().total
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        let scale = fd.abs().max(g[i].abs()).max(1e-3);
        worst = worst.max((g[i] - fd).abs() / scale);
    }
    worst
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut notes = Vec::new();
    let mut ok = true;

    // analytic against finite-difference gradients
    let data = synthetic(&ParamVector::mooney_rivlin(1.0, 1.0));
    let pen = PenaltyConfig::new(1.5, 0.01);
    let mut worst_grad: f64 = 0.0;
    for family in [ModelFamily::Invariant8, ModelFamily::Stretch8] {
        for _ in 0..10 {
            let amps: [f64; N_TERMS] = std::array::from_fn(|_| rng.gen_range(0.05..0.5));
            let p = match family {
                ModelFamily::Invariant8 => {
                    ParamVector::invariant(amps, std::array::from_fn(|_| rng.gen_range(0.05..0.5)))
                }
                _ => ParamVector::stretch(amps),
            };
            worst_grad = worst_grad.max(fd_gradient_error(&p, &data, &pen));
        }
    }
    ok &= worst_grad < 1e-5;
    notes.push(format!("grad rel err {worst_grad:.1e}"));

    // both eight-term families reduce to the same two-term model
    let mut worst_mr: f64 = 0.0;
    for _ in 0..1000 {
        let mr = ParamVector::mooney_rivlin(rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0));
        let (mode, control) = match rng.gen_range(0..3) {
            0 => (LoadMode::UniaxialTension, rng.gen_range(1.0..2.0)),
            1 => (LoadMode::UniaxialCompression, rng.gen_range(0.5..1.0)),
            _ => (LoadMode::SimpleShear, rng.gen_range(-0.5..0.5)),
        };
        let base = stress(&mr, mode, control).unwrap().total;
        for family in [ModelFamily::Invariant8, ModelFamily::Stretch8] {
            let other = stress(&mr.embed_mooney_rivlin(family), mode, control).unwrap().total;
            worst_mr = worst_mr.max((other - base).abs());
        }
    }
    ok &= worst_mr <= 1e-10;
    notes.push(format!("MR equivalence {worst_mr:.1e}"));

    // normalized data loss is invariant to a common stress scale
    let mut worst_scale: f64 = 0.0;
    for _ in 0..20 {
        let c: f64 = rng.gen_range(0.1..10.0);
        let p = ParamVector::stretch(std::array::from_fn(|_| rng.gen_range(0.0..1.0)));
        let mut scaled = p;
        scaled.amplitudes.iter_mut().for_each(|w| *w *= c);
        let l = data_loss(&p, &data, LossSpec::normalized()).unwrap().total;
        let ls = data_loss(&scaled, &data.scaled(c).unwrap(), LossSpec::normalized()).unwrap().total;
        worst_scale = worst_scale.max((l - ls).abs() / l.max(1e-300));
    }
    ok &= worst_scale <= 1e-10;
    notes.push(format!("scale invariance {worst_scale:.1e}"));

    // penalty identities
    let p = ParamVector::stretch([0.5, 0.0, 2e-5, 1.0, 0.0, 3.0, 0.0, 0.25]);
    let ident = penalty(&p, &PenaltyConfig::new(2.0, 0.1)) == 0.1 * (0.25 + 4e-10 + 1.0 + 9.0 + 0.0625)
        && penalty(&p, &PenaltyConfig::new(1.0, 0.0)) == 0.0
        && penalty(&p, &PenaltyConfig::new(0.0, 1.0)) == 4.0
        && penalty(&p, &PenaltyConfig::new(0.0, 1.0).with_norms([10.0; N_TERMS])) == 4.0
        && total_loss(&p, &data, LossSpec::normalized(), &PenaltyConfig::none()).unwrap().total
            == data_loss(&p, &data, LossSpec::normalized()).unwrap().total;
    ok &= ident;
    notes.push(format!("penalty identities {ident}"));

    // midpoint convexity of stretch-family landscapes
    let mut worst_convex = f64::NEG_INFINITY;
    let pairs = [(0usize, 4usize), (1, 6), (3, 7)];
    for (n, (i, j)) in pairs.into_iter().enumerate() {
        let mut amps = [0.0; N_TERMS];
        amps[i] = 1.0;
        amps[j] = 1.0;
        let d = synthetic(&ParamVector::stretch(amps));
        let g = loss_landscape_grid(
            ModelFamily::Stretch8,
            GridAxis { term: i, min: 0.0, max: 2.0 },
            GridAxis { term: j, min: 0.0, max: 2.0 },
            &d,
            101,
            &PenaltyConfig::none(),
            None,
            LossSpec::normalized(),
        )
        .unwrap();
        let pairs_here = if n == 0 { 1000 } else { 200 };
        worst_convex = worst_convex.max(g.midpoint_convexity_excess(pairs_here, 80 + n as u64));
    }
    ok &= worst_convex <= 1e-9;
    notes.push(format!("convexity excess {worst_convex:.1e}"));

    // enumeration equals an exhaustive loop over masks, bit for bit
    let cfg = DiscoveryConfig {
        spec: LossSpec::normalized(),
        adam: AdamConfig { max_epochs: 1500, ..AdamConfig::default() },
        restarts: 2,
    };
    let mut oracle_ok = true;
    for k in [1, 2] {
        let ranked = enumerate_best_in_class(ModelFamily::Stretch8, &data, k, 0.0, &cfg).unwrap();
        for mask in TermMask::combinations(k) {
            let mut best: Option<lpcann::optimizer::FitResult> = None;
            for r in 0..cfg.restarts {
                let adam = cfg.adam.with_seed(mask_seed(cfg.adam.seed, mask, r));
                let f = fit(
                    ModelFamily::Stretch8,
                    mask,
                    &data,
                    cfg.spec,
                    &PenaltyConfig::none(),
                    &adam,
                    &InitStrategy::UniformRandom,
                )
                .unwrap();
                if best.as_ref().is_none_or(|b| f.loss.data() < b.loss.data()) {
                    best = Some(f);
                }
            }
            let found = ranked.iter().find(|r| r.mask == mask).and_then(|r| r.fitted.clone());
            oracle_ok &= found == best;
        }
        let mut direct: Vec<(f64, Vec<usize>)> =
            ranked.iter().map(|r| (r.data_loss, r.mask.term_list())).collect();
        direct.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        oracle_ok &= direct.iter().map(|d| d.1.clone()).eq(ranked.iter().map(|r| r.mask.term_list()));
    }
    ok &= oracle_ok;
    notes.push(format!("enumeration oracle {oracle_ok}"));

    // determinism under fixed seeds
    let run = || {
        multi_restart_fit(
            4,
            &InitStrategy::UniformRandom,
            ModelFamily::Invariant8,
            TermMask::all(),
            &data,
            LossSpec::normalized(),
            &PenaltyConfig::new(0.5, 0.01),
            &AdamConfig { max_epochs: 400, seed: 11, ..AdamConfig::default() },
        )
        .unwrap()
    };
    let deterministic = run() == run();
    ok &= deterministic;
    notes.push(format!("determinism {deterministic}"));

    Outcome::new(ok, notes.join(", "))
}

fn main() {
    let criteria: [(u32, Duration, fn() -> Outcome); 8] = [
        (1, Duration::from_secs(10), criterion_1),
        (2, Duration::from_secs(300), criterion_2),
        (3, Duration::from_secs(60), criterion_3),
        (4, Duration::from_secs(120), criterion_4),
        (5, Duration::from_secs(1), criterion_5),
        (6, Duration::from_secs(60), criterion_6),
        (7, Duration::from_secs(1800), criterion_7),
        (8, Duration::from_secs(60), criterion_8),
    ];
    let only: Option<u32> = std::env::var("LPCANN_CRITERION").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (n, limit, check) in criteria {
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let out = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= limit;
        let pass = out.pass && in_time;
        if !pass {
            failed += 1;
        }
        let timing = if in_time {
            format!("{:.2}s", elapsed.as_secs_f64())
        } else {
            format!("{:.2}s, over the {}s limit", elapsed.as_secs_f64(), limit.as_secs())
        };
        println!("criterion {n}: {} | {} | {timing}", if pass { "PASS" } else { "FAIL" }, out.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
