//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Pass criterion numbers as arguments to
//! run a subset, e.g. `cargo test --test acceptance -- 3 7`.

use std::cell::OnceCell;
use std::process::ExitCode;
use std::time::Instant;

use flowcast_core::data::{
    all_samples, generate_synthetic, FeatureStats, FeatureTable, ForecastDataset, GeneratorConfig, SampleKey,
    TruthMode,
};
use flowcast_core::flow::{gregory_derivatives, LeadFlow, KNOTS, RAW_PER_LEAD};
use flowcast_core::heads::{
    bernstein_quantile, flow_nll, BernsteinLead, Head, HeadKind, LeadDistribution, NormalParams, Predictive,
    QuantileLevels, BERNSTEIN_COEFFS,
};
use flowcast_core::metrics::{
    crps_normal, crps_quantile_approx, evaluate, permutation_importance, ImportanceOptions, ScoreConfig,
    VerificationReport, IMPORTANCE_GROUPS,
};
use flowcast_core::model::Model;
use flowcast_core::net::{backward, forward, Mode, NetworkConfig, NetworkParams};
use flowcast_core::predict::PredictionSet;
use flowcast_core::rng::{stream, Stream};
use flowcast_core::stats::normal_cdf;
use flowcast_core::train::{train_tables, TrainConfig, TrainOutcome};
use flowcast_core::LEAD_TIMES;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

// ---------------------------------------------------------------- 1

fn parameter_counts() -> Verdict {
    let want = [(HeadKind::Normal, 42), (HeadKind::Bernstein, 273), (HeadKind::Flow, 840)];
    let mut got = Vec::new();
    let mut ok = true;
    for (kind, n) in want {
        let head = Head::new(kind);
        let raw = vec![0.1; head.output_dim()];
        let mean = vec![5.0; LEAD_TIMES];
        let std = vec![1.0; LEAD_TIMES];
        let per_lead = head.distributions(&raw, &mean, &std).map(|d| d.len()).unwrap_or(0);
        let counted = match kind {
            HeadKind::Normal => NormalParams::from_raw(&raw, &mean, &std).parameter_count(),
            HeadKind::Flow => flowcast_core::flow::FlowParams::from_raw(&raw, &mean)
                .map(|f| f.free_parameter_count())
                .unwrap_or(0),
            _ => per_lead * BERNSTEIN_COEFFS,
        };
        ok &= head.output_dim() == n && counted == n && per_lead == LEAD_TIMES;
        got.push(format!("{kind}={}/{counted}", head.output_dim()));
    }
    verdict(ok, got.join(" "))
}

// ---------------------------------------------------------------- 2

fn gregory_example() -> Verdict {
    let k = [0.0, 1.0, 2.0, 3.0, 4.0];
    let d = gregory_derivatives(&k, &[0.0, 1.0, 4.0, 9.0, 16.0]);
    let want = [0.5, 1.5, 3.75, 35.0 / 6.0, 49.0 / 6.0];
    let err = d.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let id = gregory_derivatives(&k, &k);
    let id_err = id.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    verdict(
        err < 1e-9 && id_err < 1e-9,
        format!("d={d:.4?} max err {err:.1e}, identity err {id_err:.1e}"),
    )
}

// ---------------------------------------------------------------- 3

/// Composite Simpson on `[a, b]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Adaptive Simpson with Richardson correction.
#[allow(clippy::too_many_arguments)]
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (flm, frm) = (f(0.5 * (a + m)), f(0.5 * (m + b)));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    adaptive_simpson(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), 1e-9, 40)
}

/// Points on the data axis where some spline of the chain switches bin.
fn data_breakpoints(flow: &LeadFlow) -> Vec<f64> {
    let mut pts = Vec::new();
    for (l, s) in flow.splines.iter().enumerate() {
        for &k in &s.knots {
            pts.push(flow.splines[..l].iter().rev().fold(k, |y, p| p.inverse(y)));
        }
    }
    pts
}

fn flow_validity() -> Verdict {
    const DRAWS: usize = 100_000;
    let mut r = rng(3);
    let (mut non_monotone, mut invalid) = (0, 0);
    let mut worst_raw_x = 0.0f64;
    let (mut worst_round_trip, mut worst_mass, mut worst_c1) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..DRAWS {
        let scale = r.random_range(0.2..2.0);
        let raw: Vec<f64> = (0..RAW_PER_LEAD).map(|_| scale * normal(&mut r)).collect();
        let anchor = r.random_range(-15.0..30.0);
        let flow = LeadFlow::from_raw(&raw, anchor);
        if flow.validate().is_err() {
            invalid += 1;
        }
        let (lo, hi) = (flow.inverse(-8.0), flow.inverse(8.0));

        // strict monotonicity on a grid that also straddles every knot
        let mut xs: Vec<f64> = (0..=200).map(|i| lo - 1.0 + (hi - lo + 2.0) * i as f64 / 200.0).collect();
        let bps = data_breakpoints(&flow);
        for &b in &bps {
            // Offsets scale with |b| so the step in z stays above rounding
            // when the tails stretch the support far out.
            let h = 1e-4 * b.abs().max(1.0);
            xs.extend([b - h, b, b + h]);
        }
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let zs: Vec<f64> = xs.iter().map(|&x| flow.transform(x).0).collect();
        // Strictly increasing wherever the true step T'(x)·Δx is above
        // rounding in z; never decreasing anywhere.
        let violated = (1..xs.len()).any(|i| {
            let step = flow.transform(xs[i - 1]).1.exp() * (xs[i] - xs[i - 1]);
            zs[i] < zs[i - 1] || (zs[i] == zs[i - 1] && step > 1e-12 * zs[i].abs().max(1.0))
        });
        if violated {
            non_monotone += 1;
        }

        for _ in 0..8 {
            // Round trips in both directions. Each error is expressed in the
            // coordinate the map contracts toward: where T is flat one ulp
            // of z spans many ulps of x, and where it is steep the reverse.
            let x = r.random_range(lo..hi);
            let (z, log_slope) = flow.transform(x);
            let slope = log_slope.exp();
            let back = flow.inverse(z);
            let ex = (back - x).abs() / x.abs().max(1.0);
            worst_raw_x = worst_raw_x.max(ex);
            worst_round_trip = worst_round_trip.max(ex * slope.min(1.0));

            let z = 3.0 * normal(&mut r);
            let x = flow.inverse(z);
            let slope = flow.transform(x).1.exp();
            let ez = (flow.transform(x).0 - z).abs() / z.abs().max(1.0);
            worst_round_trip = worst_round_trip.max(ez * slope.recip().min(1.0));
        }

        let mut cuts: Vec<f64> = bps.into_iter().filter(|b| *b > lo && *b < hi).collect();
        cuts.extend([lo, hi]);
        cuts.sort_by(f64::total_cmp);
        let mass: f64 = cuts
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| integrate(&|x| flow.logpdf(x).exp(), w[0], w[1]))
            .sum();
        worst_mass = worst_mass.max((mass - 1.0).abs());

        for s in &flow.splines {
            for i in 0..KNOTS {
                let (a, b) = s.knot_derivative_limits(i);
                worst_c1 = worst_c1.max((a - b).abs() / a.abs().max(1.0));
            }
        }
    }
    verdict(
        non_monotone == 0 && invalid == 0 && worst_round_trip < 1e-9 && worst_mass < 1e-3 && worst_c1 < 1e-6,
        format!(
            "{DRAWS} draws: non-monotone {non_monotone}, invalid {invalid}, round trip {worst_round_trip:.1e} \
             (unscaled x error {worst_raw_x:.1e}), \
             |mass-1| {worst_mass:.1e}, C1 gap {worst_c1:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- 4

/// Relative error with a floor on the denominator so that gradients that
/// are zero up to rounding do not dominate.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

fn network_gradient_draw(r: &mut ChaCha8Rng, draw: u64) -> f64 {
    let cfg = NetworkConfig {
        num_layers: r.random_range(2..6),
        dropout_prob: if draw.is_multiple_of(2) { 0.0 } else { 0.2 },
        ..NetworkConfig::new(r.random_range(2..7), r.random_range(3..9), r.random_range(1..5))
    };
    let mut params = NetworkParams::init(cfg.clone(), r).unwrap();
    let batch = r.random_range(1..5);
    let x = Array2::from_shape_fn((batch, cfg.input_dim), |_| normal(r));
    let c = Array2::from_shape_fn((batch, cfg.output_dim), |_| normal(r));
    let mask_seed = r.random::<u64>();
    // Reseeding makes every call draw the same dropout masks.
    let objective = |p: &NetworkParams| {
        let (y, _) = forward(p, x.view(), Mode::Train, &mut rng(mask_seed)).unwrap();
        (&y * &c).sum()
    };
    let (_, tape) = forward(&params, x.view(), Mode::Train, &mut rng(mask_seed)).unwrap();
    let g = backward(&params, &tape, c.view()).unwrap();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for (i, &gi) in g.iter().enumerate() {
        let v = params.flat()[i];
        params.flat_mut()[i] = v + h;
        let up = objective(&params);
        params.flat_mut()[i] = v - h;
        let down = objective(&params);
        params.flat_mut()[i] = v;
        worst = worst.max(rel_err(gi, (up - down) / (2.0 * h)));
    }
    worst
}

fn flow_gradient_draw(r: &mut ChaCha8Rng) -> f64 {
    let head = Head::new(HeadKind::Flow);
    let mut raw: Vec<f64> = (0..head.output_dim()).map(|_| 0.7 * normal(r)).collect();
    let mean: Vec<f64> = (0..LEAD_TIMES).map(|_| r.random_range(-5.0..20.0)).collect();
    let zeros = vec![0.0; LEAD_TIMES];
    let obs: Vec<f64> = mean.iter().map(|m| m + 2.0 * normal(r)).collect();
    let mut g = vec![0.0; raw.len()];
    let term = head.loss(&raw, &mean, &zeros, &obs, Some(&mut g)).unwrap();
    assert_eq!(term.count, LEAD_TIMES);
    // Each lead's raw block only feeds that lead's loss, so the difference
    // quotient is taken on the lead's own slice. Differencing the 21-lead
    // mean would bury the signal under rounding whenever one lead sits far
    // out in a tail.
    let h = 1e-5;
    let p = RAW_PER_LEAD;
    let mut worst = 0.0f64;
    for i in 0..raw.len() {
        let j = i / p;
        let (m, y) = (&mean[j..j + 1], &obs[j..j + 1]);
        let v = raw[i];
        raw[i] = v + h;
        let up = flow_nll(&raw[j * p..(j + 1) * p], m, y).unwrap();
        raw[i] = v - h;
        let down = flow_nll(&raw[j * p..(j + 1) * p], m, y).unwrap();
        raw[i] = v;
        worst = worst.max(rel_err(g[i], (up - down) / (2.0 * h)));
    }
    worst
}

fn gradient_checks() -> Verdict {
    const DRAWS: u64 = 60;
    let mut r = rng(4);
    let net = (0..DRAWS).map(|d| network_gradient_draw(&mut r, d)).fold(0.0, f64::max);
    let flow = (0..DRAWS).map(|_| flow_gradient_draw(&mut r)).fold(0.0, f64::max);
    verdict(
        net < 1e-4 && flow < 1e-4,
        format!("{DRAWS} draws each: network max rel err {net:.1e}, flow_nll max rel err {flow:.1e}"),
    )
}

// ---------------------------------------------------------------- 5

/// `∫ (F(t) − 1{t ≥ y})² dt` by quadrature, split at the observation.
fn crps_oracle(mu: f64, sigma: f64, y: f64) -> f64 {
    let f = |t: f64| normal_cdf((t - mu) / sigma);
    let (lo, hi) = (mu.min(y) - 12.0 * sigma, mu.max(y) + 12.0 * sigma);
    simpson(|t| f(t).powi(2), lo, y, 20_000) + simpson(|t| (1.0 - f(t)).powi(2), y, hi, 20_000)
}

fn crps_equivalence() -> Verdict {
    let closed = crps_normal(0.0, 1.0, 0.0).unwrap();
    let oracle = crps_oracle(0.0, 1.0, 0.0);
    let mut ok = (closed - 0.23370).abs() < 1e-4 && (closed - oracle).abs() < 1e-4;
    let levels = QuantileLevels::default();
    let mut worst = 0.0f64;
    for mu in [-3.0, 0.0, 2.5, 15.0] {
        for sigma in [0.3, 1.0, 4.0] {
            let dist = LeadDistribution::Normal(flowcast_core::heads::NormalLead { mu, sigma });
            let q: Vec<f64> = levels.as_slice().iter().map(|&t| dist.quantile(t)).collect();
            for k in -8..=8 {
                let y = mu + 0.5 * k as f64 * sigma;
                let exact = crps_normal(mu, sigma, y).unwrap();
                let approx = crps_quantile_approx(&q, y, &levels);
                worst = worst.max((approx - exact).abs() / exact);
                if k % 4 == 0 {
                    ok &= (exact - crps_oracle(mu, sigma, y)).abs() < 1e-6 * sigma.max(1.0);
                }
            }
        }
    }
    ok &= worst < 0.01;
    verdict(
        ok,
        format!("crps_normal(0,1,0)={closed:.6} oracle {oracle:.6}; grid max rel err {worst:.2e}"),
    )
}

// ------------------------------------------------------- shared data

/// One synthetic dataset split into train / validation / test years.
struct Experiment {
    ds: ForecastDataset,
    train: FeatureTable,
    val: FeatureTable,
    test: FeatureTable,
    test_keys: Vec<SampleKey>,
    stats: FeatureStats,
}

const TRAIN_YEARS: [i32; 2] = [2014, 2015];
const VALIDATION_YEAR: i32 = 2016;
const TEST_YEAR: i32 = 2017;

impl Experiment {
    fn new(cfg: GeneratorConfig, seed: u64) -> Experiment {
        // Every year comes from the same (train-like) ensemble so that the
        // test year differs from the training years only by its draws.
        let ds = generate_synthetic(&cfg, seed).unwrap().train;
        let all = all_samples(&ds);
        let pick = |ys: &[i32]| -> Vec<SampleKey> {
            all.iter()
                .copied()
                .filter(|k| ys.contains(&ds.issue_year[k.issue]))
                .collect()
        };
        let train = FeatureTable::build(&ds, &pick(&TRAIN_YEARS)).unwrap();
        let val = FeatureTable::build(&ds, &pick(&[VALIDATION_YEAR])).unwrap();
        let test_keys = pick(&[TEST_YEAR]);
        let test = FeatureTable::build(&ds, &test_keys).unwrap();
        let stats = FeatureStats::fit(train.features.view(), format!("train split (years {TRAIN_YEARS:?})")).unwrap();
        Experiment {
            ds,
            train,
            val,
            test,
            test_keys,
            stats,
        }
    }

    fn generator(mode: TruthMode) -> GeneratorConfig {
        let mut cfg = GeneratorConfig {
            stations: 20,
            issue_times_per_year: 200,
            years: vec![2014, 2015, 2016, 2017],
            // Independent errors across lead times keep the pooled PIT
            // values close to independent, which the chi-square test assumes.
            lead_correlation: 0.0,
            ensemble_error: 0.1,
            ..GeneratorConfig::default()
        };
        cfg.truth.mode = mode;
        cfg
    }

    fn fit(&self, head: HeadKind, cfg: &TrainConfig) -> TrainOutcome {
        let cfg = TrainConfig {
            head,
            validation_year: VALIDATION_YEAR,
            ..cfg.clone()
        };
        train_tables(&self.train, &self.val, self.stats.clone(), &cfg).unwrap()
    }

    fn predictions(&self, name: &str, model: &Model) -> PredictionSet {
        let dists = model.distributions(&self.test).unwrap();
        PredictionSet::from_distributions(name, self.test_keys.clone(), dists, QuantileLevels::default()).unwrap()
    }

    fn truth(&self) -> PredictionSet {
        PredictionSet::truth(&self.ds, &self.test_keys).unwrap()
    }

    /// Mean negative log-density over scored test triples.
    fn nll(&self, set: &PredictionSet) -> f64 {
        let (mut sum, mut n) = (0.0, 0usize);
        for (i, row) in set.dists.iter().enumerate() {
            for (j, d) in row.iter().enumerate() {
                let y = self.test.observations[[i, j]];
                if y.is_finite() {
                    sum -= d.logpdf(y).expect("likelihood head");
                    n += 1;
                }
            }
        }
        sum / n as f64
    }

    fn reports(&self, sets: &[&PredictionSet]) -> Vec<VerificationReport> {
        let named: Vec<(&str, &PredictionSet)> = sets.iter().map(|s| (s.head.as_str(), *s)).collect();
        evaluate(&named, None, &self.ds, ScoreConfig::default()).unwrap().reports
    }
}

/// Reduced network and schedule so the suite runs on one core in minutes.
fn desk_training() -> TrainConfig {
    TrainConfig {
        seed: 7,
        epochs: 60,
        batch_size: 32,
        hidden_dim: 64,
        ..TrainConfig::default()
    }
}

struct Bimodal {
    exp: Experiment,
    flow: (TrainOutcome, PredictionSet),
}

impl Bimodal {
    fn new() -> Bimodal {
        let exp = Experiment::new(Experiment::generator(TruthMode::Bimodal), 42);
        let out = exp.fit(HeadKind::Flow, &desk_training());
        let set = exp.predictions("flow", &out.model);
        Bimodal { exp, flow: (out, set) }
    }
}

// ---------------------------------------------------------------- 6

fn head_ordering(b: &Bimodal) -> Verdict {
    let normal = b.exp.fit(HeadKind::Normal, &desk_training());
    let normal_set = b.exp.predictions("normal", &normal.model);
    let flow_set = &b.flow.1;
    let (nll_flow, nll_normal) = (b.exp.nll(flow_set), b.exp.nll(&normal_set));
    let reports = b.exp.reports(&[flow_set, &normal_set]);
    let (f, n) = (&reports[0], &reports[1]);
    let ok = nll_flow <= nll_normal
        && f.crps <= n.crps
        && f.pit_test.p_value > 0.01
        && n.pit_test.p_value < 0.01;
    verdict(
        ok,
        format!(
            "NLL flow {nll_flow:.4} normal {nll_normal:.4}; CRPS flow {:.4} normal {:.4}; \
             PIT p flow {:.2e} (chi2 {:.1}) normal {:.2e} (chi2 {:.1})",
            f.crps, n.crps, f.pit_test.p_value, f.pit_test.statistic, n.pit_test.p_value, n.pit_test.statistic
        ),
    )
}

// ---------------------------------------------------------------- 7

fn truth_calibration() -> Verdict {
    let cfg = GeneratorConfig {
        issue_times_per_year: 50,
        years: vec![2017],
        ..GeneratorConfig::default()
    };
    let mut pit = Vec::new();
    let mut worst_qss = 0.0f64;
    let mut ok = true;
    for (i, mode) in [TruthMode::Gaussian, TruthMode::Skewed, TruthMode::Bimodal].into_iter().enumerate() {
        let mut cfg = cfg.clone();
        cfg.truth.mode = mode;
        let ds = generate_synthetic(&cfg, 100 + i as u64).unwrap().train;
        let truth = PredictionSet::truth(&ds, &all_samples(&ds)).unwrap();
        let ev = evaluate(&[("truth", &truth)], Some(("truth", &truth)), &ds, ScoreConfig::default()).unwrap();
        let r = &ev.reports[0];
        ok &= r.pit_test.p_value > 0.01;
        worst_qss = worst_qss.max(r.qss.abs());
        pit.push(format!("{mode:?} p {:.3}", r.pit_test.p_value));
    }
    ok &= worst_qss < 1e-12;
    verdict(ok, format!("PIT {}; max |QSS| vs itself {worst_qss:.1e}", pit.join(", ")))
}

// ---------------------------------------------------------------- 8

fn bernstein() -> Verdict {
    let mut r = rng(8);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let c: Vec<f64> = (0..BERNSTEIN_COEFFS).map(|_| 5.0 * normal(&mut r)).collect();
        worst = worst.max((bernstein_quantile(&c, 0.0) - c[0]).abs());
        worst = worst.max((bernstein_quantile(&c, 1.0) - c[BERNSTEIN_COEFFS - 1]).abs());
        let (a, s) = (c[0], c[1]);
        let constant = [a; BERNSTEIN_COEFFS];
        let linear: Vec<f64> = (0..BERNSTEIN_COEFFS).map(|k| a + s * k as f64 / 12.0).collect();
        for i in 0..=50 {
            let t = i as f64 / 50.0;
            worst = worst.max((bernstein_quantile(&constant, t) - a).abs());
            worst = worst.max((bernstein_quantile(&linear, t) - (a + s * t)).abs());
        }
    }
    let anchored = BernsteinLead::anchored(&[0.0; BERNSTEIN_COEFFS], 3.0);
    let anchor_ok = (anchored.quantile(0.37) - 3.0).abs() < 1e-12;

    let exp = Experiment::new(Experiment::generator(TruthMode::Gaussian), 43);
    let out = exp.fit(HeadKind::Bernstein, &desk_training());
    let set = exp.predictions("bernstein", &out.model);
    let truth = exp.truth();
    let reports = exp.reports(&[&set, &truth]);
    let ratio = reports[0].ql / reports[1].ql;
    verdict(
        worst < 1e-12 && anchor_ok && ratio <= 1.05,
        format!(
            "reproduction max err {worst:.1e}; pinball loss head {:.4} truth {:.4} (ratio {ratio:.4}), crossings {}",
            reports[0].ql, reports[1].ql, reports[0].crossings
        ),
    )
}

// ---------------------------------------------------------------- 9

fn importance() -> Verdict {
    let mut cfg = Experiment::generator(TruthMode::Gaussian);
    cfg.issue_times_per_year = 100;
    let exp = Experiment::new(cfg, 44);
    let train_cfg = TrainConfig {
        epochs: 30,
        ..desk_training()
    };
    let model = exp.fit(HeadKind::Normal, &train_cfg).model;
    let identity = permutation_importance(
        &model,
        &exp.test,
        ImportanceOptions {
            repetitions: 1,
            identity: true,
        },
        &mut stream(0, Stream::Permutation),
    )
    .unwrap();
    let zero = identity.values.iter().all(|&v| v == 0.0);
    let m = permutation_importance(&model, &exp.test, ImportanceOptions::default(), &mut stream(0, Stream::Permutation))
        .unwrap();
    let off_diagonal: Vec<usize> = (0..LEAD_TIMES)
        .filter(|&j| {
            let row = m.values.row(j);
            (0..IMPORTANCE_GROUPS).any(|g| g != j && row[g] >= row[j])
        })
        .collect();
    let min_margin = (0..LEAD_TIMES)
        .map(|j| {
            let row = m.values.row(j);
            let other = (0..IMPORTANCE_GROUPS).filter(|&g| g != j).map(|g| row[g]).fold(f64::MIN, f64::max);
            row[j] - other
        })
        .fold(f64::MAX, f64::min);
    verdict(
        zero && off_diagonal.is_empty(),
        format!(
            "identity all zero: {zero}; rows without diagonal maximum {off_diagonal:?}, \
             smallest diagonal margin {min_margin:.4}"
        ),
    )
}

// ---------------------------------------------------------------- 10

fn shape_violations(set: &PredictionSet) -> usize {
    set.dists
        .iter()
        .flatten()
        .map(|d| match d {
            LeadDistribution::Flow(f) => f.shape_violations(),
            _ => 0,
        })
        .sum()
}

fn free_derivative_non_inferiority(b: &Bimodal) -> Verdict {
    let free = b.exp.fit(HeadKind::FreeDerivativeFlow, &desk_training());
    let free_set = b.exp.predictions("free-derivative-flow", &free.model);
    let (nll_g, nll_f) = (b.exp.nll(&b.flow.1), b.exp.nll(&free_set));
    let (flags_g, flags_f) = (shape_violations(&b.flow.1), shape_violations(&free_set));
    let margin = 0.02 * nll_f.abs();
    verdict(
        nll_g <= nll_f + margin && flags_g == 0 && flags_f > 0,
        format!(
            "test NLL gregory {nll_g:.4} free {nll_f:.4} (margin {margin:.4}); \
             discontinuity flags gregory {flags_g} free {flags_f}"
        ),
    )
}

// ---------------------------------------------------------------- main

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

fn main() -> ExitCode {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let bimodal: OnceCell<Bimodal> = OnceCell::new();
    let criteria: [Criterion<'_>; 10] = [
        ("parameter counts", Box::new(parameter_counts)),
        ("gregory derivatives", Box::new(gregory_example)),
        ("flow validity", Box::new(flow_validity)),
        ("gradient checks", Box::new(gradient_checks)),
        ("crps oracle", Box::new(crps_equivalence)),
        ("head ordering", Box::new(|| head_ordering(bimodal.get_or_init(Bimodal::new)))),
        ("truth calibration", Box::new(truth_calibration)),
        ("bernstein", Box::new(bernstein)),
        ("importance", Box::new(importance)),
        (
            "free-derivative non-inferiority",
            Box::new(|| free_derivative_non_inferiority(bimodal.get_or_init(Bimodal::new))),
        ),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t0 = Instant::now();
        let v = run();
        let secs = t0.elapsed().as_secs_f64();
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {} {name} ({secs:.1}s): {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
