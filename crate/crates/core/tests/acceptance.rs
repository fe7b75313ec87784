//! Acceptance suite. Each criterion prints one PASS line (visible with
//! `cargo test --test acceptance -- --nocapture`); a failed assertion fails
//! the criterion. Criteria 5-7 share two full-scale runs (LoS and NLoS) and
//! print one line each.

use std::path::PathBuf;
use std::time::Instant;

use cckit::constraints::{penalty, penalty_gradient, Constraint, ConstraintKind};
use cckit::mat::{dist_sq, Mat};
use cckit::metrics::{continuity, kruskal_stress, trustworthiness};
use cckit::nn::{forward, init_network, loss_and_gradients, Activation, NetConfig, Network};
use cckit::pipeline::{read_chart_csv, run_experiment, ExperimentConfig, Recipe, RecipeOutcome};
use cckit::rng::Rng;

const FD_STEP: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

// ---------------------------------------------------------------------------
// criterion 1: gradient correctness
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_gradient_correctness() {
    let mut rng = Rng::new(0xC1);
    let kinds =
        [ConstraintKind::Fad, ConstraintKind::Frd, ConstraintKind::Mad, ConstraintKind::Mrd];

    // constraints: >= 100 instances spread over the four kinds
    let mut constraint_instances = 0;
    let mut worst_constraint = 0.0f64;
    while constraint_instances < 200 {
        let kind = kinds[constraint_instances % 4];
        let dim = 2 + rng.index(2);
        let y_i: Vec<f64> = (0..dim).map(|_| rng.uniform(-4.0, 4.0)).collect();
        let other: Vec<f64> = (0..dim).map(|_| rng.uniform(-4.0, 4.0)).collect();
        let target = rng.uniform(0.0, 5.0);
        let d = dist_sq(&y_i, &other).sqrt();
        if (d - target).abs() < 1e-2 || d < 1e-2 {
            continue; // away from the kink and the coincident singularity
        }
        let (c, y_j) = if kind.is_absolute() {
            (Constraint::absolute(kind, 0, other.clone(), target, 1.0).unwrap(), None)
        } else {
            (Constraint::relative(kind, 0, 1, target, 1.0).unwrap(), Some(other.clone()))
        };
        let (grad_i, grad_j) = penalty_gradient(&c, &y_i, y_j.as_deref()).unwrap();
        for k in 0..dim {
            let mut plus = y_i.clone();
            let mut minus = y_i.clone();
            plus[k] += FD_STEP;
            minus[k] -= FD_STEP;
            let fd = (penalty(&c, &plus, y_j.as_deref()).unwrap()
                - penalty(&c, &minus, y_j.as_deref()).unwrap())
                / (2.0 * FD_STEP);
            let e = rel_err(grad_i[k], fd);
            worst_constraint = worst_constraint.max(e);
            assert!(e < 1e-5, "{kind:?} grad_i[{k}] rel err {e}");
        }
        if let (Some(gj), Some(yj)) = (&grad_j, &y_j) {
            for k in 0..dim {
                let mut plus = yj.clone();
                let mut minus = yj.clone();
                plus[k] += FD_STEP;
                minus[k] -= FD_STEP;
                let fd = (penalty(&c, &y_i, Some(&plus)).unwrap()
                    - penalty(&c, &y_i, Some(&minus)).unwrap())
                    / (2.0 * FD_STEP);
                let e = rel_err(gj[k], fd);
                worst_constraint = worst_constraint.max(e);
                assert!(e < 1e-5, "{kind:?} grad_j[{k}] rel err {e}");
            }
        }
        constraint_instances += 1;
    }

    // full autoencoder: >= 100 random instances, all parameters each
    let mut ae_instances = 0;
    let mut worst_ae = 0.0f64;
    while ae_instances < 100 {
        let act = if ae_instances % 2 == 0 { Activation::Tanh } else { Activation::Relu };
        let cfg = NetConfig { widths: vec![4, 3, 2, 3, 4], hidden_activation: act };
        let net = init_network(&cfg, rng.next_u64()).unwrap();
        let batch = Mat::from_fn(6, 4, |_, _| rng.uniform(-1.0, 1.0));
        if act == Activation::Relu && min_abs_preactivation(&net, &batch) < 1e-3 {
            continue; // keep ReLU kinks clear of the finite-difference step
        }
        let (_, grads) = loss_and_gradients(&net, &batch, None).unwrap();
        let n_params = param_count(&net);
        for idx in 0..n_params {
            let orig = get_param(&net, idx);
            let mut plus = net.clone();
            set_param(&mut plus, idx, orig + FD_STEP);
            let mut minus = net.clone();
            set_param(&mut minus, idx, orig - FD_STEP);
            let (lp, _) = loss_and_gradients(&plus, &batch, None).unwrap();
            let (lm, _) = loss_and_gradients(&minus, &batch, None).unwrap();
            let fd = (lp - lm) / (2.0 * FD_STEP);
            let e = rel_err(grad_param(&grads, idx), fd);
            worst_ae = worst_ae.max(e);
            assert!(e < 1e-5, "{act:?} net param {idx} rel err {e}");
        }
        ae_instances += 1;
    }

    println!(
        "criterion 1: PASS - {constraint_instances} constraint instances (worst rel err {worst_constraint:.2e}), \
         {ae_instances} AE instances (worst rel err {worst_ae:.2e}), all < 1e-5"
    );
}

fn min_abs_preactivation(net: &Network, batch: &Mat) -> f64 {
    let (_, _, cache) = forward(net, batch).unwrap();
    cache
        .encoder
        .layers
        .iter()
        .chain(&cache.decoder.layers)
        .flat_map(|lc| lc.pre.data().iter())
        .fold(f64::INFINITY, |a, &v| a.min(v.abs()))
}

fn param_count(net: &Network) -> usize {
    net.encoder
        .iter()
        .chain(&net.decoder)
        .map(|l| l.weights.data().len() + l.biases.len())
        .sum()
}

fn get_param(net: &Network, idx: usize) -> f64 {
    let mut k = idx;
    for l in net.encoder.iter().chain(&net.decoder) {
        if k < l.weights.data().len() {
            return l.weights.data()[k];
        }
        k -= l.weights.data().len();
        if k < l.biases.len() {
            return l.biases[k];
        }
        k -= l.biases.len();
    }
    unreachable!()
}

fn set_param(net: &mut Network, idx: usize, v: f64) {
    let mut k = idx;
    for l in net.encoder.iter_mut().chain(net.decoder.iter_mut()) {
        if k < l.weights.data().len() {
            l.weights.data_mut()[k] = v;
            return;
        }
        k -= l.weights.data().len();
        if k < l.biases.len() {
            l.biases[k] = v;
            return;
        }
        k -= l.biases.len();
    }
    unreachable!()
}

fn grad_param(grads: &cckit::nn::Gradients, idx: usize) -> f64 {
    let mut k = idx;
    for g in grads.encoder.iter().chain(&grads.decoder) {
        if k < g.d_weights.data().len() {
            return g.d_weights.data()[k];
        }
        k -= g.d_weights.data().len();
        if k < g.d_biases.len() {
            return g.d_biases[k];
        }
        k -= g.d_biases.len();
    }
    unreachable!()
}

// ---------------------------------------------------------------------------
// criterion 2: metric oracle equivalence
// ---------------------------------------------------------------------------

/// Counting-based rank: independent of the production sort.
fn rank_oracle(points: &Mat, i: usize, j: usize) -> usize {
    let dij = dist_sq(points.row(i), points.row(j));
    let mut closer = 0;
    for l in 0..points.rows() {
        if l == i || l == j {
            continue;
        }
        let dil = dist_sq(points.row(i), points.row(l));
        if dil < dij || (dil == dij && l < j) {
            closer += 1;
        }
    }
    closer + 1
}

fn tw_oracle(reference: &Mat, embedding: &Mat, k: usize) -> f64 {
    let n = reference.rows();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if j != i
                && rank_oracle(embedding, i, j) <= k
                && rank_oracle(reference, i, j) > k
            {
                total += (rank_oracle(reference, i, j) - k) as f64;
            }
        }
    }
    1.0 - 2.0 / (n as f64 * k as f64 * (2 * n - 3 * k - 1) as f64) * total
}

fn ct_oracle(reference: &Mat, embedding: &Mat, k: usize) -> f64 {
    let n = reference.rows();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if j != i
                && rank_oracle(reference, i, j) <= k
                && rank_oracle(embedding, i, j) > k
            {
                total += (rank_oracle(embedding, i, j) - k) as f64;
            }
        }
    }
    1.0 - 2.0 / (n as f64 * k as f64 * (2 * n - 3 * k - 1) as f64) * total
}

fn ks_oracle(reference: &Mat, embedding: &Mat) -> f64 {
    let n = reference.rows();
    let d = |m: &Mat, i: usize, j: usize| dist_sq(m.row(i), m.row(j)).sqrt();
    let mut num_beta = 0.0;
    let mut den_beta = 0.0;
    for i in 0..n {
        for j in 0..n {
            num_beta += d(reference, i, j) * d(embedding, i, j);
            den_beta += d(embedding, i, j) * d(embedding, i, j);
        }
    }
    let beta = num_beta / den_beta;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        for j in 0..n {
            let diff = d(reference, i, j) - beta * d(embedding, i, j);
            num += diff * diff;
            den += d(reference, i, j) * d(reference, i, j);
        }
    }
    (num / den).sqrt()
}

#[test]
fn criterion_2_metric_oracle_equivalence() {
    let mut rng = Rng::new(0xC2);
    let mut instances = 0;
    let mut worst = 0.0f64;
    while instances < 60 {
        let n = 5 + rng.index(16); // 5..=20
        let d_ref = 1 + rng.index(3);
        let d_emb = 1 + rng.index(2);
        let reference = Mat::from_fn(n, d_ref, |_, _| rng.uniform(-5.0, 5.0));
        let embedding = Mat::from_fn(n, d_emb, |_, _| rng.uniform(-5.0, 5.0));
        let k_cap = ((2 * n - 2) / 3).min(n - 1);
        let k = 1 + rng.index(k_cap.max(1));
        if 3 * k + 1 >= 2 * n {
            continue;
        }
        let tw = trustworthiness(&reference, &embedding, k).unwrap();
        let ct = continuity(&reference, &embedding, k).unwrap();
        let ks = kruskal_stress(&reference, &embedding).unwrap();
        let e_tw = (tw - tw_oracle(&reference, &embedding, k)).abs();
        let e_ct = (ct - ct_oracle(&reference, &embedding, k)).abs();
        let e_ks = (ks - ks_oracle(&reference, &embedding)).abs();
        worst = worst.max(e_tw).max(e_ct).max(e_ks);
        assert!(e_tw < 1e-12, "TW deviates {e_tw} (n={n}, k={k})");
        assert!(e_ct < 1e-12, "CT deviates {e_ct} (n={n}, k={k})");
        assert!(e_ks < 1e-12, "KS deviates {e_ks} (n={n})");
        instances += 1;
    }
    println!(
        "criterion 2: PASS - {instances} random instances (N <= 20), worst deviation {worst:.2e} < 1e-12"
    );
}

// ---------------------------------------------------------------------------
// criterion 3: constraint identities
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_constraint_identities() {
    let mut rng = Rng::new(0xC3);
    let instances = 150;
    for _ in 0..instances {
        let dim = 2 + rng.index(3);
        let y_i: Vec<f64> = (0..dim).map(|_| rng.uniform(-5.0, 5.0)).collect();
        let other: Vec<f64> = (0..dim).map(|_| rng.uniform(-5.0, 5.0)).collect();

        // d = 0: FAD == MAD and FRD == MRD, exactly
        let fad = Constraint::absolute(ConstraintKind::Fad, 0, other.clone(), 0.0, 1.0).unwrap();
        let mad = Constraint::absolute(ConstraintKind::Mad, 0, other.clone(), 0.0, 1.0).unwrap();
        assert_eq!(penalty(&fad, &y_i, None).unwrap(), penalty(&mad, &y_i, None).unwrap());
        assert_eq!(
            penalty_gradient(&fad, &y_i, None).unwrap(),
            penalty_gradient(&mad, &y_i, None).unwrap()
        );
        let frd = Constraint::relative(ConstraintKind::Frd, 0, 1, 0.0, 1.0).unwrap();
        let mrd = Constraint::relative(ConstraintKind::Mrd, 0, 1, 0.0, 1.0).unwrap();
        assert_eq!(
            penalty(&frd, &y_i, Some(&other)).unwrap(),
            penalty(&mrd, &y_i, Some(&other)).unwrap()
        );
        assert_eq!(
            penalty_gradient(&frd, &y_i, Some(&other)).unwrap(),
            penalty_gradient(&mrd, &y_i, Some(&other)).unwrap()
        );

        // relative-kind antisymmetry is exact for any target
        let target = rng.uniform(0.0, 6.0);
        for kind in [ConstraintKind::Frd, ConstraintKind::Mrd] {
            let c = Constraint::relative(kind, 0, 1, target, 1.0).unwrap();
            let (gi, gj) = penalty_gradient(&c, &y_i, Some(&other)).unwrap();
            let gj = gj.unwrap();
            for (a, b) in gi.iter().zip(&gj) {
                assert_eq!(*a, -*b, "antisymmetry must be exact");
            }
        }
    }
    println!(
        "criterion 3: PASS - {instances} instances: d=0 kind identities and antisymmetry hold exactly"
    );
}

// ---------------------------------------------------------------------------
// criterion 4: trivial-embedding sanity
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_trivial_embedding_sanity() {
    let mut rng = Rng::new(0xC4);
    let n = 256;
    let reference = Mat::from_fn(n, 2, |_, _| rng.uniform(-50.0, 50.0));
    for scale in [1.0, 2.71] {
        let mut chart = reference.clone();
        chart.scale(scale);
        for k in [1, 6, 12] {
            let tw = trustworthiness(&reference, &chart, k).unwrap();
            let ct = continuity(&reference, &chart, k).unwrap();
            assert!((tw - 1.0).abs() < 1e-9, "TW {tw} at scale {scale}, K {k}");
            assert!((ct - 1.0).abs() < 1e-9, "CT {ct} at scale {scale}, K {k}");
        }
        let ks = kruskal_stress(&reference, &chart).unwrap();
        assert!(ks.abs() < 1e-9, "KS {ks} at scale {scale}");
    }
    println!(
        "criterion 4: PASS - TW = CT = 1 and KS = 0 (within 1e-9) for identity and x2.71 scaled charts, N = {n}"
    );
}

// ---------------------------------------------------------------------------
// criteria 5-7: desk-scale reproduction (LoS + NLoS)
// ---------------------------------------------------------------------------

struct ModeResult {
    label: &'static str,
    outcomes: Vec<(Recipe, RecipeOutcome, f64)>, // recipe, outcome, seconds
    dir: PathBuf,
}

fn run_mode(label: &'static str, nlos: bool) -> ModeResult {
    let dir = std::env::temp_dir().join("cckit_acceptance").join(label);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    let mut outcomes = Vec::new();
    for recipe in [Recipe::Plain, Recipe::Fad, Recipe::FadMrd] {
        let mut cfg = ExperimentConfig::default();
        if nlos {
            cfg.channel.mode = cckit::channel::ChannelMode::Nlos;
        }
        cfg.recipes = vec![recipe];
        let out = dir.join(recipe.as_str());
        let start = Instant::now();
        let mut result = run_experiment(&cfg, &out).unwrap();
        let secs = start.elapsed().as_secs_f64();
        outcomes.push((recipe, result.remove(0), secs));
    }
    ModeResult { label, outcomes, dir }
}

fn report_of(mode: &ModeResult, recipe: Recipe) -> &cckit::metrics::MetricsReport {
    &mode.outcomes.iter().find(|(r, _, _)| *r == recipe).unwrap().1.report
}

fn mean_anchor_error(chart_path: &std::path::Path) -> f64 {
    let chart = read_chart_csv(chart_path).unwrap();
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..chart.coords.rows() {
        if chart.anchor_flags[i] {
            total += dist_sq(chart.coords.row(i), chart.true_positions.row(i)).sqrt();
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn criteria_5_6_7_desk_scale_reproduction() {
    // Both propagation modes, three recipes each; recipes run separately so
    // the per-recipe runtime budget can be measured directly.
    let los_handle = std::thread::spawn(|| run_mode("los", false));
    let nlos_handle = std::thread::spawn(|| run_mode("nlos", true));
    let modes = [los_handle.join().unwrap(), nlos_handle.join().unwrap()];

    let k_mid = (0.025f64 * 2048.0).ceil() as usize; // 52
    let diagonal = (1000.0f64 * 1000.0 + 500.0 * 500.0).sqrt();

    // criterion 5: stress ordering and reduction, plus the runtime budget
    for mode in &modes {
        let ks_plain = report_of(mode, Recipe::Plain).kruskal_stress;
        let ks_fad = report_of(mode, Recipe::Fad).kruskal_stress;
        let ks_fad_mrd = report_of(mode, Recipe::FadMrd).kruskal_stress;
        let reduction = (ks_plain - ks_fad_mrd) / ks_plain;
        assert!(ks_fad < ks_plain, "{}: KS(FAD) {ks_fad} !< KS(plain) {ks_plain}", mode.label);
        assert!(
            ks_fad_mrd <= ks_fad,
            "{}: KS(FAD&MRD) {ks_fad_mrd} > KS(FAD) {ks_fad}",
            mode.label
        );
        assert!(
            reduction >= 0.15,
            "{}: KS reduction {:.1}% below the 15% margin",
            mode.label,
            100.0 * reduction
        );
        for (recipe, _, secs) in &mode.outcomes {
            assert!(
                *secs < 600.0,
                "{}/{} took {secs:.0} s, over the 10-minute budget",
                mode.label,
                recipe.as_str()
            );
        }
        // plain-AE training-progress invariant rides on the same runs
        let plain_history = &mode.outcomes.iter().find(|(r, _, _)| *r == Recipe::Plain).unwrap().1.history;
        let initial = plain_history.reconstruction.first().unwrap();
        let final_ = plain_history.reconstruction.last().unwrap();
        assert!(
            final_ < &(0.5 * initial),
            "{}: plain AE loss did not halve ({initial} -> {final_})",
            mode.label
        );
    }
    for mode in &modes {
        let ks_plain = report_of(mode, Recipe::Plain).kruskal_stress;
        let ks_fad = report_of(mode, Recipe::Fad).kruskal_stress;
        let ks_fad_mrd = report_of(mode, Recipe::FadMrd).kruskal_stress;
        let times: Vec<String> = mode
            .outcomes
            .iter()
            .map(|(r, _, s)| format!("{} {:.0}s", r.as_str(), s))
            .collect();
        println!(
            "criterion 5: PASS - {}: KS plain {ks_plain:.4} -> FAD {ks_fad:.4} -> FAD&MRD {ks_fad_mrd:.4} \
             (reduction {:.1}% >= 15%), runtimes {} (budget 600s each)",
            mode.label,
            100.0 * (ks_plain - ks_fad_mrd) / ks_plain,
            times.join(", ")
        );
    }

    // criterion 6: TW non-degradation at K = ceil(0.025 N); CT reported
    for mode in &modes {
        let tw_plain = report_of(mode, Recipe::Plain).tw_at(k_mid).unwrap();
        let tw_fad_mrd = report_of(mode, Recipe::FadMrd).tw_at(k_mid).unwrap();
        let ct_plain = report_of(mode, Recipe::Plain).ct_at(k_mid).unwrap();
        let ct_fad_mrd = report_of(mode, Recipe::FadMrd).ct_at(k_mid).unwrap();
        assert!(
            tw_fad_mrd >= tw_plain - 0.02,
            "{}: TW({k_mid}) degraded {tw_plain} -> {tw_fad_mrd}",
            mode.label
        );
        println!(
            "criterion 6: PASS - {}: TW({k_mid}) plain {tw_plain:.4} -> FAD&MRD {tw_fad_mrd:.4} \
             (>= plain - 0.02); CT({k_mid}) {ct_plain:.4} -> {ct_fad_mrd:.4} (reported, not asserted)",
            mode.label
        );
    }

    // criterion 7: anchor pinning after FAD training
    for mode in &modes {
        let err = mean_anchor_error(&mode.dir.join("fad").join("fad").join("chart.csv"));
        let bound = 0.05 * diagonal;
        assert!(
            err < bound,
            "{}: mean anchor error {err:.1} m exceeds 5% of diagonal ({bound:.1} m)",
            mode.label
        );
        println!(
            "criterion 7: PASS - {}: mean anchor error {err:.1} m = {:.2}% of the area diagonal (< 5%)",
            mode.label,
            100.0 * err / diagonal
        );
    }
}

// ---------------------------------------------------------------------------
// criterion 8: determinism
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_determinism() {
    let mut cfg = ExperimentConfig::default();
    cfg.scenario.num_users = 128;
    cfg.scenario.area_x_max = 400.0;
    cfg.scenario.area_y_max = 200.0;
    cfg.scenario.trajectory = Some(cckit::scenario::TrajectoryConfig {
        start: [80.0, 60.0],
        heading: 0.3,
        step_length: 4.0,
        num_points: 10,
        turn_amplitude: 0.6,
        turn_period: 8.0,
    });
    cfg.geometry.num_antennas = 8;
    cfg.channel.num_scatterers = 5;
    cfg.channel.scatter_x = (0.0, 400.0);
    cfg.channel.scatter_y = (0.0, 200.0);
    cfg.net_widths = vec![8, 32, 16, 2, 16, 32, 8];
    cfg.train.epochs = 12;
    cfg.train.data_batch_size = 32;
    cfg.train.constraint_batch_size = 32;
    cfg.k_list = vec![1, 4, 7];

    let base = std::env::temp_dir().join("cckit_acceptance").join("determinism");
    if base.exists() {
        std::fs::remove_dir_all(&base).unwrap();
    }
    let a = base.join("a");
    let b = base.join("b");
    run_experiment(&cfg, &a).unwrap();
    run_experiment(&cfg, &b).unwrap();

    let mut compared = 0;
    for recipe in ["plain", "fad", "fad_mrd"] {
        for file in ["chart.csv", "report.csv"] {
            let x = std::fs::read(a.join(recipe).join(file)).unwrap();
            let y = std::fs::read(b.join(recipe).join(file)).unwrap();
            assert_eq!(x, y, "{recipe}/{file} differs between identical runs");
            compared += 1;
        }
    }
    println!(
        "criterion 8: PASS - two identical runs produced byte-identical chart.csv and report.csv \
         ({compared} files compared)"
    );
}
