#![allow(clippy::needless_range_loop)]

use otmatch_core::cost::{expected_cost, gradient_score_u, hierarchical_cluster, validate_metric, CostMatrix};
use otmatch_core::data::{
    augment, gen_gaussian_mixture, gen_two_moons, sample_batch, split_labeled, AugmentConfig, InputLayout, Strength,
};
use otmatch_core::ema::TeacherParams;
use otmatch_core::losses::{loss_un3, BatchPredictions};
use otmatch_core::matrix::{argmax, dot, norm2};
use otmatch_core::nn::{softmax, ConvShape, ModelParams};
use otmatch_core::ot::{
    closed_form_row_plan, entropic_objective, exact_ot, generalized_kl, sinkhorn_row_marginal_only, OtConfig,
};
use otmatch_core::thresholds::ThresholdState;
use otmatch_core::DenseMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = norm2(&v);
        if n > 1e-3 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Euclidean distances between random points: always a metric.
fn point_metric(rng: &mut ChaCha8Rng, k: usize) -> DenseMatrix {
    let pts: Vec<Vec<f64>> = (0..k).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
    let mut c = DenseMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let d: f64 = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            c.set(i, j, d.sqrt());
        }
    }
    c
}

/// Minimum of `⟨C, T⟩` over the basic feasible solutions of the transport
/// polytope, found by trying every support of size `m + n − 1`.
fn vertex_enumeration(mu: &[f64], nu: &[f64], c: &DenseMatrix) -> f64 {
    let (m, n) = (mu.len(), nu.len());
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let size = m + n - 1;
    let mut best = f64::INFINITY;
    let mut pick: Vec<usize> = (0..size).collect();
    loop {
        if let Some(t) = solve_support(mu, nu, &pick.iter().map(|&p| cells[p]).collect::<Vec<_>>()) {
            if t.iter().all(|&v| v >= -1e-12) {
                let cost: f64 = pick.iter().zip(&t).map(|(&p, v)| c.get(cells[p].0, cells[p].1) * v).sum();
                best = best.min(cost);
            }
        }
        // next combination in lexicographic order
        let mut i = size;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if pick[i] < cells.len() - size + i {
                break;
            }
        }
        pick[i] += 1;
        for j in i + 1..size {
            pick[j] = pick[j - 1] + 1;
        }
    }
}

/// Solves the marginal equations restricted to `support` by Gaussian
/// elimination; `None` when the support does not determine a unique plan.
fn solve_support(mu: &[f64], nu: &[f64], support: &[(usize, usize)]) -> Option<Vec<f64>> {
    let (m, n, s) = (mu.len(), nu.len(), support.len());
    let mut a: Vec<Vec<f64>> = Vec::with_capacity(m + n);
    for i in 0..m {
        let mut row: Vec<f64> = support.iter().map(|&(r, _)| if r == i { 1.0 } else { 0.0 }).collect();
        row.push(mu[i]);
        a.push(row);
    }
    for j in 0..n {
        let mut row: Vec<f64> = support.iter().map(|&(_, c)| if c == j { 1.0 } else { 0.0 }).collect();
        row.push(nu[j]);
        a.push(row);
    }
    let mut r = 0;
    for col in 0..s {
        let pivot = (r..a.len()).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(r, pivot);
        for other in 0..a.len() {
            if other != r {
                let f = a[other][col] / a[r][col];
                for k in col..=s {
                    a[other][k] -= f * a[r][k];
                }
            }
        }
        r += 1;
    }
    if a[r..].iter().any(|row| row[s].abs() > 1e-9) {
        return None;
    }
    Some((0..s).map(|i| a[i][s] / a[i][i]).collect())
}

fn head_from_units(units: &[Vec<f64>]) -> DenseMatrix {
    let d = units[0].len();
    let mut w = DenseMatrix::zeros(d, units.len());
    for (k, v) in units.iter().enumerate() {
        for (r, x) in v.iter().enumerate() {
            w.set(r, k, *x);
        }
    }
    w
}

fn cosine_cost(units: &[Vec<f64>]) -> DenseMatrix {
    let k = units.len();
    let mut c = DenseMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            c.set(i, j, if i == j { 0.0 } else { 1.0 - dot(&units[i], &units[j]) });
        }
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_ot_matches_vertex_enumeration(seed in any::<u64>(), m in 1usize..5, n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = simplex(&mut rng, m);
        let nu = simplex(&mut rng, n);
        let mut c = DenseMatrix::zeros(m, n);
        c.values_mut().iter_mut().for_each(|v| *v = rng.random::<f64>());
        let (d, plan) = exact_ot(&mu, &nu, &c).unwrap();
        prop_assert!(plan.source_residual() < 1e-9 && plan.target_residual() < 1e-9);
        prop_assert!(plan.is_nonnegative());
        let oracle = vertex_enumeration(&mu, &nu, &c);
        prop_assert!((d - oracle).abs() < 1e-9, "exact {} vs vertex oracle {}", d, oracle);
    }

    #[test]
    fn exact_ot_on_a_line_matches_cdf_formula(seed in any::<u64>(), k in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..10.0)).collect();
        xs.sort_by(f64::total_cmp);
        let mu = simplex(&mut rng, k);
        let nu = simplex(&mut rng, k);
        let mut c = DenseMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                c.set(i, j, (xs[i] - xs[j]).abs());
            }
        }
        let (d, _) = exact_ot(&mu, &nu, &c).unwrap();
        let (mut fm, mut fn_, mut w) = (0.0, 0.0, 0.0);
        for i in 0..k - 1 {
            fm += mu[i];
            fn_ += nu[i];
            w += (fm - fn_).abs() * (xs[i + 1] - xs[i]);
        }
        prop_assert!((d - w).abs() < 1e-9, "{} vs {}", d, w);
    }

    #[test]
    fn binary_cost_gives_total_variation(seed in any::<u64>(), k in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = simplex(&mut rng, k);
        let nu = simplex(&mut rng, k);
        let mut c = DenseMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    c.set(i, j, 1.0);
                }
            }
        }
        let (d, _) = exact_ot(&mu, &nu, &c).unwrap();
        let tv: f64 = mu.iter().zip(&nu).map(|(a, b)| (a - b).max(0.0)).sum();
        prop_assert!((d - tv).abs() < 1e-9);
    }

    #[test]
    fn exact_ot_symmetric_and_separating(seed in any::<u64>(), k in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = point_metric(&mut rng, k);
        let mu = simplex(&mut rng, k);
        let nu = simplex(&mut rng, k);
        let (ab, _) = exact_ot(&mu, &nu, &c).unwrap();
        let (ba, _) = exact_ot(&nu, &mu, &c).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!(ab > 0.0);
        let (aa, _) = exact_ot(&mu, &mu, &c).unwrap();
        prop_assert!(aa.abs() < 1e-12);
    }

    #[test]
    fn generalized_kl_is_nonnegative(
        p in prop::collection::vec(1e-6f64..5.0, 1..8),
        scale in prop::collection::vec(0.2f64..5.0, 8),
    ) {
        let q: Vec<f64> = p.iter().zip(&scale).map(|(a, s)| a * s).collect();
        prop_assert!(generalized_kl(&p, &q).unwrap() >= -1e-12);
        prop_assert!(generalized_kl(&p, &p).unwrap().abs() < 1e-12);
        if p.iter().zip(&q).any(|(a, b)| (a - b).abs() > 1e-6) {
            prop_assert!(generalized_kl(&p, &q).unwrap() > 0.0);
        }
    }

    #[test]
    fn closed_form_rows_sum_to_share(
        values in prop::collection::vec(-50.0f64..50.0, 12),
        rows in prop::sample::select(vec![1usize, 2, 3, 4, 6]),
        eps in prop::sample::select(vec![0.01, 0.1, 1.0, 10.0]),
    ) {
        let n = 12 / rows;
        let c = DenseMatrix::from_vec(rows, n, values).unwrap();
        let plan = closed_form_row_plan(&c, eps).unwrap();
        for s in plan.plan.row_sums() {
            prop_assert!((s - 1.0 / rows as f64).abs() < 1e-12);
        }
        prop_assert!(plan.is_nonnegative());
    }

    #[test]
    fn row_only_sinkhorn_matches_closed_form(seed in any::<u64>(), eps in prop::sample::select(vec![0.1, 1.0, 10.0])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n) = (rng.random_range(1..5), rng.random_range(2..5));
        let mut c = DenseMatrix::zeros(m, n);
        c.values_mut().iter_mut().for_each(|v| *v = rng.random::<f64>());
        let mu = vec![1.0 / m as f64; m];
        let cfg = OtConfig { epsilon: eps, ..OtConfig::default() };
        let s = sinkhorn_row_marginal_only(&mu, &c, &cfg).unwrap();
        let f = closed_form_row_plan(&c, eps).unwrap();
        let a = entropic_objective(&c, &s.plan, eps).unwrap();
        let b = entropic_objective(&c, &f.plan, eps).unwrap();
        prop_assert!((a - b).abs() < 1e-6);
        prop_assert!(s.source_residual() < 1e-9);
    }

    #[test]
    fn softmax_is_a_distribution_and_keeps_argmax(
        logits in prop::collection::vec(-30.0f64..30.0, 2..10),
        t in 0.01f64..10.0,
    ) {
        let p = softmax(&logits, t);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert_eq!(argmax(&p), argmax(&logits));
    }

    #[test]
    fn teacher_ema_is_convex(seed in any::<u64>(), decay in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = ModelParams::mlp(3, &[5], 3, &mut rng).unwrap();
        let b = ModelParams::mlp(3, &[5], 3, &mut rng).unwrap();
        let mut t = TeacherParams::from_student(&a, decay).unwrap();
        t.update(&b).unwrap();
        for ((tv, av), bv) in t.params.buffers().zip(a.buffers()).zip(b.buffers()) {
            for ((x, y), z) in tv.iter().zip(av).zip(bv) {
                prop_assert!(*x >= y.min(*z) - 1e-15 && *x <= y.max(*z) + 1e-15);
            }
        }
    }

    #[test]
    fn cost_update_keeps_structure(seed in any::<u64>(), k in 2usize..7, m in 0.0f64..=1.0, steps in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cost = CostMatrix::discrete(k, m).unwrap();
        for _ in 0..steps {
            let mut head = DenseMatrix::zeros(4, k);
            head.values_mut().iter_mut().for_each(|v| *v = rng.random_range(-3.0..3.0));
            cost.ema_update(&head).unwrap();
        }
        let c = &cost.values;
        for i in 0..k {
            prop_assert!(c.get(i, i).abs() < 1e-12);
            for j in 0..k {
                prop_assert!((c.get(i, j) - c.get(j, i)).abs() < 1e-12);
                prop_assert!((0.0..=2.0).contains(&c.get(i, j)));
            }
        }
    }

    #[test]
    fn discrete_metric_is_valid(k in 2usize..12) {
        let c = CostMatrix::discrete(k, 0.999).unwrap();
        prop_assert!(validate_metric(&c.values, 0.0).is_valid());
    }

    #[test]
    fn gradient_score_equals_expected_cost(seed in any::<u64>(), k in 2usize..7, d in 2usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let units: Vec<Vec<f64>> = (0..k).map(|_| unit(&mut rng, d)).collect();
        let head = head_from_units(&units);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let c = cosine_cost(&units);
        let cls = rng.random_range(0..k);
        let u = gradient_score_u(&x, &head, cls).unwrap();
        let e = expected_cost(&x, &head, &c, cls).unwrap();
        prop_assert!((u - e).abs() < 1e-9);
    }

    #[test]
    fn dendrogram_heights_never_decrease(seed in any::<u64>(), k in 2usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = hierarchical_cluster(&point_metric(&mut rng, k)).unwrap();
        prop_assert!(d.is_monotone());
        prop_assert_eq!(d.merges.len(), k - 1);
    }

    #[test]
    fn thresholds_stay_in_range(seed in any::<u64>(), k in 2usize..6, decay in 0.0f64..0.9999, batches in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut st = ThresholdState::new(k, decay).unwrap();
        for _ in 0..batches {
            let n = rng.random_range(1..9);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| simplex(&mut rng, k)).collect();
            st.update(&DenseMatrix::from_rows(&rows).unwrap()).unwrap();
            prop_assert!((0.0..=1.0).contains(&st.global));
            prop_assert!(st.class_probs.iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert!(st.histogram.iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert!(st.histogram.iter().sum::<f64>() <= 1.0 + 1e-6);
            let local = st.local_thresholds().unwrap();
            prop_assert!(local.iter().all(|&t| t <= st.global));
            prop_assert!(local.contains(&st.global));
        }
    }

    #[test]
    fn un3_nonnegative_and_attention_form(seed in any::<u64>(), k in 2usize..6, n in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let units: Vec<Vec<f64>> = (0..k).map(|_| unit(&mut rng, 4)).collect();
        let c = cosine_cost(&units);
        let teacher: Vec<Vec<f64>> = (0..n).map(|_| simplex(&mut rng, k)).collect();
        let student: Vec<Vec<f64>> = (0..n).map(|_| simplex(&mut rng, k)).collect();
        let b = BatchPredictions::new(
            DenseMatrix::from_rows(&teacher).unwrap(),
            DenseMatrix::from_rows(&student).unwrap(),
            &vec![0.0; k],
        ).unwrap();
        let l = loss_un3(&b, &c).unwrap().value;
        prop_assert!(l >= 0.0);
        let mut oracle = 0.0;
        for (q, p) in teacher.iter().zip(&student) {
            let v = &units[argmax(q)];
            let mixed: Vec<f64> = (0..4).map(|r| (0..k).map(|i| p[i] * units[i][r]).sum()).collect();
            oracle += 1.0 - dot(&mixed, v);
        }
        prop_assert!((l - oracle / n as f64).abs() < 1e-9);
    }

    #[test]
    fn sample_batch_is_class_balanced(seed in any::<u64>(), k in 2usize..5, per in 1usize..4, mu in 1usize..4) {
        let data = gen_gaussian_mixture(20, k, 3, 3.0, 1.0, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let split = split_labeled(&data, per + 1, &mut rng).unwrap();
        let b = per * k;
        let batch = sample_batch(&data, &split, b, mu, &AugmentConfig::default(), &mut rng).unwrap();
        let mut counts = vec![0; k];
        batch.labels.iter().for_each(|&y| counts[y] += 1);
        prop_assert!(counts.iter().all(|&c| c == per));
        prop_assert_eq!(batch.unlabeled_weak.rows(), mu * b);
        prop_assert_eq!(batch.unlabeled_strong.rows(), mu * b);
        let mut u = batch.unlabeled_indices.clone();
        u.sort_unstable();
        u.dedup();
        prop_assert_eq!(u.len(), mu * b);
    }

    #[test]
    fn generators_are_pure(seed in any::<u64>()) {
        prop_assert_eq!(gen_two_moons(40, 0.1, seed).unwrap(), gen_two_moons(40, 0.1, seed).unwrap());
        prop_assert_eq!(
            gen_gaussian_mixture(5, 3, 2, 2.0, 1.0, seed).unwrap(),
            gen_gaussian_mixture(5, 3, 2, 2.0, 1.0, seed).unwrap()
        );
    }

    #[test]
    fn image_augmentation_stays_in_range(seed in any::<u64>(), strong in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = InputLayout::Image { height: 6, width: 5, channels: 2 };
        let x: Vec<f64> = (0..60).map(|_| rng.random::<f64>()).collect();
        let s = if strong { Strength::Strong } else { Strength::Weak };
        let y = augment(&x, layout, s, &AugmentConfig::default(), &mut rng);
        prop_assert_eq!(y.len(), 60);
        prop_assert!(y.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
    }

    #[test]
    fn vector_augmentation_is_finite(seed in any::<u64>(), strong in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1e3..1e3)).collect();
        let s = if strong { Strength::Strong } else { Strength::Weak };
        let y = augment(&x, InputLayout::Vector { dim: 5 }, s, &AugmentConfig::default(), &mut rng);
        prop_assert!(y.iter().all(|v| v.is_finite()));
    }
}

/// Flattened parameter vector, in buffer order.
fn flat(p: &ModelParams) -> Vec<f64> {
    p.buffers().flat_map(|b| b.iter().copied()).collect()
}

fn nudge(p: &ModelParams, index: usize, h: f64) -> ModelParams {
    let mut q = p.clone();
    let mut seen = 0;
    for b in q.buffers_mut() {
        if index < seen + b.len() {
            b[index - seen] += h;
            break;
        }
        seen += b.len();
    }
    q
}

/// Parameter gradients of `Σ G ⊙ logits` for a fixed random `G`, against
/// central differences of the same scalar.
fn check_param_grads(params: &ModelParams, x: &DenseMatrix, rng: &mut ChaCha8Rng) {
    let pass = params.forward_batch(x, 1.0).unwrap();
    let mut g = DenseMatrix::zeros(pass.logits.rows(), pass.logits.cols());
    g.values_mut().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    let analytic: Vec<f64> = params
        .backward(&pass, &g)
        .unwrap()
        .grads
        .buffers()
        .flat_map(|b| b.iter().copied())
        .collect();
    let f = |p: &ModelParams| p.forward_batch(x, 1.0).unwrap().logits.frobenius_dot(&g).unwrap();
    let h = 1e-6;
    let numeric: Vec<f64> = (0..flat(params).len())
        .map(|i| (f(&nudge(params, i, h)) - f(&nudge(params, i, -h))) / (2.0 * h))
        .collect();
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let rel = diff / (norm2(&analytic) + norm2(&numeric));
    assert!(rel < 1e-4, "relative error {rel}");
}

#[test]
fn mlp_parameter_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for hidden in [vec![], vec![6], vec![7, 5]] {
        let p = ModelParams::mlp(4, &hidden, 3, &mut rng).unwrap();
        let mut x = DenseMatrix::zeros(5, 4);
        x.values_mut().iter_mut().for_each(|v| *v = rng.random_range(-2.0..2.0));
        check_param_grads(&p, &x, &mut rng);
    }
}

#[test]
fn conv_parameter_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let conv = ConvShape {
        height: 6,
        width: 6,
        in_channels: 2,
        out_channels: 3,
        kernel: 3,
        stride: 2,
    };
    let p = ModelParams::conv_mlp(conv, &[5], 3, &mut rng).unwrap();
    let mut x = DenseMatrix::zeros(3, 72);
    x.values_mut().iter_mut().for_each(|v| *v = rng.random::<f64>());
    check_param_grads(&p, &x, &mut rng);
}

#[test]
fn thresholds_converge_to_a_repeated_batch() {
    let batch = DenseMatrix::from_rows(&[[0.7, 0.2, 0.1], [0.1, 0.3, 0.6], [0.2, 0.5, 0.3]]).unwrap();
    let mut st = ThresholdState::new(3, 0.9).unwrap();
    for _ in 0..200 {
        st.update(&batch).unwrap();
    }
    assert!((st.global - 0.6).abs() < 1e-8);
    let mean = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
    for (p, m) in st.class_probs.iter().zip(mean) {
        assert!((p - m).abs() < 1e-8);
    }
}
