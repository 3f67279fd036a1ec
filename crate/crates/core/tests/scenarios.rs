use std::path::PathBuf;

use apportion::baselines::{train_csova, train_cscs, train_csovo, BaselineKind};
use apportion::data::{generate_synthetic, parse_libsvm_str, LibsvmOptions, SynthSpec};
use apportion::eval::{default_c_grid, grid_search, kfold_cv, Method, MethodSpec, Regularization, IterationBudget, TrainedModel};
use apportion::fisher::{expected_surrogate, minimize_expected_surrogate, random_instance};
use apportion::geometry::{bisector, margin_report, pair_distance_ratio, pairwise_norm_check, scaled_distance_ratio};
use apportion::kernel::{list_support_vectors, reconstruct_primal, train_kernel};
use apportion::linear::{objective, train_linear};
use apportion::loss::surrogate_loss;
use apportion::model::{augment, dot, KernelSpec, LabeledDataset, LinearModel, PriorityVector, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn theta(v: &[f64]) -> PriorityVector {
    PriorityVector::new(v.to_vec()).unwrap()
}

fn accuracy(pred: &[usize], data: &LabeledDataset) -> f64 {
    pred.iter().zip(data.labels()).filter(|(a, b)| a == b).count() as f64 / data.n() as f64
}

fn iris() -> LabeledDataset {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/iris.libsvm");
    parse_libsvm_str(&std::fs::read_to_string(path).unwrap(), &LibsvmOptions::default()).unwrap()
}

#[test]
fn separable_blobs_are_learned() {
    let data = generate_synthetic(&SynthSpec::two_blobs(3.0, 0.5, 200, 11)).unwrap();
    let (m, _) = train_linear(&data, &theta(&[1.0, 1.0]), &TrainConfig::new(0.01, 100_000, 3)).unwrap();
    let pred: Vec<usize> = (0..data.n()).map(|i| m.predict(data.x(i)).unwrap()).collect();
    assert!(accuracy(&pred, &data) >= 0.99);
}

#[test]
fn quadrants_are_fully_separated() {
    let data = generate_synthetic(&SynthSpec::quadrants(0.5, 100, 5)).unwrap();
    let (m, _) = train_linear(&data, &PriorityVector::uniform(4).unwrap(), &TrainConfig::new(1e-3, 100_000, 5)).unwrap();
    let pred: Vec<usize> = (0..data.n()).map(|i| m.predict(data.x(i)).unwrap()).collect();
    assert_eq!(accuracy(&pred, &data), 1.0);
}

#[test]
fn training_is_bit_deterministic() {
    let data = generate_synthetic(&SynthSpec::quadrants(0.6, 50, 1)).unwrap();
    let th = theta(&[10.0, 10.0, 1.0, 1.0]);
    let cfg = TrainConfig::new(1e-3, 20_000, 42);
    let (a, _) = train_linear(&data, &th, &cfg).unwrap();
    let (b, _) = train_linear(&data, &th, &cfg).unwrap();
    assert_eq!(a.weights().as_slice(), b.weights().as_slice());
    let ka = train_kernel(&data, &th, &cfg, &KernelSpec::rbf(0.5)).unwrap();
    let kb = train_kernel(&data, &th, &cfg, &KernelSpec::rbf(0.5)).unwrap();
    assert_eq!(ka, kb);
    let (c, _) = train_linear(&data, &th, &TrainConfig::new(1e-3, 20_000, 43)).unwrap();
    assert_ne!(a.weights().as_slice(), c.weights().as_slice());
}

#[test]
fn objective_falls_after_warmup() {
    let data = generate_synthetic(&SynthSpec::two_blobs(3.0, 0.6, 100, 2)).unwrap();
    let th = theta(&[2.0, 1.0]);
    for lambda in [1e-4, 1e-2, 1.0] {
        let (mut early, mut late) = (0.0, 0.0);
        for seed in 0..5 {
            let mut cfg = TrainConfig::new(lambda, 20_000, seed);
            cfg.record_objective_every = Some(1_000);
            let (m, trace) = train_linear(&data, &th, &cfg).unwrap();
            let (t, first) = trace.objective_samples[0];
            assert_eq!(t, 1_000);
            early += first;
            late += objective(&m, &data, lambda).unwrap();
        }
        assert!(late <= early, "lambda {}: {} > {}", lambda, late / 5.0, early / 5.0);
    }
}

#[test]
fn objective_hand_values() {
    let data = generate_synthetic(&SynthSpec::two_blobs(3.0, 0.6, 10, 2)).unwrap();
    let zero = LinearModel::new(apportion::Matrix::zeros(2, 3), PriorityVector::uniform(2).unwrap()).unwrap();
    assert_eq!(objective(&zero, &data, 0.5).unwrap(), 2.0);
    let only0 = data.subset(&data.indices_of(0)).unwrap();
    let zero = LinearModel::new(apportion::Matrix::zeros(2, 3), theta(&[2.0, 1.0])).unwrap();
    assert_eq!(objective(&zero, &only0, 0.5).unwrap(), 4.0);
}

#[test]
fn bisector_identity_on_trained_models() {
    let data = generate_synthetic(&SynthSpec::quadrants(0.6, 100, 3)).unwrap();
    let (m, _) = train_linear(&data, &theta(&[10.0, 10.0, 1.0, 1.0]), &TrainConfig::new(1e-3, 50_000, 3)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for (i, j) in [(0, 2), (1, 3), (0, 1), (2, 3)] {
        let n = bisector(&m, i, j).unwrap().normal().unwrap().to_vec();
        let nn = n[0] * n[0] + n[1] * n[1];
        let want = m.theta().get(j) / m.theta().get(i);
        for _ in 0..1_000 {
            let x = [rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)];
            let r = dot(&n, &augment(&x)) / nn;
            let p = [x[0] - r * n[0], x[1] - r * n[1]];
            let got = scaled_distance_ratio(&m, i, j, &p).unwrap();
            assert!((got - want).abs() <= 1e-9 * want, "pair ({},{}) {} vs {}", i, j, got, want);
        }
    }
}

#[test]
fn norm_inequality_holds_for_trained_models() {
    let data = generate_synthetic(&SynthSpec::quadrants(0.6, 50, 8)).unwrap();
    for th in [[1.0, 1.0, 1.0, 1.0], [10.0, 10.0, 1.0, 1.0], [1.0, 2.0, 3.0, 4.0]] {
        let (m, _) = train_linear(&data, &theta(&th), &TrainConfig::new(1e-2, 20_000, 8)).unwrap();
        assert!(pairwise_norm_check(m.weights()).holds);
        assert!(pairwise_norm_check(&m.scaled_rows()).holds);
    }
}

#[test]
fn margin_bound_holds_without_slack() {
    let data = generate_synthetic(&SynthSpec::two_blobs(4.0, 0.3, 100, 21)).unwrap();
    let mut checked = 0;
    for (seed, th) in [[1.0, 1.0], [2.0, 1.0], [5.0, 1.0]].iter().enumerate() {
        let (m, _) = train_linear(&data, &theta(th), &TrainConfig::new(1e-4, 200_000, seed as u64)).unwrap();
        let slack: f64 = (0..data.n()).map(|i| surrogate_loss(&m, data.x(i), data.y(i)).unwrap()).sum();
        let report = margin_report(&m, &data).unwrap();
        if slack > 0.0 {
            eprintln!("theta {:?}: slack {:.3e}, bound not asserted", th, slack);
            continue;
        }
        for p in &report.pairwise {
            assert!(p.gamma.unwrap() >= p.bound.unwrap() - 1e-12, "{:?}", p);
        }
        checked += 1;
    }
    assert!(checked > 0, "no run reached the hard-margin regime");
}

#[test]
fn linear_kernel_matches_primal() {
    let data = generate_synthetic(&SynthSpec::quadrants(0.8, 40, 4)).unwrap();
    let th = theta(&[3.0, 1.0, 1.0, 2.0]);
    let cfg = TrainConfig::new(1e-2, 20_000, 9);
    let (primal, _) = train_linear(&data, &th, &cfg).unwrap();
    let dual = reconstruct_primal(&train_kernel(&data, &th, &cfg, &KernelSpec::linear()).unwrap()).unwrap();
    for (a, b) in dual.weights().as_slice().iter().zip(primal.weights().as_slice()) {
        assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-3), "{} vs {}", a, b);
    }
    for i in 0..data.n() {
        assert_eq!(dual.predict(data.x(i)).unwrap(), primal.predict(data.x(i)).unwrap());
    }
}

#[test]
fn support_points_sit_near_the_boundary() {
    let data = generate_synthetic(&SynthSpec::two_blobs(2.5, 0.8, 200, 6)).unwrap();
    let th = theta(&[1.0, 1.0]);
    let km = train_kernel(&data, &th, &TrainConfig::new(1e-3, 100_000, 6), &KernelSpec::linear()).unwrap();
    let primal = reconstruct_primal(&km).unwrap();
    let n = bisector(&primal, 0, 1).unwrap().normal().unwrap().to_vec();
    let fnorm = (n[0] * n[0] + n[1] * n[1]).sqrt();
    let dist = |i: usize| dot(&n, &augment(data.x(i))).abs() / fnorm;
    let mut support: Vec<usize> = list_support_vectors(&km, 0).unwrap();
    support.extend(list_support_vectors(&km, 1).unwrap());
    support.sort_unstable();
    support.dedup();
    assert!(!support.is_empty() && support.len() < data.n());
    for c in 0..2 {
        let mut d: Vec<f64> = data.indices_of(c).into_iter().map(dist).collect();
        d.sort_by(f64::total_cmp);
        let median = d[d.len() / 2];
        let sv: Vec<f64> = support.iter().filter(|&&i| data.y(i) == c).map(|&i| dist(i)).collect();
        let mean = sv.iter().sum::<f64>() / sv.len() as f64;
        assert!(mean < median, "class {}: support mean {} vs median {}", c, mean, median);
    }
}

#[test]
fn csova_centres_uniform_boundary() {
    let mut ratios = 0.0;
    for seed in 0..5 {
        let data = generate_synthetic(&SynthSpec::two_blobs(3.0, 0.6, 200, seed)).unwrap();
        let m = train_csova(&data, &theta(&[1.0, 1.0]), &TrainConfig::new(1e-3, 200_000, seed)).unwrap();
        ratios += pair_distance_ratio(&m, &data, 0, 1).unwrap();
    }
    let r = ratios / 5.0;
    assert!((0.85..=1.18).contains(&r), "ratio {}", r);
}

#[test]
fn cscs_agrees_with_csova_on_two_uniform_classes() {
    let train = generate_synthetic(&SynthSpec::two_blobs(1.5, 1.0, 300, 31)).unwrap();
    let test = generate_synthetic(&SynthSpec::two_blobs(1.5, 1.0, 500, 32)).unwrap();
    let cfg = TrainConfig::new(1e-2, 100_000, 4);
    let a = train_csova(&train, &theta(&[1.0, 1.0]), &cfg).unwrap();
    let b = train_cscs(&train, &theta(&[1.0, 1.0]), &cfg).unwrap();
    let agree = (0..test.n()).filter(|&i| a.predict(test.x(i)).unwrap() == b.predict(test.x(i)).unwrap()).count();
    assert!(agree as f64 / test.n() as f64 >= 0.99, "agreement {}", agree);
}

/// Plain unweighted hinge-loss Pegasos, independent of the library solvers.
fn plain_binary(data: &LabeledDataset, pos: usize, neg: usize, lambda: f64, iters: u64, seed: u64) -> Vec<f64> {
    let idx: Vec<usize> = (0..data.n()).filter(|&i| data.y(i) == pos || data.y(i) == neg).collect();
    let mut w = vec![0.0; data.d() + 1];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 1..=iters {
        let i = idx[rng.random_range(0..idx.len())];
        let x = augment(data.x(i));
        let s = if data.y(i) == pos { 1.0 } else { -1.0 };
        let active = s * dot(&w, &x) < 1.0;
        let eta = 1.0 / (lambda * t as f64);
        for (wc, xc) in w.iter_mut().zip(&x) {
            *wc *= 1.0 - 1.0 / t as f64;
            if active {
                *wc += eta * s * xc;
            }
        }
    }
    w
}

#[test]
fn csovo_with_uniform_costs_tracks_plain_one_vs_one() {
    let data = generate_synthetic(&SynthSpec::quadrants(1.5, 100, 12)).unwrap();
    let k = data.k();
    let cfg = TrainConfig::new(1e-2, 50_000, 12);
    let m = train_csovo(&data, &PriorityVector::uniform(k).unwrap(), &cfg).unwrap();
    let ours = accuracy(&(0..data.n()).map(|i| m.predict(data.x(i)).unwrap()).collect::<Vec<_>>(), &data);

    let mut rows = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            rows.push((i, j, plain_binary(&data, i, j, 1e-2, 50_000, (i * k + j) as u64)));
        }
    }
    let plain: Vec<usize> = (0..data.n())
        .map(|p| {
            let x = augment(data.x(p));
            let mut votes = vec![0usize; k];
            for (i, j, w) in &rows {
                votes[if dot(w, &x) >= 0.0 { *i } else { *j }] += 1;
            }
            (0..k).max_by_key(|&c| (votes[c], std::cmp::Reverse(c))).unwrap()
        })
        .collect();
    let reference = accuracy(&plain, &data);
    assert!((ours - reference).abs() <= 0.02, "{} vs {}", ours, reference);
}

#[test]
fn iris_baselines_in_expected_band() {
    let data = iris();
    let th = theta(&[2.0, 1.0, 1.0]);
    for kind in [BaselineKind::Cscs, BaselineKind::Csovo] {
        let mut spec = MethodSpec::new(Method::Baseline(kind));
        spec.standardize = true;
            spec.seed = 1;
        let grid = grid_search(&data, &th, &spec, &default_c_grid(), &[], 5, 1).unwrap();
        let cv = kfold_cv(&data, &th, &grid.apply(&spec), 10, 2).unwrap();
        assert!((0.0..=0.15).contains(&cv.mean_expected_risk), "{}: {}", kind, cv.mean_expected_risk);
    }
}

#[test]
fn grid_search_ignores_grid_order() {
    let data = generate_synthetic(&SynthSpec::quadrants(2.0, 30, 2)).unwrap();
    let th = theta(&[10.0, 10.0, 1.0, 1.0]);
    let mut spec = MethodSpec::new(Method::Apportioned);
    spec.kernel = KernelSpec::rbf(1.0);
    spec.budget = IterationBudget::Fixed(2_000);
    let cs = [0.25, 4.0, 1.0, 64.0];
    let gs = [0.5, 0.0625, 2.0];
    let a = grid_search(&data, &th, &spec, &cs, &gs, 3, 5).unwrap();
    let mut cs2 = cs;
    cs2.reverse();
    let b = grid_search(&data, &th, &spec, &cs2, &[2.0, 0.5, 0.0625, 0.5], 3, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.cells.len(), 12);
    for cell in &a.cells {
        assert!(a.best_report.mean_expected_risk <= cell.expected_risk);
    }
    let best = a.apply(&spec);
    assert_eq!(best.regularization, Regularization::C(a.best_c));
    assert_eq!(Some(best.kernel.gamma), a.best_gamma);
}

#[test]
fn trained_model_dispatch_matches_direct_prediction() {
    let data = generate_synthetic(&SynthSpec::quadrants(1.0, 30, 9)).unwrap();
    let th = theta(&[1.0, 2.0, 1.0, 2.0]);
    let mut spec = MethodSpec::new(Method::Apportioned);
    spec.budget = IterationBudget::Fixed(5_000);
    spec.seed = 3;
    let model = spec.train(&data, &th).unwrap();
    let (direct, _) = train_linear(&data, &th, &TrainConfig::new(1e-3, 5_000, 3)).unwrap();
    assert_eq!(model, TrainedModel::Linear(direct));
}

/// Global minimum of the expected surrogate by enumerating every point at
/// which all but one coordinate sits on a breakpoint of its hinge terms.
fn vertex_minimum(p: &[f64], th: &PriorityVector) -> f64 {
    let k = p.len();
    let bp: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let mut v = vec![th.get(j)];
            v.extend((0..k).filter(|&l| l != j).map(|l| -th.get(l)));
            v
        })
        .collect();
    let mut best = f64::INFINITY;
    for free in 0..k {
        let fixed: Vec<usize> = (0..k).filter(|&j| j != free).collect();
        let combos = k.pow(fixed.len() as u32);
        for mut code in 0..combos {
            let mut f = vec![0.0; k];
            for &j in &fixed {
                f[j] = bp[j][code % k];
                code /= k;
            }
            f[free] = -fixed.iter().map(|&j| f[j]).sum::<f64>();
            best = best.min(expected_surrogate(&f, p, th).unwrap());
        }
    }
    best
}

#[test]
fn fisher_minimizer_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..300 {
        let (p, th) = random_instance(&mut rng);
        let sol = minimize_expected_surrogate(&p, &th).unwrap();
        let oracle = vertex_minimum(&p, &th);
        assert!((sol.value - oracle).abs() <= 1e-9 * oracle.max(1.0), "{:?} {:?}: {} vs {}", p, th, sol.value, oracle);
    }
}
