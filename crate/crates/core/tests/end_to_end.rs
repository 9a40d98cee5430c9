use dmtg_core::diffusion::{
    q_sample, sample_batch, Denoiser, DenoiserConfig, DiffusionModel, NoiseSchedule, SamplerConfig, ScheduleKind,
};
use dmtg_core::eval::{jsd, wasserstein_1d, JsdConfig};
use dmtg_core::generators::{generate_baseline, BaselineConfig, GeneratorKind};
use dmtg_core::geom::{complexity_ratio, mst_length, DEFAULT_KC};
use dmtg_core::oracle::{sample_task, synth_corpus, OracleProfile};
use dmtg_core::{rng, Point, TaskSpec};
use proptest::prelude::*;

fn polyline(p: &[Point]) -> f64 {
    p.windows(2).map(|w| ((w[1].x - w[0].x).powi(2) + (w[1].y - w[0].y).powi(2)).sqrt()).sum()
}

#[test]
fn oracle_corpus_is_bound_and_mostly_smooth() {
    let corpus = synth_corpus(300, &OracleProfile::default(), 64, 4).unwrap();
    let mut sum = 0.0;
    for s in &corpus {
        assert!(s.traj.is_task_bound(&s.task));
        let n = s.traj.nodes();
        let want = n[0].dist(n[n.len() - 1]) / polyline(n);
        assert!((s.task.alpha_bar() - want).abs() < 1e-12);
        let ts = s.traj.timestamps().unwrap();
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
        sum += want;
    }
    let mean = sum / corpus.len() as f64;
    assert!((0.9..0.99).contains(&mean), "{mean}");
}

#[test]
fn baselines_honour_the_task() {
    let bc = BaselineConfig::default();
    for seed in 0..20u64 {
        let task = sample_task(&OracleProfile::default(), 64, seed).unwrap();
        for kind in [GeneratorKind::Linear, GeneratorKind::Bezier, GeneratorKind::Fitts, GeneratorKind::NoiseInit] {
            let t = generate_baseline(kind, &task, seed, &bc).unwrap();
            assert!(t.is_task_bound(&task), "{}", kind.name());
            assert_eq!(t.effective_len(), task.m() + 1);
        }
        let lin = generate_baseline(GeneratorKind::Linear, &task, seed, &bc).unwrap();
        assert!((complexity_ratio(&lin).unwrap() - 1.0).abs() < 1e-12);
    }
    let task = sample_task(&OracleProfile::default(), 64, 0).unwrap();
    assert!(generate_baseline(GeneratorKind::Dmtg, &task, 0, &bc).is_err());
}

#[test]
fn forward_noise_pins_endpoints_and_scales_with_a() {
    let corpus = synth_corpus(40, &OracleProfile::default(), 64, 8).unwrap();
    let spread = |a: f64| {
        let mut acc = 0.0;
        for (i, s) in corpus.iter().enumerate() {
            let noisy = q_sample(&s.traj, &s.task, a, i as u64, DEFAULT_KC).unwrap();
            assert_eq!(noisy.start(), s.task.start());
            assert_eq!(noisy.end(), s.task.end());
            let d: f64 = noisy.nodes().iter().zip(s.traj.nodes()).map(|(p, q)| p.dist(*q)).sum();
            acc += d / (s.task.distance() * s.traj.nodes().len() as f64);
        }
        acc
    };
    let (lo, hi) = (spread(0.999), spread(0.1));
    assert!(lo < hi / 5.0, "{lo} {hi}");
    assert!(spread(1.0) < 1e-12);
}

#[test]
fn untrained_sampler_respects_hard_constraints() {
    let cfg = DenoiserConfig { base: 8, depth: 1, emb_dim: 8, cond_dim: 8, groups: 4, ..DenoiserConfig::default() };
    let model = DiffusionModel {
        net: Denoiser::new(cfg, 1).unwrap(),
        schedule: NoiseSchedule::build(ScheduleKind::Cosine, 1000).unwrap(),
        k_c: DEFAULT_KC,
        seed: 1,
    };
    let tasks: Vec<TaskSpec> =
        (0..8).map(|i| sample_task(&OracleProfile::default(), 64, i).unwrap().with_alpha_bar(0.5).unwrap()).collect();
    let seeds: Vec<u64> = (0..8).map(|i| rng::derive_seed(3, i)).collect();
    let sc = SamplerConfig { steps: 10, ..SamplerConfig::default() };
    let a = sample_batch(&tasks, &seeds, &model, &sc).unwrap();
    let b = sample_batch(&tasks, &seeds, &model, &sc).unwrap();
    for ((o, p), t) in a.iter().zip(&b).zip(&tasks) {
        assert!(o.traj.is_task_bound(t));
        assert_eq!(o.traj.effective_len(), t.m() + 1);
        assert_eq!(o.traj, p.traj);
    }
}

#[test]
fn jsd_is_symmetric_and_bounded() {
    let mut r = rng::rng(2);
    let p: Vec<Point> = (0..500).map(|_| Point::new(rng::normal(&mut r), rng::normal(&mut r))).collect();
    let q: Vec<Point> = (0..300).map(|_| Point::new(3.0 + rng::normal(&mut r), rng::normal(&mut r))).collect();
    let raw = JsdConfig { pseudocount: 0.0, ..JsdConfig::default() };
    let (pq, qp) = (jsd(&p, &q, &raw).unwrap(), jsd(&q, &p, &raw).unwrap());
    assert!((pq - qp).abs() < 1e-12);
    assert!(pq > 0.5 && pq <= 1.0);
    let far: Vec<Point> = p.iter().map(|v| Point::new(v.x + 100.0, v.y)).collect();
    assert!((jsd(&p, &far, &raw).unwrap() - 1.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn w1_matches_sorted_pairing(mut a in prop::collection::vec(-50.0f64..50.0, 1..40), shift in -5.0f64..5.0) {
        let b: Vec<f64> = a.iter().rev().map(|v| v * 0.5 + shift).collect();
        let got = wasserstein_1d(&a, &b).unwrap();
        a.sort_by(f64::total_cmp);
        let mut bs = b.clone();
        bs.sort_by(f64::total_cmp);
        let want = a.iter().zip(&bs).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
        prop_assert!((got - want).abs() <= 1e-9 * (1.0 + want));
    }

    #[test]
    fn mst_is_bounded_by_paths_and_nearest_neighbours(pts in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..30)) {
        let p: Vec<Point> = pts.iter().map(|&(x, y)| Point::new(x, y)).collect();
        let l = mst_length(&p).unwrap();
        prop_assert!(l <= polyline(&p) + 1e-9);
        // every point's nearest-neighbour edge is some MST edge
        let nn = p
            .iter()
            .enumerate()
            .map(|(i, a)| p.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, b)| a.dist(*b)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        prop_assert!(l + 1e-9 >= nn);
    }
}
