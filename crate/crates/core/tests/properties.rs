use proptest::prelude::*;

use scout_core::graph::{scene_graph, AdjacencyMode, GraphBatch, MIN_DISTANCE};
use scout_core::loss::{ade, fde, huber, overlap_count, total_loss_with_overlaps, LossConfig, CLASS_WEIGHTS};
use scout_core::numerics::{Matrix, Tape};
use scout_core::traj::{
    denormalize_sample, normalize_sample, resample, window_sequences, AgentTrack, AgentType, Pose, SplitProvenance,
    WindowConfig,
};

type Track = (usize, i64, i64, [f64; 2], [f64; 2]);

/// `(recording, first_frame, length, start, velocity)`.
fn track_strategy() -> impl Strategy<Value = Track> {
    (
        0usize..3,
        0i64..40,
        1i64..60,
        [-500.0..500.0f64, -500.0..500.0f64],
        [-3.0..3.0f64, -3.0..3.0f64],
    )
}

fn tracks_of(specs: &[Track]) -> Vec<AgentTrack> {
    specs
        .iter()
        .enumerate()
        .map(|(k, &(rec, first, len, p, v))| AgentTrack {
            recording_id: format!("rec{rec}"),
            agent_id: k as i64,
            agent_type: AgentType::ALL[k % 3],
            frames: (0..len)
                .map(|t| Pose {
                    frame: first + t,
                    x: p[0] + v[0] * t as f64,
                    y: p[1] + v[1] * t as f64,
                    heading: 0.0,
                })
                .collect(),
        })
        .collect()
}

fn points(n: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec([-30.0..30.0f64, -30.0..30.0f64], n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn windows_are_never_empty_and_normalisation_round_trips(
        specs in prop::collection::vec(track_strategy(), 1..8),
        t_obs in 1usize..6,
        t_pred in 1usize..6,
        stride in 1usize..4,
    ) {
        let tracks = tracks_of(&specs);
        let samples = window_sequences(&tracks, WindowConfig { t_obs, t_pred, stride }).unwrap();
        for s in &samples {
            prop_assert!(s.num_agents() >= 1);
            for i in 0..s.num_agents() {
                prop_assert!(s.is_present(i, t_obs - 1));
            }
            let back = denormalize_sample(&normalize_sample(s));
            prop_assert!(back.obs.max_abs_diff(&s.obs).unwrap() <= 1e-12);
            prop_assert!(back.fut.max_abs_diff(&s.fut).unwrap() <= 1e-12);
            prop_assert_eq!(&back.presence, &s.presence);
        }
    }

    #[test]
    fn resampling_keeps_each_first_frame(
        specs in prop::collection::vec(track_strategy(), 1..6),
        step in 1i64..12,
    ) {
        let tracks = tracks_of(&specs);
        let out = resample(&tracks, 2.5 * step as f64, 2.5).unwrap();
        for (a, b) in tracks.iter().zip(&out) {
            let (fa, fb) = (a.frames[0], b.frames[0]);
            prop_assert_eq!((fb.x, fb.y), (fa.x, fa.y));
            prop_assert_eq!(fb.frame, fa.frame.div_euclid(step));
            prop_assert!(b.frames.windows(2).all(|w| w[0].frame < w[1].frame));
        }
    }

    #[test]
    fn fraction_split_is_a_disjoint_cover(
        ids in prop::collection::btree_set("[a-z]{1,4}", 1..20),
        test in 0.0..0.9f64,
        val in 0.0..0.9f64,
        seed in any::<u64>(),
    ) {
        let ids: Vec<String> = ids.into_iter().collect();
        let p = SplitProvenance::by_fraction(&ids, test, val, seed);
        prop_assert!(p.is_disjoint());
        prop_assert!(!p.train.is_empty());
        let mut all: Vec<String> = p.train.iter().chain(&p.val).chain(&p.test).cloned().collect();
        all.sort();
        prop_assert_eq!(all, ids);
    }

    #[test]
    fn adjacency_structure(pos in points(7), radius in 1.0..40.0f64) {
        let n = pos.len();
        let kernel = scene_graph(Matrix::zeros(n, 1), pos.clone(), AdjacencyMode::Kernel, radius).unwrap();
        let binary = scene_graph(Matrix::zeros(n, 1), pos.clone(), AdjacencyMode::Binary, radius).unwrap();
        for i in 0..n {
            prop_assert_eq!(kernel.adjacency.get(i, i), 1.0);
            prop_assert_eq!(binary.adjacency.get(i, i), 1.0);
            for j in 0..n {
                let a = kernel.adjacency.get(i, j);
                prop_assert_eq!(a, kernel.adjacency.get(j, i));
                let d = ((pos[i][0] - pos[j][0]).powi(2) + (pos[i][1] - pos[j][1]).powi(2)).sqrt();
                prop_assert_eq!(a > 0.0, i == j || d <= radius);
                prop_assert_eq!(binary.adjacency.get(i, j) > 0.0, a > 0.0);
            }
        }
    }

    #[test]
    fn relabelling_permutes_adjacency(pos in points(6), perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle()) {
        let g = scene_graph(Matrix::zeros(6, 1), pos.clone(), AdjacencyMode::Kernel, 20.0).unwrap();
        let moved: Vec<[f64; 2]> = perm.iter().map(|&p| pos[p]).collect();
        let h = scene_graph(Matrix::zeros(6, 1), moved, AdjacencyMode::Kernel, 20.0).unwrap();
        for r in 0..6 {
            for c in 0..6 {
                prop_assert_eq!(h.adjacency.get(r, c), g.adjacency.get(perm[r], perm[c]));
            }
        }
    }

    #[test]
    fn closer_neighbours_weigh_more(d1 in MIN_DISTANCE..19.0f64, gap in 1e-3..1.0f64, angle in 0.0..6.28f64) {
        let d2 = d1 + gap;
        let pos = vec![[0.0, 0.0], [d1 * angle.cos(), d1 * angle.sin()], [-d2, 0.0]];
        let g = scene_graph(Matrix::zeros(3, 1), pos, AdjacencyMode::Kernel, 20.0).unwrap();
        prop_assert!(g.adjacency.get(0, 1) > g.adjacency.get(0, 2));
    }

    #[test]
    fn masked_softmax_rows_are_distributions(
        x in prop::collection::vec(-30.0..30.0f64, 20),
        mask in prop::collection::vec(any::<bool>(), 20),
    ) {
        let mut mask = mask;
        for r in 0..4 {
            mask[r * 5] = true;
        }
        let mut tape = Tape::new();
        let v = tape.leaf(Matrix::from_vec(4, 5, x).unwrap());
        let s = tape.softmax_rows(v, &mask).unwrap();
        let out = tape.value(s);
        for r in 0..4 {
            let row = out.row(r);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            for c in 0..5 {
                if !mask[r * 5 + c] {
                    prop_assert_eq!(row[c], 0.0);
                }
            }
        }
    }

    #[test]
    fn segment_softmax_groups_are_distributions(
        x in prop::collection::vec(-30.0..30.0f64, 16),
        seg in prop::collection::vec(0usize..4, 8),
    ) {
        let mut tape = Tape::new();
        let v = tape.leaf(Matrix::from_vec(8, 2, x).unwrap());
        let s = tape.segment_softmax(v, &seg).unwrap();
        let out = tape.value(s);
        for g in 0..4 {
            for c in 0..2 {
                let rows: Vec<usize> = (0..8).filter(|&r| seg[r] == g).collect();
                if !rows.is_empty() {
                    let total: f64 = rows.iter().map(|&r| out.get(r, c)).sum();
                    prop_assert!((total - 1.0).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn gradients_of_a_sum_add(
        x in prop::collection::vec(-3.0..3.0f64, 6),
        w in prop::collection::vec(-3.0..3.0f64, 6),
    ) {
        let x = Matrix::from_vec(2, 3, x).unwrap();
        let w = Matrix::from_vec(3, 2, w).unwrap();
        let f = |tape: &mut Tape, xv, wv| {
            let h = tape.matmul(xv, wv).unwrap();
            let s = tape.sigmoid(h);
            tape.sum(s)
        };
        let g = |tape: &mut Tape, xv| {
            let h = tape.huber(xv, 1.0);
            tape.sum(h)
        };
        let grad = |which: u8| {
            let mut tape = Tape::new();
            let xv = tape.leaf(x.clone());
            let wv = tape.leaf(w.clone());
            let root = match which {
                0 => f(&mut tape, xv, wv),
                1 => g(&mut tape, xv),
                _ => {
                    let a = f(&mut tape, xv, wv);
                    let b = g(&mut tape, xv);
                    tape.add(a, b).unwrap()
                }
            };
            let gr = tape.backward(root).unwrap();
            (gr.wrt(xv), gr.wrt(wv))
        };
        let (fx, fw) = grad(0);
        let (gx, gw) = grad(1);
        let (sx, sw) = grad(2);
        let mut ex = fx.clone();
        ex.add_assign(&gx).unwrap();
        let mut ew = fw.clone();
        ew.add_assign(&gw).unwrap();
        prop_assert!(sx.max_abs_diff(&ex).unwrap() <= 1e-12);
        prop_assert!(sw.max_abs_diff(&ew).unwrap() <= 1e-12);
    }

    #[test]
    fn huber_is_continuous_with_bounded_slope(e in -10.0..10.0f64, delta in 0.05..5.0f64) {
        for eps in [1e-6, 1e-9] {
            prop_assert!((huber(delta + eps, delta) - huber(delta - eps, delta)).abs() <= 2.0 * delta * eps * (1.0 + 1e-6));
        }
        let mut tape = Tape::new();
        let v = tape.leaf(Matrix::scalar(e));
        let h = tape.huber(v, delta);
        let d = tape.backward(h).unwrap().wrt(v).item();
        prop_assert!(d.abs() <= delta);
        prop_assert!(huber(e, delta) >= 0.0);
    }

    #[test]
    fn loss_grows_with_overlap(
        pred in prop::collection::vec(-5.0..5.0f64, 12),
        target in prop::collection::vec(-5.0..5.0f64, 12),
        p in 0.0..1.0f64,
        dp in 0.0..1.0f64,
        alpha in 0.0..10.0f64,
    ) {
        let g = scene_graph(Matrix::zeros(2, 1), vec![[0.0, 0.0], [1.0, 0.0]], AdjacencyMode::Kernel, 20.0).unwrap();
        let batch = GraphBatch::single(&g).unwrap();
        let cfg = LossConfig { alpha, ..LossConfig::default() };
        let value = |overlap: f64| {
            let mut tape = Tape::new();
            let pv = tape.leaf(Matrix::from_vec(2, 6, pred.clone()).unwrap());
            let t = Matrix::from_vec(2, 6, target.clone()).unwrap();
            let out = total_loss_with_overlaps(&mut tape, pv, &t, &[true, true], &batch, &cfg, &[overlap]).unwrap();
            tape.value(out.loss).item()
        };
        prop_assert!(value(p + dp) >= value(p));
    }

    #[test]
    fn displacement_metrics_vanish_only_at_the_truth(
        gt in prop::collection::vec(-5.0..5.0f64, 12),
        noise in prop::collection::vec(-1.0..1.0f64, 12),
    ) {
        let gt = Matrix::from_vec(3, 4, gt).unwrap();
        let mask = [true, false, true];
        prop_assert_eq!(ade(&gt, &gt, &mask).unwrap(), 0.0);
        prop_assert_eq!(fde(&gt, &gt, &mask).unwrap(), 0.0);
        let pred = gt.zip_map(&Matrix::from_vec(3, 4, noise).unwrap(), |a, b| a + b).unwrap();
        let a = ade(&pred, &gt, &mask).unwrap();
        let f = fde(&pred, &gt, &mask).unwrap();
        prop_assert!(a >= 0.0 && f >= 0.0);
        let moved = [0usize, 2].iter().any(|&i| pred.row(i) != gt.row(i));
        prop_assert_eq!(a > 0.0, moved);
        let last_moved = [0usize, 2].iter().any(|&i| pred.row(i)[2..] != gt.row(i)[2..]);
        prop_assert_eq!(f > 0.0, last_moved);
    }
}

#[test]
fn class_weights_sum_to_one() {
    assert!((CLASS_WEIGHTS.iter().sum::<f64>() - 1.0).abs() < 1e-15);
}

/// Exact intersection of integer segments by solving `p + s·r = q + u·v`
/// with rational `s, u`; collinear pairs reduce to interval overlap along the
/// shared line. Zero-length segments meet only at a shared endpoint.
fn oracle_intersect(p1: [i64; 2], p2: [i64; 2], q1: [i64; 2], q2: [i64; 2]) -> bool {
    if p1 == p2 || q1 == q2 {
        return p1 == q1 || p1 == q2 || p2 == q1 || p2 == q2;
    }
    let cross = |a: [i64; 2], b: [i64; 2]| a[0] * b[1] - a[1] * b[0];
    let sub = |a: [i64; 2], b: [i64; 2]| [a[0] - b[0], a[1] - b[1]];
    let r = sub(p2, p1);
    let v = sub(q2, q1);
    let w = sub(q1, p1);
    let den = cross(r, v);
    if den == 0 {
        if cross(w, r) != 0 {
            return false;
        }
        let dot = |a: [i64; 2], b: [i64; 2]| a[0] * b[0] + a[1] * b[1];
        let rr = dot(r, r);
        let (a, b) = (dot(w, r), dot(sub(q2, p1), r));
        return a.min(b) <= rr && a.max(b) >= 0;
    }
    let s = cross(w, v);
    let u = cross(w, r);
    let within = |num: i64| if den > 0 { (0..=den).contains(&num) } else { (den..=0).contains(&num) };
    within(s) && within(u)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    /// A small grid forces touching, collinear and stationary cases.
    #[test]
    fn overlap_matches_exhaustive_oracle_on_a_grid(
        n in 2usize..=8,
        t_pred in 2usize..=12,
        coords in prop::collection::vec(-3i64..=3, 8 * 12 * 2),
    ) {
        let at = |i: usize, t: usize, c: usize| coords[(i * 12 + t) * 2 + c];
        let pred = Matrix::from_fn(n, 2 * t_pred, |i, k| at(i, k / 2, k % 2) as f64);
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let mut hits = 0;
        for &(i, j) in &pairs {
            for t in 0..t_pred - 1 {
                let p = |a: usize, t: usize| [at(a, t, 0), at(a, t, 1)];
                if oracle_intersect(p(i, t), p(i, t + 1), p(j, t), p(j, t + 1)) {
                    hits += 1;
                }
            }
        }
        let count = overlap_count(&pred, pairs.iter().copied());
        prop_assert_eq!(count.hits, hits);
        prop_assert_eq!(count.slots, pairs.len() * (t_pred - 1));
    }
}
