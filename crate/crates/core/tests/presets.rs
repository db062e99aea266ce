//! Hand-built and generated scenarios with known qualitative outcomes.

use edgesim::config::paper_fig4;
use edgesim::formation::{form_coalitions, Evaluator};
use edgesim::game::GameSettings;
use edgesim::scenario::generate_scenario;
use edgesim::testkit::{line_game, LineSpec};
use edgesim::Game;

/// CPU speed with capacity `cap` tasks per slot at eta = 0.9, rho = 1e8.
fn cpu(cap: f64) -> f64 {
    cap / 0.9 * 1e8
}

/// Thirteen SBSs in four physical clusters plus two remote sellers (6, 11).
/// Buyer 8 needs 18 tasks and its only reachable seller 3 has 10 spare.
fn clustered() -> LineSpec {
    let mut sbs_x = vec![0.0; 13];
    let mut caps = vec![0.0; 13];
    let mut mues = Vec::new();
    let mut trust = Vec::new();
    let mut place = |i: usize, x: f64, cap: f64, load: f64| {
        sbs_x[i] = x;
        caps[i] = cap;
        mues.push((i, x + 5.0, load, 0.0));
    };
    // Cluster A.
    place(3, 0.0, 12.0, 2.0);
    place(8, 100.0, 2.0, 20.0);
    // Cluster B: two sellers, two buyers.
    place(2, 1000.0, 15.0, 3.0);
    place(7, 1040.0, 4.0, 9.0);
    place(5, 1080.0, 15.0, 4.0);
    place(12, 1120.0, 3.0, 8.0);
    // Cluster C: sellers only.
    for (k, i) in [0, 1, 4, 9, 10].into_iter().enumerate() {
        place(i, 2000.0 + 50.0 * k as f64, 10.0, 3.0);
    }
    // Remote sellers.
    place(6, 3000.0, 10.0, 2.0);
    place(11, 4000.0, 10.0, 2.0);
    for group in [vec![3, 8], vec![2, 5, 7, 12], vec![0, 1, 4, 9, 10]] {
        for &a in &group {
            for &b in &group {
                if a != b {
                    trust.push((a, b, 0.9));
                }
            }
        }
    }
    LineSpec {
        sbs_x,
        cpu: caps.into_iter().map(cpu).collect(),
        mues,
        trust,
        ..LineSpec::default()
    }
}

#[test]
fn remote_sellers_stay_isolated_and_the_lone_pair_trades_ten() {
    let g = line_game(&clustered());
    assert!((g.surplus(8) + 18.0).abs() < 1e-9);
    assert!((g.surplus(3) - 10.0).abs() < 1e-9);
    let eval = Evaluator::new(&g).unwrap();
    let f = form_coalitions(&eval).unwrap();
    assert_eq!(f.partition.coalition_of(6), Some(&[6][..]));
    assert_eq!(f.partition.coalition_of(11), Some(&[11][..]));
    assert_eq!(f.partition.coalition_of(8), Some(&[3, 8][..]));

    let a = &f.allocation;
    let moved = a.reassociated(8, 3) + a.peer(8, 3);
    assert!((moved - 10.0).abs() < 1e-9, "moved {moved}");
    assert!((a.cloud(8) - 8.0).abs() < 1e-9);
    // Isolated SBSs keep their standalone utility.
    for i in [6, 11] {
        assert_eq!(f.phi()[i], eval.standalone(i));
    }
}

#[test]
fn seller_only_clusters_do_not_merge() {
    let g = line_game(&clustered());
    let f = form_coalitions(&Evaluator::new(&g).unwrap()).unwrap();
    for i in [0, 1, 4, 9, 10] {
        assert_eq!(f.partition.coalition_of(i).unwrap().len(), 1);
    }
}

#[test]
fn a_single_buyer_forms_at_most_one_coalition() {
    let spec = LineSpec {
        sbs_x: vec![0.0, 60.0, 120.0, 180.0],
        cpu: vec![cpu(10.0), cpu(3.0), cpu(10.0), cpu(10.0)],
        mues: vec![
            (0, 0.0, 2.0, 0.0),
            (1, 60.0, 9.0, 0.0),
            (2, 120.0, 2.0, 0.0),
            (3, 180.0, 2.0, 0.0),
        ],
        trust: vec![(1, 0, 1.0), (1, 2, 1.0), (1, 3, 1.0)],
        settings: GameSettings::default(),
        ..LineSpec::default()
    };
    let g = line_game(&spec);
    let f = form_coalitions(&Evaluator::new(&g).unwrap()).unwrap();
    let big: Vec<&Vec<usize>> = f.partition.coalitions().iter().filter(|c| c.len() > 1).collect();
    assert!(big.len() <= 1);
    assert!(big.iter().all(|c| c.contains(&1)), "{}", f.partition);
}

fn isolated_share(weights: [f64; 3]) -> (usize, usize) {
    let mut cfg = paper_fig4();
    let w = &mut cfg.scenario.weights;
    (w.w_c, w.w_r, w.w_0) = (weights[0], weights[1], weights[2]);
    let (mut isolated, mut total) = (0, 0);
    for seed in 1..=20 {
        let s = generate_scenario(&cfg.scenario, seed).unwrap();
        let g = Game::new(&s, cfg.game.clone()).unwrap();
        let f = form_coalitions(&Evaluator::new(&g).unwrap()).unwrap();
        isolated += f.partition.coalitions().iter().filter(|c| c.len() == 1).count();
        total += g.num_sbs();
    }
    (isolated, total)
}

#[test]
fn heavy_weights_isolate_more_sbss() {
    let (light, total) = isolated_share([0.1, 0.1, 1.0]);
    let (heavy, _) = isolated_share([1.5, 1.0, 1.0]);
    // Measured: 33 and 94 of 260.
    assert!(heavy >= 2 * light, "light {light}, heavy {heavy} of {total}");
    assert!(4 * heavy > total);
}
