use cia::optimize::{optimize_gmv, solve_level_projection, CostWindow, PiecewiseLinear, ValuationGrid};
use proptest::prelude::*;

type Options = Vec<Vec<(f64, f64, f64, f64)>>;

fn grid_strategy() -> impl Strategy<Value = (Options, Vec<f64>)> {
    (1usize..5, 1usize..5).prop_flat_map(|(n, k)| {
        (
            prop::collection::vec(prop::collection::vec((0.0f64..50.0, 0.0f64..10.0), k), n),
            prop::collection::vec(0.5f64..8.0, n),
        )
            .prop_map(|(raw, baselines)| {
                let options = raw
                    .into_iter()
                    .map(|mut opts| {
                        opts.sort_by(|a, b| a.1.total_cmp(&b.1));
                        opts.into_iter()
                            .enumerate()
                            .map(|(j, (gmv, cost))| ((j + 1) as f64, gmv, cost, 1.0))
                            .collect()
                    })
                    .collect();
                (options, baselines)
            })
    })
}

fn level_boxes() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0f64..10.0, 0.0f64..5.0).prop_map(|(lo, w)| (lo, lo + w)), 1..6)
}

proptest! {
    #[test]
    fn one_option_per_ad_and_honest_window((options, baselines) in grid_strategy(), beta in 0.3f64..1.0, eps in 0.0f64..0.3) {
        let window = CostWindow::new(beta, eps.min(beta * 0.99)).unwrap();
        let grid = ValuationGrid::from_points(options.clone(), baselines.clone()).unwrap();
        let r = optimize_gmv(&grid, window).unwrap();
        let sel = r.selection.clone().unwrap();
        prop_assert_eq!(sel.len(), options.len());
        prop_assert!(sel.iter().zip(&options).all(|(&j, o)| j < o.len()));
        let total: f64 = baselines.iter().sum();
        let (lo, hi) = ((window.beta - window.epsilon) * total, (window.beta + window.epsilon) * total);
        let unit = window.beta * total / 1000.0;
        let cost: f64 = sel.iter().zip(&options).map(|(&j, o)| o[j].2).sum();
        if r.feasible {
            // Each option rounds by at most half a cell.
            let slack = 0.5 * unit * options.len() as f64 + 1e-9;
            prop_assert!(cost >= lo - slack && cost <= hi + slack);
        }
    }

    #[test]
    fn wider_windows_never_lose_gmv((options, baselines) in grid_strategy(), eps in 0.0f64..0.4, extra in 0.0f64..0.4) {
        let grid = ValuationGrid::from_points(options, baselines).unwrap();
        let narrow = optimize_gmv(&grid, CostWindow::new(1.0, eps).unwrap()).unwrap();
        let wide = optimize_gmv(&grid, CostWindow::new(1.0, (eps + extra).min(0.99)).unwrap()).unwrap();
        if narrow.feasible {
            prop_assert!(wide.feasible);
            prop_assert!(wide.gmv >= narrow.gmv);
        }
    }

    #[test]
    fn open_window_gives_clipped_common_level(boxes in level_boxes()) {
        let maps: Vec<PiecewiseLinear> = boxes.iter().map(|&(lo, hi)| PiecewiseLinear::identity(lo, hi)).collect();
        let sol = solve_level_projection(&boxes, &maps, (0.0, 1e9)).unwrap();
        for (s, &(lo, hi)) in sol.s.iter().zip(&boxes) {
            prop_assert!(*s >= lo && *s <= hi);
            if *s > lo && *s < hi {
                prop_assert!((s - sol.level).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn binding_window_is_respected(boxes in level_boxes(), f in 0.0f64..1.0, width in 0.0f64..2.0) {
        let maps: Vec<PiecewiseLinear> = boxes.iter().map(|&(lo, hi)| PiecewiseLinear::identity(lo, hi)).collect();
        let lo: f64 = boxes.iter().map(|b| b.0).sum();
        let hi: f64 = boxes.iter().map(|b| b.1).sum();
        let a = lo + f * (hi - lo);
        let window = (a, (a + width).min(hi));
        let sol = solve_level_projection(&boxes, &maps, window).unwrap();
        let total: f64 = sol.s.iter().sum();
        prop_assert!(total >= window.0 - 1e-6 && total <= window.1 + 1e-6);
        for (s, &(blo, bhi)) in sol.s.iter().zip(&boxes) {
            prop_assert!(*s >= blo - 1e-6 && *s <= bhi + 1e-6);
        }
    }
}

#[test]
fn identity_example_matches_grid_search() {
    let boxes = [(1.0, 2.0), (3.0, 4.0), (1.0, 5.0)];
    let maps: Vec<PiecewiseLinear> = boxes.iter().map(|&(lo, hi)| PiecewiseLinear::identity(lo, hi)).collect();
    let sol = solve_level_projection(&boxes, &maps, (6.0, 9.0)).unwrap();
    let mut best = f64::INFINITY;
    for i in 0..=100 {
        for j in 0..=100 {
            for k in 0..=400 {
                let s = [1.0 + i as f64 * 0.01, 3.0 + j as f64 * 0.01, 1.0 + k as f64 * 0.01];
                let total: f64 = s.iter().sum();
                if (6.0..=9.0).contains(&total) {
                    let m = total / 3.0;
                    best = best.min(s.iter().map(|v| (v - m) * (v - m)).sum());
                }
            }
        }
    }
    assert!((sol.objective - best).abs() <= 1e-3, "{} vs {best}", sol.objective);
}
