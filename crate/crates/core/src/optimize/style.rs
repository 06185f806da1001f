//! Style comparison: spread impressions across a campaign's ADs as evenly as
//! the per-AD impression boxes and the campaign cost window allow.
//!
//! The solver first searches the level family `s_i(t) = clip(t, box_i)`,
//! which holds the optimum whenever the window does not bind. When it binds,
//! the allocation is refined by projected gradient in cost coordinates,
//! where the feasible set (per-AD cost boxes and a total-cost slab) is
//! convex and projection is a one-dimensional shift search, then polished
//! by exact line searches that trade cost between pairs of ADs.

use serde::{Deserialize, Serialize};

use super::{normalized_std, squared_deviation, AllocationResult, CostWindow, Demand, PiecewiseLinear, ValuationGrid};
use crate::error::{Error, Result};
use crate::model::{AuctionLog, DayFilter, ReplaySummary};
use crate::replay::{evaluate, invert_cost, BidPolicy, BidRule};

const BISECTION_STEPS: usize = 200;
const MAX_GRADIENT_STEPS: usize = 10_000;
const MIN_STEP: f64 = 1e-9;
const MAX_POLISH_PASSES: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelProjection {
    /// Impressions per AD.
    pub s: Vec<f64>,
    /// Cost per AD, `cost_map_i(s_i)`.
    pub z: Vec<f64>,
    /// Common level of the best level-family point.
    pub level: f64,
    /// Sum of squared deviations of `s` from its mean.
    pub objective: f64,
}

struct Instance {
    boxes: Vec<(f64, f64)>,
    cost: Vec<PiecewiseLinear>,
    impressions: Vec<PiecewiseLinear>,
    zbox: Vec<(f64, f64)>,
    window: (f64, f64),
}

impl Instance {
    fn level_point(&self, t: f64) -> Vec<f64> {
        self.boxes.iter().map(|&(lo, hi)| t.clamp(lo, hi)).collect()
    }

    fn total_cost(&self, s: &[f64]) -> f64 {
        s.iter().zip(&self.cost).map(|(&v, c)| c.eval(v)).sum()
    }

    fn in_window(&self, cost: f64) -> bool {
        cost >= self.window.0 && cost <= self.window.1
    }

    fn impressions_of(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.impressions).map(|(&v, f)| f.eval(v)).collect()
    }

    /// Projection onto the cost boxes intersected with the window slab.
    fn project(&self, w: &[f64]) -> Vec<f64> {
        let shifted = |nu: f64| -> Vec<f64> {
            w.iter()
                .zip(&self.zbox)
                .map(|(&v, &(lo, hi))| (v - nu).clamp(lo, hi))
                .collect()
        };
        let sum = |x: &[f64]| x.iter().sum::<f64>();
        let base = shifted(0.0);
        let total = sum(&base);
        let (b, big_b) = self.window;
        if total >= b && total <= big_b {
            return base;
        }
        // Shift sum is non-increasing in nu; `feasible` stays on the side of
        // the violated edge that satisfies it.
        let above = total > big_b;
        let (mut feasible, mut other) = if above {
            let top = w
                .iter()
                .zip(&self.zbox)
                .map(|(&v, &(lo, _))| v - lo)
                .fold(0.0, f64::max);
            (top, 0.0)
        } else {
            let bottom = w
                .iter()
                .zip(&self.zbox)
                .map(|(&v, &(_, hi))| v - hi)
                .fold(0.0, f64::min);
            (bottom, 0.0)
        };
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (feasible + other);
            if mid == feasible || mid == other {
                break;
            }
            let s = sum(&shifted(mid));
            if (above && s <= big_b) || (!above && s >= b) {
                feasible = mid;
            } else {
                other = mid;
            }
        }
        shifted(feasible)
    }

    fn objective_z(&self, z: &[f64]) -> f64 {
        squared_deviation(&self.impressions_of(z))
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let s = self.impressions_of(z);
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        s.iter()
            .zip(z)
            .zip(&self.impressions)
            .map(|((&si, &zi), f)| {
                let dev = si - mean;
                let slope = if dev > 0.0 { f.slope_left(zi) } else { f.slope_right(zi) };
                2.0 * dev * slope
            })
            .collect()
    }

    /// Projected gradient with Armijo step halving.
    fn descend(&self, start: Vec<f64>) -> Vec<f64> {
        let max_slope = self
            .impressions
            .iter()
            .flat_map(|f| {
                let knots: Vec<_> = f.knots().collect();
                knots
                    .windows(2)
                    .filter(|w| w[1].0 > w[0].0)
                    .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max);
        if max_slope <= 0.0 {
            return start;
        }
        let base_step = 0.5 / (max_slope * max_slope);
        let mut step = base_step;
        let mut z = start;
        let mut value = self.objective_z(&z);
        for _ in 0..MAX_GRADIENT_STEPS {
            let g = self.gradient(&z);
            if g.iter().all(|v| *v == 0.0) {
                break;
            }
            let mut accepted = false;
            while step >= MIN_STEP * base_step {
                let trial: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                let cand = self.project(&trial);
                let decrease: f64 = g.iter().zip(cand.iter().zip(&z)).map(|(gi, (c, zi))| gi * (c - zi)).sum();
                let cand_value = self.objective_z(&cand);
                if decrease < 0.0 && cand_value <= value + 1e-4 * decrease {
                    z = cand;
                    value = cand_value;
                    step *= 2.0;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        z
    }

    /// Exact line search moving cost between two ADs (or one AD against
    /// the window slack when `j` is `None`). Returns the improved point.
    fn exchange(&self, z: &[f64], i: usize, j: Option<usize>) -> Option<Vec<f64>> {
        let (lo_i, hi_i) = self.zbox[i];
        let (lo, hi, pair_sum) = match j {
            Some(j) => {
                let c = z[i] + z[j];
                let (lo_j, hi_j) = self.zbox[j];
                (lo_i.max(c - hi_j), hi_i.min(c - lo_j), c)
            }
            None => {
                let rest = z.iter().sum::<f64>() - z[i];
                (lo_i.max(self.window.0 - rest), hi_i.min(self.window.1 - rest), 0.0)
            }
        };
        if !(lo < hi) {
            return None;
        }
        let at = |x: f64| {
            let mut w = z.to_vec();
            w[i] = x;
            if let Some(j) = j {
                w[j] = (pair_sum - x).clamp(self.zbox[j].0, self.zbox[j].1);
            }
            w
        };
        let mut breaks: Vec<f64> = vec![lo, hi];
        breaks.extend(self.impressions[i].knots().map(|k| k.0));
        if let Some(j) = j {
            breaks.extend(self.impressions[j].knots().map(|k| pair_sum - k.0));
        }
        breaks.retain(|b| *b >= lo && *b <= hi);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let current = self.objective_z(z);
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut consider = |x: f64| {
            let w = at(x);
            let v = self.objective_z(&w);
            if v < best.as_ref().map_or(current, |b| b.0) {
                best = Some((v, w));
            }
        };
        for pair in breaks.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            consider(a);
            // The objective is quadratic between breakpoints.
            let m = 0.5 * (a + b);
            let (fa, fm, fb) = (self.objective_z(&at(a)), self.objective_z(&at(m)), self.objective_z(&at(b)));
            let curvature = fa - 2.0 * fm + fb;
            if curvature > 0.0 {
                let x = m + 0.5 * (b - a) * (fa - fb) / (2.0 * curvature);
                consider(x.clamp(a, b));
            }
        }
        consider(hi);
        best.filter(|(v, _)| *v < current * (1.0 - 1e-12) - 1e-15).map(|(_, w)| w)
    }

    /// Repeated exact exchanges until no single or pairwise move improves.
    fn polish(&self, mut z: Vec<f64>) -> Vec<f64> {
        let n = z.len();
        for _ in 0..MAX_POLISH_PASSES {
            let mut improved = false;
            for i in 0..n {
                if let Some(w) = self.exchange(&z, i, None) {
                    z = w;
                    improved = true;
                }
                for j in i + 1..n {
                    if let Some(w) = self.exchange(&z, i, Some(j)) {
                        z = w;
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
            z = self.descend(z);
        }
        z
    }
}

fn bisect(mut lo: f64, mut hi: f64, mut go_right: impl FnMut(f64) -> bool) -> (f64, f64) {
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if go_right(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

/// Minimizes the squared deviation of `s` from its mean subject to
/// `s_i` in `boxes[i]` and `sum_i cost_maps[i](s_i)` inside `window`.
pub fn solve_level_projection(
    boxes: &[(f64, f64)],
    cost_maps: &[PiecewiseLinear],
    window: (f64, f64),
) -> Result<LevelProjection> {
    if boxes.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if boxes.len() != cost_maps.len() {
        return Err(Error::InvalidArgument("one cost map per box required".into()));
    }
    if boxes.iter().any(|(lo, hi)| !(lo <= hi)) || !(window.0 <= window.1) {
        return Err(Error::InvalidArgument("boxes and window need lower <= upper".into()));
    }
    let cost: Vec<PiecewiseLinear> = boxes
        .iter()
        .zip(cost_maps)
        .map(|(&(lo, hi), c)| c.restrict(lo, hi))
        .collect();
    let zbox: Vec<(f64, f64)> = cost.iter().map(PiecewiseLinear::range).collect();
    let impressions = cost.iter().map(PiecewiseLinear::inverse_max).collect();
    let achievable = (
        zbox.iter().map(|z| z.0).sum::<f64>(),
        zbox.iter().map(|z| z.1).sum::<f64>(),
    );
    if window.1 < achievable.0 || window.0 > achievable.1 {
        return Err(Error::InfeasibleWindow {
            window_lo: window.0,
            window_hi: window.1,
            achievable_lo: achievable.0,
            achievable_hi: achievable.1,
        });
    }
    let inst = Instance {
        boxes: boxes.to_vec(),
        cost,
        impressions,
        zbox,
        window,
    };

    let t_min = boxes.iter().map(|b| b.0).fold(f64::INFINITY, f64::min);
    let t_max = boxes.iter().map(|b| b.1).fold(f64::NEG_INFINITY, f64::max);
    // t - mean(clip(t)) is non-decreasing, its root is the unconstrained optimum.
    let (a, b) = bisect(t_min, t_max, |t| {
        let s = inst.level_point(t);
        t < s.iter().sum::<f64>() / s.len() as f64
    });
    let t_star = 0.5 * (a + b);
    let s_star = inst.level_point(t_star);
    let c_star = inst.total_cost(&s_star);
    let finish = |s: Vec<f64>, level: f64| {
        let z = s.iter().zip(&inst.cost).map(|(&v, c)| c.eval(v)).collect();
        LevelProjection {
            objective: squared_deviation(&s),
            s,
            z,
            level,
        }
    };
    if inst.in_window(c_star) {
        return Ok(finish(s_star, t_star));
    }

    // Window binds: best level point is the one closest to t_star in the window.
    let level = if c_star > window.1 {
        bisect(t_min, t_star, |t| inst.total_cost(&inst.level_point(t)) <= window.1).0
    } else {
        bisect(t_star, t_max, |t| inst.total_cost(&inst.level_point(t)) < window.0).1
    };
    let level_s = inst.level_point(level);
    let mut best = if inst.in_window(inst.total_cost(&level_s)) {
        Some(finish(level_s.clone(), level))
    } else {
        None
    };

    let to_z = |s: &[f64]| s.iter().zip(&inst.cost).map(|(&v, c)| c.eval(v)).collect::<Vec<f64>>();
    let starts = [
        to_z(&level_s),
        to_z(&s_star),
        inst.zbox.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect(),
    ];
    for start in starts {
        let z = inst.polish(inst.descend(inst.project(&start)));
        let s = inst.impressions_of(&z);
        let objective = squared_deviation(&s);
        if best.as_ref().map_or(true, |b| objective < b.objective) {
            best = Some(LevelProjection { s, z, level, objective });
        }
    }
    Ok(best.expect("projected starts are feasible"))
}

fn knots<F: Fn(&super::ValuationPoint) -> (f64, f64)>(options: &[super::ValuationPoint], f: F) -> Result<PiecewiseLinear> {
    let points: Vec<(f64, f64)> = options.iter().map(f).collect();
    PiecewiseLinear::monotone(&points)
}

/// Style allocation over a valuation grid. Impression boxes come from the
/// grid's extreme alphas and costs from interpolating the replay points.
/// Alphas are interpolated from the grid; [`realize_style`] sharpens them by
/// replay inversion.
pub fn optimize_style(grid: &ValuationGrid, window: CostWindow) -> Result<AllocationResult> {
    grid.validate()?;
    let bounds = window.bounds(grid.baseline_total());
    let mut boxes = Vec::with_capacity(grid.len());
    let mut cost_maps = Vec::with_capacity(grid.len());
    let mut alpha_maps = Vec::with_capacity(grid.len());
    let mut gmv_maps = Vec::with_capacity(grid.len());
    for ad in &grid.ads {
        let first = ad.options[0];
        let last = *ad.options.last().expect("non-empty");
        boxes.push((first.impressions(), last.impressions()));
        cost_maps.push(knots(&ad.options, |o| (o.impressions(), o.cost()))?);
        alpha_maps.push(knots(&ad.options, |o| (o.cost(), o.alpha.ln()))?);
        gmv_maps.push(knots(&ad.options, |o| (o.cost(), o.gmv()))?);
    }
    let (s, z, feasible) = match solve_level_projection(&boxes, &cost_maps, bounds) {
        Ok(sol) => (sol.s, sol.z, true),
        Err(Error::InfeasibleWindow { achievable_lo, .. }) => {
            let s: Vec<f64> = if bounds.1 < achievable_lo {
                boxes.iter().map(|b| b.0).collect()
            } else {
                boxes.iter().map(|b| b.1).collect()
            };
            let z = s.iter().zip(&cost_maps).map(|(&v, c)| c.eval(v)).collect();
            (s, z, false)
        }
        Err(e) => return Err(e),
    };
    let alphas = z.iter().zip(&alpha_maps).map(|(&v, m)| m.eval(v).exp()).collect();
    let gmv = z.iter().zip(&gmv_maps).map(|(&v, m)| m.eval(v)).sum();
    Ok(AllocationResult {
        demand: Demand::Style,
        ad_ids: grid.ads.iter().map(|a| a.ad_id).collect(),
        alphas,
        selection: None,
        objective_value: normalized_std(&s),
        squared_deviation: Some(squared_deviation(&s)),
        impressions: s.iter().sum(),
        impression_targets: Some(s),
        cost: z.iter().sum(),
        ad_costs: z,
        gmv,
        feasible,
        window: bounds,
        lattice_unit: None,
    })
}

/// Recovers each AD's alpha for its target cost by replay inversion within
/// its grid alpha range, and replays the result.
pub fn realize_style(
    log: &AuctionLog,
    grid: &ValuationGrid,
    allocation: &AllocationResult,
    days: DayFilter,
) -> Result<(Vec<f64>, Vec<ReplaySummary>)> {
    let mut alphas = Vec::with_capacity(grid.len());
    let mut realized = Vec::with_capacity(grid.len());
    for (ad, &target) in grid.ads.iter().zip(&allocation.ad_costs) {
        let lo = ad.options[0].alpha;
        let hi = ad.options.last().expect("non-empty").alpha;
        let inv = invert_cost(log, ad.ad_id, ad.take_rate, target, (lo, hi), days)?;
        let policy = BidPolicy::single(
            ad.ad_id,
            BidRule::Cia {
                alpha: inv.alpha,
                tk: ad.take_rate,
            },
        )?;
        realized.push(evaluate(log, ad.ad_id, &policy, days)?);
        alphas.push(inv.alpha);
    }
    Ok((alphas, realized))
}
