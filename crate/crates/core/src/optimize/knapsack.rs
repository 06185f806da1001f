//! Group knapsack over the valuation grid: one alpha option per AD, total
//! cost inside the window, GMV maximal.
//!
//! Costs live on an integer lattice whose unit is `beta * total / 1000`.
//! Each option's cost is rounded to the nearest lattice cell, so every option
//! carries at most half a unit of rounding error.

use serde::{Deserialize, Serialize};

use super::{AllocationResult, CostWindow, Demand, ValuationGrid};
use crate::error::Result;
use crate::money::MINOR_UNIT;

/// Lattice cells per `beta * baseline_total`.
pub const LATTICE_CELLS: f64 = 1000.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostLattice {
    pub unit: f64,
    /// Smallest cell inside the window.
    pub lower_cell: u64,
    /// Largest cell inside the window.
    pub upper_cell: u64,
}

impl CostLattice {
    pub fn new(window: CostWindow, baseline_total: f64) -> Self {
        let mut unit = window.beta * baseline_total / LATTICE_CELLS;
        if !(unit > 0.0) {
            unit = MINOR_UNIT;
        }
        let (lo, hi) = window.bounds(baseline_total);
        CostLattice {
            unit,
            lower_cell: (lo / unit - 1e-9).ceil().max(0.0) as u64,
            upper_cell: (hi / unit + 1e-9).floor().max(0.0) as u64,
        }
    }

    pub fn cell(&self, cost: f64) -> u64 {
        (cost / self.unit).round() as u64
    }

    pub fn contains(&self, cell: u64) -> bool {
        (self.lower_cell..=self.upper_cell).contains(&cell)
    }

    fn violation(&self, cell: u64) -> u64 {
        if cell < self.lower_cell {
            self.lower_cell - cell
        } else {
            cell.saturating_sub(self.upper_cell)
        }
    }
}

/// Maximizes total GMV with exactly one option per AD and lattice cost in
/// the window. When no selection fits, returns the selection closest to the
/// window (ties by GMV) with `feasible = false`.
pub fn optimize_gmv(grid: &ValuationGrid, window: CostWindow) -> Result<AllocationResult> {
    grid.validate()?;
    let baseline_total = grid.baseline_total();
    let lattice = CostLattice::new(window, baseline_total);
    let weights: Vec<Vec<u64>> = grid
        .ads
        .iter()
        .map(|ad| ad.options.iter().map(|o| lattice.cell(o.cost())).collect())
        .collect();

    // Sums past this cell can neither be feasible nor beat the fallback.
    let min_total: u64 = weights.iter().map(|w| *w.iter().min().expect("non-empty")).sum();
    let cap = (lattice.upper_cell + lattice.lower_cell).max(min_total) as usize;

    let mut best = vec![f64::NEG_INFINITY; cap + 1];
    best[0] = 0.0;
    let mut choice: Vec<Vec<u32>> = Vec::with_capacity(grid.len());
    for (ad, ws) in grid.ads.iter().zip(&weights) {
        let mut next = vec![f64::NEG_INFINITY; cap + 1];
        let mut picked = vec![u32::MAX; cap + 1];
        for (cell, &value) in best.iter().enumerate() {
            if value == f64::NEG_INFINITY {
                continue;
            }
            for (j, (&w, option)) in ws.iter().zip(&ad.options).enumerate() {
                let target = cell + w as usize;
                if target > cap {
                    continue;
                }
                let candidate = value + option.gmv();
                if candidate > next[target] {
                    next[target] = candidate;
                    picked[target] = j as u32;
                }
            }
        }
        best = next;
        choice.push(picked);
    }

    let reachable = |c: usize| best[c] != f64::NEG_INFINITY;
    let lo = lattice.lower_cell as usize;
    let hi = (lattice.upper_cell as usize).min(cap);
    let mut end: Option<usize> = None;
    if lo <= hi {
        for c in lo..=hi {
            if reachable(c) && end.map_or(true, |e| best[c] > best[e]) {
                end = Some(c);
            }
        }
    }
    let feasible = end.is_some();
    let end = match end {
        Some(c) => c,
        None => (0..=cap)
            .filter(|&c| reachable(c))
            .min_by(|&a, &b| {
                lattice
                    .violation(a as u64)
                    .cmp(&lattice.violation(b as u64))
                    .then(best[b].total_cmp(&best[a]))
                    .then(a.cmp(&b))
            })
            .expect("the cheapest selection is always reachable"),
    };

    let mut selection = vec![0usize; grid.len()];
    let mut cell = end;
    for i in (0..grid.len()).rev() {
        let j = choice[i][cell] as usize;
        selection[i] = j;
        cell -= weights[i][j] as usize;
    }
    debug_assert_eq!(cell, 0);

    let chosen: Vec<_> = grid.ads.iter().zip(&selection).map(|(ad, &j)| ad.options[j]).collect();
    let ad_costs: Vec<f64> = chosen.iter().map(|o| o.cost()).collect();
    Ok(AllocationResult {
        demand: Demand::Gmv,
        ad_ids: grid.ads.iter().map(|a| a.ad_id).collect(),
        alphas: chosen.iter().map(|o| o.alpha).collect(),
        selection: Some(selection),
        impression_targets: None,
        cost: ad_costs.iter().sum(),
        ad_costs,
        gmv: best[end],
        impressions: chosen.iter().map(|o| o.impressions()).sum(),
        feasible,
        objective_value: best[end],
        squared_deviation: None,
        window: window.bounds(baseline_total),
        lattice_unit: Some(lattice.unit),
    })
}
