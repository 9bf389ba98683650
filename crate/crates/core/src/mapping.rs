//! Task placement policies: the two-level mapper (bin assignment by
//! temperature, then core selection by frequency) and the random and
//! per-core temperature-matching baselines.
//!
//! All mappers are pure functions of their inputs; randomness comes only
//! from the caller-owned seeded generator of the random baseline. A task
//! that cannot be placed is deferred, never dropped.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binning::{Bin, BinSet};
use crate::platform::{manhattan_distance, ChipModel};
use crate::workload::{PerfClass, TaskProfile};

/// Which placement policy drives the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapperKind {
    TwoLevel,
    Random,
    ConventionalTc,
}

impl std::str::FromStr for MapperKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "two_level" => Ok(MapperKind::TwoLevel),
            "random" => Ok(MapperKind::Random),
            "conventional_tc" => Ok(MapperKind::ConventionalTc),
            other => Err(format!(
                "unknown mapper '{other}' (expected two_level, random, or conventional_tc)"
            )),
        }
    }
}

impl std::fmt::Display for MapperKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MapperKind::TwoLevel => write!(f, "two_level"),
            MapperKind::Random => write!(f, "random"),
            MapperKind::ConventionalTc => write!(f, "conventional_tc"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoreState {
    Free,
    Busy { until_s: f64 },
}

impl CoreState {
    pub fn is_free(&self) -> bool {
        matches!(self, CoreState::Free)
    }
}

/// Everything a placement decision may look at.
#[derive(Debug, Clone, Copy)]
pub struct MappingContext<'a> {
    pub core_states: &'a [CoreState],
    pub core_temps_c: &'a [f64],
    pub core_freqs_hz: &'a [f64],
    pub bins: &'a BinSet,
    /// Last core each application's previous task was mapped to.
    pub prev_core_of_app: &'a BTreeMap<String, usize>,
    pub chip: &'a ChipModel,
    /// Bins whose temperature difference is within this of the best are
    /// treated as equally close.
    pub tie_tol_c: f64,
}

impl<'a> MappingContext<'a> {
    fn is_eligible(&self, task: &TaskProfile, core_id: usize) -> bool {
        self.core_states[core_id].is_free()
            && (task.f_req_hz == 0.0 || self.core_freqs_hz[core_id] >= task.f_req_hz)
    }

    fn prev_core(&self, task: &TaskProfile) -> Option<usize> {
        self.prev_core_of_app.get(&task.app_id).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EligibilityError {
    #[error("no bin has an eligible free core")]
    NoEligibleBin,
    #[error("the selected bin has no eligible free core")]
    NoEligibleCore,
}

/// Where a task ended up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Placement {
    Core {
        core_id: usize,
        /// Set by the two-level mapper only.
        bin_id: Option<usize>,
    },
    Deferred,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MappingDecision {
    pub task_idx: usize,
    pub placement: Placement,
    pub decided_at_s: f64,
}

fn profiled_temp(task: &TaskProfile) -> f64 {
    task.t_steady_c
        .expect("task must be profiled before mapping")
}

/// First level: pick the bin whose average temperature is closest to the
/// task's profiled temperature, among bins that contain at least one
/// eligible free core. Near-ties are broken by the Manhattan distance from
/// the bin's central tile to the core that ran the application's previous
/// task (lowest bin id when the application has no history).
pub fn assign_task_to_bin(
    task: &TaskProfile,
    ctx: &MappingContext,
) -> Result<usize, EligibilityError> {
    let t_task = profiled_temp(task);
    let candidates: Vec<&Bin> = ctx
        .bins
        .bins
        .iter()
        .filter(|bin| bin.core_ids.iter().any(|&c| ctx.is_eligible(task, c)))
        .collect();
    if candidates.is_empty() {
        return Err(EligibilityError::NoEligibleBin);
    }
    let diff = |bin: &Bin| (bin.avg_temp_c - t_task).abs();
    let best = candidates.iter().map(|b| diff(b)).fold(f64::INFINITY, f64::min);
    let shortlist: Vec<&Bin> = candidates
        .into_iter()
        .filter(|b| diff(b) <= best + ctx.tie_tol_c)
        .collect();
    if shortlist.len() < 2 {
        return Ok(shortlist[0].id);
    }
    match ctx.prev_core(task) {
        Some(prev) => {
            let prev_pos = ctx.chip.position_of(prev);
            Ok(shortlist
                .into_iter()
                .min_by_key(|b| (manhattan_distance(b.center_pos, prev_pos), b.id))
                .unwrap()
                .id)
        }
        None => Ok(shortlist.into_iter().map(|b| b.id).min().unwrap()),
    }
}

/// Second level: inside a bin, pick the eligible free core by frequency —
/// highest for high-performance tasks, lowest for low-power tasks. Frequency
/// ties fall back to the Manhattan distance to the application's previous
/// core, then to the lowest core id.
pub fn select_core_in_bin(
    task: &TaskProfile,
    bin: &Bin,
    ctx: &MappingContext,
) -> Result<usize, EligibilityError> {
    let eligible: Vec<usize> = bin
        .core_ids
        .iter()
        .copied()
        .filter(|&c| ctx.is_eligible(task, c))
        .collect();
    if eligible.is_empty() {
        return Err(EligibilityError::NoEligibleCore);
    }
    let freq = |c: usize| ctx.core_freqs_hz[c];
    let target = match task.perf_class {
        PerfClass::High => eligible.iter().map(|&c| freq(c)).fold(f64::NEG_INFINITY, f64::max),
        PerfClass::Low => eligible.iter().map(|&c| freq(c)).fold(f64::INFINITY, f64::min),
    };
    let pool: Vec<usize> = eligible.into_iter().filter(|&c| freq(c) == target).collect();
    match ctx.prev_core(task) {
        Some(prev) if pool.len() >= 2 => {
            let prev_pos = ctx.chip.position_of(prev);
            Ok(pool
                .into_iter()
                .min_by_key(|&c| (manhattan_distance(ctx.chip.position_of(c), prev_pos), c))
                .unwrap())
        }
        // Pool is in ascending id order, so the first entry is the lowest id.
        _ => Ok(pool[0]),
    }
}

/// The full two-level policy. Any eligibility failure defers the task.
pub fn map_two_level(task_idx: usize, task: &TaskProfile, ctx: &MappingContext, now_s: f64) -> MappingDecision {
    let placement = match assign_task_to_bin(task, ctx).and_then(|bin_id| {
        let bin = &ctx.bins.bins[bin_id];
        select_core_in_bin(task, bin, ctx).map(|core_id| (bin_id, core_id))
    }) {
        Ok((bin_id, core_id)) => Placement::Core {
            core_id,
            bin_id: Some(bin_id),
        },
        Err(_) => Placement::Deferred,
    };
    MappingDecision {
        task_idx,
        placement,
        decided_at_s: now_s,
    }
}

/// Baseline: uniform choice among eligible free cores.
pub fn map_random<R: Rng>(
    task_idx: usize,
    task: &TaskProfile,
    ctx: &MappingContext,
    rng: &mut R,
    now_s: f64,
) -> MappingDecision {
    let eligible: Vec<usize> = (0..ctx.core_states.len())
        .filter(|&c| ctx.is_eligible(task, c))
        .collect();
    let placement = if eligible.is_empty() {
        Placement::Deferred
    } else {
        Placement::Core {
            core_id: eligible[rng.random_range(0..eligible.len())],
            bin_id: None,
        }
    };
    MappingDecision {
        task_idx,
        placement,
        decided_at_s: now_s,
    }
}

/// Baseline: greedy per-core temperature matching with no bins and no
/// adjacency awareness; ties go to the lowest core id.
pub fn map_conventional_tc(
    task_idx: usize,
    task: &TaskProfile,
    ctx: &MappingContext,
    now_s: f64,
) -> MappingDecision {
    let t_task = profiled_temp(task);
    let placement = (0..ctx.core_states.len())
        .filter(|&c| ctx.is_eligible(task, c))
        .map(|c| {
            let diff = (ctx.core_temps_c[c] - t_task).abs();
            (c, diff)
        })
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
        .map(|(core_id, _)| Placement::Core {
            core_id,
            bin_id: None,
        })
        .unwrap_or(Placement::Deferred);
    MappingDecision {
        task_idx,
        placement,
        decided_at_s: now_s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::{form_bins, BinConfig, BinUpdatePolicy};
    use crate::platform::{generate_pv_grid, GridDims, TechConstants};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chip(rows: usize, cols: usize) -> ChipModel {
        let dims = GridDims::new(rows, cols).unwrap();
        let pv = generate_pv_grid(dims, 0.0, 0).unwrap();
        ChipModel::new(&pv, TechConstants::default(), 0).unwrap()
    }

    fn task(t_steady: f64, perf: PerfClass, f_req_hz: f64) -> TaskProfile {
        TaskProfile {
            app_id: "app0".into(),
            thread_id: 0,
            power_watts: 5.0,
            exec_time_s: 10.0,
            perf_class: perf,
            f_req_hz,
            t_steady_c: Some(t_steady),
        }
    }

    struct Fixture {
        chip: ChipModel,
        states: Vec<CoreState>,
        temps: Vec<f64>,
        freqs: Vec<f64>,
        bins: BinSet,
        prev: BTreeMap<String, usize>,
    }

    impl Fixture {
        fn new(chip: ChipModel, temps: Vec<f64>) -> Self {
            let n = chip.core_count();
            let bins = form_bins(
                &temps,
                &chip,
                &BinConfig::default(),
                0.0,
                BinUpdatePolicy::PerApplication,
            )
            .unwrap();
            let freqs = chip.frequencies_hz();
            Fixture {
                chip,
                states: vec![CoreState::Free; n],
                temps,
                freqs,
                bins,
                prev: BTreeMap::new(),
            }
        }

        fn rebin(&mut self) {
            self.bins = form_bins(
                &self.temps,
                &self.chip,
                &BinConfig::default(),
                0.0,
                BinUpdatePolicy::PerApplication,
            )
            .unwrap();
        }

        fn ctx(&self) -> MappingContext<'_> {
            MappingContext {
                core_states: &self.states,
                core_temps_c: &self.temps,
                core_freqs_hz: &self.freqs,
                bins: &self.bins,
                prev_core_of_app: &self.prev,
                chip: &self.chip,
                tie_tol_c: 0.1,
            }
        }
    }

    /// Three well-separated temperature groups averaging 62.0, 64.2, 67.0.
    fn three_bin_fixture() -> Fixture {
        let chip = chip(2, 3);
        let temps = vec![62.0, 64.2, 67.0, 62.0, 64.2, 67.0];
        Fixture::new(chip, temps)
    }

    #[test]
    fn picks_the_closest_bin_by_temperature() {
        let fx = three_bin_fixture();
        let t = task(64.3, PerfClass::High, 0.0);
        let bin_id = assign_task_to_bin(&t, &fx.ctx()).unwrap();
        assert_eq!(fx.bins.bins[bin_id].avg_temp_c, 64.2);
    }

    #[test]
    fn single_bin_is_chosen_directly() {
        let fx = Fixture::new(chip(2, 2), vec![55.0; 4]);
        let t = task(70.0, PerfClass::High, 0.0);
        let bin_id = assign_task_to_bin(&t, &fx.ctx()).unwrap();
        assert_eq!(bin_id, fx.bins.bins[0].id);
    }

    #[test]
    fn equal_temperature_bins_break_ties_by_distance() {
        let chip = chip(1, 8);
        // Two bins at the same average temperature: cores {0,1} at 60.0 and
        // cores {6,7} at 60.0, the rest far away thermally.
        let temps = vec![60.0, 60.0, 80.0, 80.0, 80.0, 80.0, 60.0, 60.0];
        let mut fx = Fixture::new(chip, temps);
        fx.prev.insert("app0".into(), 7);
        let t = task(60.0, PerfClass::High, 0.0);
        let bin_id = assign_task_to_bin(&t, &fx.ctx()).unwrap();
        // The {6,7} bin's center is distance 1 from core 7; {0,1} is 6 away.
        assert!(fx.bins.bins[bin_id].core_ids.contains(&6));
    }

    #[test]
    fn no_free_core_anywhere_defers() {
        let mut fx = three_bin_fixture();
        for s in &mut fx.states {
            *s = CoreState::Busy { until_s: 99.0 };
        }
        let t = task(64.3, PerfClass::High, 0.0);
        assert_eq!(
            assign_task_to_bin(&t, &fx.ctx()),
            Err(EligibilityError::NoEligibleBin)
        );
        let d = map_two_level(0, &t, &fx.ctx(), 1.0);
        assert_eq!(d.placement, Placement::Deferred);
    }

    #[test]
    fn bins_without_eligible_cores_are_skipped() {
        let mut fx = three_bin_fixture();
        // Busy out the best-matching bin (cores at 64.2).
        fx.states[1] = CoreState::Busy { until_s: 99.0 };
        fx.states[4] = CoreState::Busy { until_s: 99.0 };
        let t = task(64.3, PerfClass::High, 0.0);
        let bin_id = assign_task_to_bin(&t, &fx.ctx()).unwrap();
        // Next closest by |avg - 64.3| is 62.0? |62-64.3|=2.3, |67-64.3|=2.7.
        assert_eq!(fx.bins.bins[bin_id].avg_temp_c, 62.0);
    }

    fn freq_fixture() -> Fixture {
        let chip = chip(1, 3);
        let mut fx = Fixture::new(chip, vec![50.0; 3]);
        fx.freqs = vec![2.8e9, 3.0e9, 3.1e9];
        fx
    }

    #[test]
    fn high_perf_takes_the_fastest_core() {
        let fx = freq_fixture();
        let t = task(50.0, PerfClass::High, 0.0);
        let bin = &fx.bins.bins[0];
        assert_eq!(select_core_in_bin(&t, bin, &fx.ctx()).unwrap(), 2);
    }

    #[test]
    fn low_power_takes_the_slowest_core() {
        let fx = freq_fixture();
        let t = task(50.0, PerfClass::Low, 0.0);
        let bin = &fx.bins.bins[0];
        assert_eq!(select_core_in_bin(&t, bin, &fx.ctx()).unwrap(), 0);
    }

    #[test]
    fn frequency_ties_break_by_distance_to_previous_core() {
        let chip = chip(1, 6);
        let mut fx = Fixture::new(chip, vec![50.0; 6]);
        fx.freqs = vec![3.0e9, 2.0e9, 2.0e9, 3.0e9, 2.0e9, 2.0e9];
        fx.prev.insert("app0".into(), 5);
        let t = task(50.0, PerfClass::High, 0.0);
        let bin = &fx.bins.bins[0];
        // Cores 0 and 3 tie at 3.0 GHz; 3 is distance 2 from core 5, 0 is 5.
        assert_eq!(select_core_in_bin(&t, bin, &fx.ctx()).unwrap(), 3);
    }

    #[test]
    fn remaining_ties_take_the_lowest_id() {
        let fx = freq_fixture();
        let mut fx = fx;
        fx.freqs = vec![3.0e9, 3.0e9, 3.0e9];
        let t = task(50.0, PerfClass::High, 0.0);
        let bin = &fx.bins.bins[0];
        assert_eq!(select_core_in_bin(&t, bin, &fx.ctx()).unwrap(), 0);
    }

    #[test]
    fn f_req_filters_out_slow_cores() {
        let fx = freq_fixture();
        let t = task(50.0, PerfClass::Low, 2.9e9);
        let bin = &fx.bins.bins[0];
        // Low-power would pick 2.8 GHz, but f_req excludes it.
        assert_eq!(select_core_in_bin(&t, bin, &fx.ctx()).unwrap(), 1);
        let impossible = task(50.0, PerfClass::High, 9.9e9);
        assert_eq!(
            select_core_in_bin(&impossible, bin, &fx.ctx()),
            Err(EligibilityError::NoEligibleCore)
        );
    }

    #[test]
    fn two_level_is_deterministic() {
        let fx = three_bin_fixture();
        let t = task(64.3, PerfClass::High, 0.0);
        let first = map_two_level(0, &t, &fx.ctx(), 2.0);
        for _ in 0..10 {
            assert_eq!(map_two_level(0, &t, &fx.ctx(), 2.0), first);
        }
        assert!(matches!(
            first.placement,
            Placement::Core { bin_id: Some(_), .. }
        ));
    }

    #[test]
    fn fig_style_pipeline_lands_in_the_closest_bin() {
        let fx = three_bin_fixture();
        let t = task(64.3, PerfClass::High, 0.0);
        let d = map_two_level(0, &t, &fx.ctx(), 0.0);
        match d.placement {
            Placement::Core { core_id, bin_id } => {
                let bin = &fx.bins.bins[bin_id.unwrap()];
                assert_eq!(bin.avg_temp_c, 64.2);
                assert!(bin.core_ids.contains(&core_id));
            }
            other => panic!("unexpected placement {other:?}"),
        }
    }

    #[test]
    fn random_with_one_free_core_takes_it() {
        let mut fx = three_bin_fixture();
        for (i, s) in fx.states.iter_mut().enumerate() {
            if i != 4 {
                *s = CoreState::Busy { until_s: 9.0 };
            }
        }
        let t = task(64.3, PerfClass::High, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = map_random(0, &t, &fx.ctx(), &mut rng, 0.0);
        assert_eq!(
            d.placement,
            Placement::Core {
                core_id: 4,
                bin_id: None
            }
        );
    }

    #[test]
    fn random_with_no_free_core_defers() {
        let mut fx = three_bin_fixture();
        for s in &mut fx.states {
            *s = CoreState::Busy { until_s: 9.0 };
        }
        let t = task(64.3, PerfClass::High, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = map_random(0, &t, &fx.ctx(), &mut rng, 0.0);
        assert_eq!(d.placement, Placement::Deferred);
    }

    #[test]
    fn random_draws_are_roughly_uniform() {
        let chip = chip(2, 2);
        let fx = Fixture::new(chip, vec![50.0; 4]);
        let t = task(50.0, PerfClass::High, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0u32; 4];
        for _ in 0..10_000 {
            match map_random(0, &t, &fx.ctx(), &mut rng, 0.0).placement {
                Placement::Core { core_id, .. } => counts[core_id] += 1,
                _ => unreachable!(),
            }
        }
        for c in counts {
            let share = c as f64 / 10_000.0;
            assert!((share - 0.25).abs() < 0.02, "share {share}");
        }
    }

    #[test]
    fn conventional_matches_nearest_temperature() {
        let mut fx = Fixture::new(chip(1, 3), vec![50.0, 63.0, 70.0]);
        fx.rebin();
        let t = task(64.0, PerfClass::High, 0.0);
        let d = map_conventional_tc(0, &t, &fx.ctx(), 0.0);
        assert_eq!(
            d.placement,
            Placement::Core {
                core_id: 1,
                bin_id: None
            }
        );
    }

    #[test]
    fn conventional_breaks_exact_ties_by_id() {
        let mut fx = Fixture::new(chip(1, 3), vec![64.0, 64.0, 70.0]);
        fx.rebin();
        let t = task(64.0, PerfClass::High, 0.0);
        let d = map_conventional_tc(0, &t, &fx.ctx(), 0.0);
        assert_eq!(
            d.placement,
            Placement::Core {
                core_id: 0,
                bin_id: None
            }
        );
    }

    #[test]
    fn mappers_never_violate_feasibility() {
        let chip = chip(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for round in 0..1000 {
            let temps: Vec<f64> = (0..16).map(|_| rng.random_range(45.0..75.0)).collect();
            let mut fx = Fixture::new(chip.clone(), temps);
            fx.freqs = (0..16).map(|_| rng.random_range(2.0e9..3.5e9)).collect();
            for s in fx.states.iter_mut() {
                if rng.random_range(0..3) == 0 {
                    *s = CoreState::Busy { until_s: 5.0 };
                }
            }
            let t = task(
                rng.random_range(45.0..75.0),
                if round % 2 == 0 { PerfClass::High } else { PerfClass::Low },
                rng.random_range(1.5e9..3.6e9),
            );
            let ctx = fx.ctx();
            let decisions = [
                map_two_level(0, &t, &ctx, 0.0),
                map_random(0, &t, &ctx, &mut rng.clone(), 0.0),
                map_conventional_tc(0, &t, &ctx, 0.0),
            ];
            for d in decisions {
                if let Placement::Core { core_id, .. } = d.placement {
                    assert!(fx.states[core_id].is_free());
                    assert!(fx.freqs[core_id] >= t.f_req_hz);
                }
            }
        }
    }

    #[test]
    fn uniform_temperature_shift_keeps_the_decision() {
        let chip = chip(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        // Quarter-degree temperatures keep the shift exact in binary, so
        // every pairwise difference is bit-identical before and after.
        let mut quarter = |rng: &mut ChaCha8Rng| rng.random_range(180..280) as f64 * 0.25;
        for _ in 0..50 {
            let temps: Vec<f64> = (0..16).map(|_| quarter(&mut rng)).collect();
            let mut fx = Fixture::new(chip.clone(), temps.clone());
            fx.prev.insert("app0".into(), 3);
            let t = task(quarter(&mut rng), PerfClass::High, 0.0);
            let base = map_two_level(0, &t, &fx.ctx(), 0.0);
            let base_conv = map_conventional_tc(0, &t, &fx.ctx(), 0.0);

            let shift = 7.25; // exactly representable
            let mut shifted = Fixture::new(
                chip.clone(),
                temps.iter().map(|v| v + shift).collect(),
            );
            shifted.prev.insert("app0".into(), 3);
            let t2 = task(t.t_steady_c.unwrap() + shift, PerfClass::High, 0.0);
            let moved = map_two_level(0, &t2, &shifted.ctx(), 0.0);
            let moved_conv = map_conventional_tc(0, &t2, &shifted.ctx(), 0.0);
            assert_eq!(base.placement, moved.placement);
            assert_eq!(base_conv.placement, moved_conv.placement);
        }
    }
}
