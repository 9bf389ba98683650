//! Temperature-based bin packing of cores via 1-D DBSCAN.
//!
//! Cores are clustered on temperature alone; positions play no role, so a
//! bin's members may be dispersed across the mesh. With `min_pts = 1` the
//! result equals the connected components of the epsilon-gap graph over
//! sorted temperatures.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TcError};
use crate::platform::{manhattan_distance, ChipModel};

/// DBSCAN parameters: neighborhood radius in C and the minimum neighborhood
/// size for a core point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BinConfig {
    pub epsilon_c: f64,
    pub min_pts: usize,
}

impl BinConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_c > 0.0) {
            return Err(TcError::Validation(format!(
                "binning epsilon must be > 0, got {}",
                self.epsilon_c
            )));
        }
        if self.min_pts < 1 {
            return Err(TcError::Validation("binning min_pts must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for BinConfig {
    fn default() -> Self {
        BinConfig {
            epsilon_c: 0.7,
            min_pts: 1,
        }
    }
}

/// When the bin partition is recomputed during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinUpdatePolicy {
    PerApplication,
    PerTask,
}

/// Events the update policy reacts to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinEvent {
    TaskMapped,
    ApplicationCompleted,
}

/// One temperature cluster of cores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub id: usize,
    /// Member core ids, ascending.
    pub core_ids: Vec<usize>,
    /// Mean member temperature at formation time.
    pub avg_temp_c: f64,
    /// Member position minimizing the total Manhattan distance to all
    /// members; ties go to the lowest core id.
    pub center_pos: (usize, usize),
}

/// A full partition of the cores, sorted by average temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSet {
    pub bins: Vec<Bin>,
    pub formed_at_s: f64,
    pub policy: BinUpdatePolicy,
}

impl BinSet {
    /// The bin containing a core id.
    pub fn bin_of_core(&self, core_id: usize) -> Option<&Bin> {
        self.bins.iter().find(|b| b.core_ids.contains(&core_id))
    }
}

/// Should the bins be re-formed on this event under this policy?
pub fn should_update_bins(policy: BinUpdatePolicy, event: BinEvent) -> bool {
    match (policy, event) {
        (BinUpdatePolicy::PerTask, BinEvent::TaskMapped) => true,
        (BinUpdatePolicy::PerTask, BinEvent::ApplicationCompleted) => false,
        (BinUpdatePolicy::PerApplication, BinEvent::ApplicationCompleted) => true,
        (BinUpdatePolicy::PerApplication, BinEvent::TaskMapped) => false,
    }
}

/// Cluster the cores by temperature with DBSCAN.
///
/// The neighborhood predicate is strict: `|T_a - T_b| < epsilon`. Seeds are
/// taken in ascending core-id order and expansion visits neighbors in id
/// order, so the output is reproducible. Cores left as noise (possible only
/// for `min_pts > 1`) each become a singleton bin. Bin ids follow the sort
/// by average temperature.
pub fn form_bins(
    core_temps_c: &[f64],
    chip: &ChipModel,
    cfg: &BinConfig,
    formed_at_s: f64,
    policy: BinUpdatePolicy,
) -> Result<BinSet> {
    cfg.validate()?;
    let n = core_temps_c.len();
    if n == 0 || n != chip.core_count() {
        return Err(TcError::Dimension(format!(
            "expected {} temperatures, got {n}",
            chip.core_count()
        )));
    }

    let neighborhood = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| (core_temps_c[i] - core_temps_c[j]).abs() < cfg.epsilon_c)
            .collect()
    };

    const UNLABELED: usize = usize::MAX;
    const NOISE: usize = usize::MAX - 1;
    let mut label = vec![UNLABELED; n];
    let mut n_clusters = 0;

    for seed in 0..n {
        if label[seed] != UNLABELED {
            continue;
        }
        let seed_neighbors = neighborhood(seed);
        if seed_neighbors.len() < cfg.min_pts {
            label[seed] = NOISE;
            continue;
        }
        let cluster = n_clusters;
        n_clusters += 1;
        label[seed] = cluster;
        let mut frontier = std::collections::VecDeque::from(seed_neighbors);
        while let Some(j) = frontier.pop_front() {
            if label[j] == NOISE {
                // Border point: density-reachable from a core point.
                label[j] = cluster;
                continue;
            }
            if label[j] != UNLABELED {
                continue;
            }
            label[j] = cluster;
            let nj = neighborhood(j);
            if nj.len() >= cfg.min_pts {
                frontier.extend(nj);
            }
        }
    }

    // Remaining noise cores become singleton bins.
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for (core, &l) in label.iter().enumerate() {
        if l == NOISE {
            members.push(vec![core]);
        } else {
            members[l].push(core);
        }
    }

    let mut bins: Vec<Bin> = members
        .into_iter()
        .map(|core_ids| {
            let avg_temp_c =
                core_ids.iter().map(|&c| core_temps_c[c]).sum::<f64>() / core_ids.len() as f64;
            let center_pos = bin_center(&core_ids, chip);
            Bin {
                id: 0,
                core_ids,
                avg_temp_c,
                center_pos,
            }
        })
        .collect();
    bins.sort_by(|a, b| {
        a.avg_temp_c
            .partial_cmp(&b.avg_temp_c)
            .unwrap()
            .then(a.core_ids[0].cmp(&b.core_ids[0]))
    });
    for (id, bin) in bins.iter_mut().enumerate() {
        bin.id = id;
    }
    Ok(BinSet {
        bins,
        formed_at_s,
        policy,
    })
}

fn bin_center(core_ids: &[usize], chip: &ChipModel) -> (usize, usize) {
    let mut best = (usize::MAX, (0, 0));
    for &candidate in core_ids {
        let pos = chip.position_of(candidate);
        let total: usize = core_ids
            .iter()
            .map(|&m| manhattan_distance(pos, chip.position_of(m)))
            .sum();
        if total < best.0 {
            best = (total, pos);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::platform::{generate_pv_grid, GridDims, TechConstants};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chip(rows: usize, cols: usize) -> ChipModel {
        let dims = GridDims::new(rows, cols).unwrap();
        let pv = generate_pv_grid(dims, 0.0, 0).unwrap();
        ChipModel::new(&pv, TechConstants::default(), 0).unwrap()
    }

    fn bins(temps: &[f64], chip: &ChipModel, epsilon: f64, min_pts: usize) -> BinSet {
        form_bins(
            temps,
            chip,
            &BinConfig {
                epsilon_c: epsilon,
                min_pts,
            },
            0.0,
            BinUpdatePolicy::PerApplication,
        )
        .unwrap()
    }

    /// Independent reference for min_pts = 1: sort the temperatures and
    /// split wherever consecutive values differ by at least epsilon.
    fn gap_split_partition(temps: &[f64], epsilon: f64) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..temps.len()).collect();
        order.sort_by(|&a, &b| temps[a].partial_cmp(&temps[b]).unwrap());
        let mut parts: Vec<Vec<usize>> = Vec::new();
        for (k, &core) in order.iter().enumerate() {
            let split = k == 0 || temps[core] - temps[order[k - 1]] >= epsilon;
            if split {
                parts.push(Vec::new());
            }
            parts.last_mut().unwrap().push(core);
        }
        for p in &mut parts {
            p.sort();
        }
        parts
    }

    fn as_partition(set: &BinSet) -> Vec<Vec<usize>> {
        let mut parts: Vec<Vec<usize>> = set.bins.iter().map(|b| b.core_ids.clone()).collect();
        parts.sort();
        parts
    }

    #[test]
    fn equal_temperatures_form_one_bin() {
        let c = chip(4, 4);
        let set = bins(&[52.0; 16], &c, 0.7, 1);
        assert_eq!(set.bins.len(), 1);
        assert_eq!(set.bins[0].core_ids.len(), 16);
        assert_eq!(set.bins[0].avg_temp_c, 52.0);
    }

    #[test]
    fn chained_cores_share_a_bin_and_outlier_splits() {
        let c = chip(2, 2);
        let set = bins(&[60.0, 60.5, 61.0, 65.0], &c, 0.7, 1);
        let parts = as_partition(&set);
        assert_eq!(parts, vec![vec![0, 1, 2], vec![3]]);
    }

    #[test]
    fn matches_gap_split_oracle_on_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let c = chip(16, 16);
        for _ in 0..300 {
            let n = 256;
            let temps: Vec<f64> = (0..n).map(|_| rng.random_range(45.0..80.0)).collect();
            let eps = rng.random_range(0.1..3.0);
            let set = bins(&temps, &c, eps, 1);
            let mut oracle = gap_split_partition(&temps, eps);
            oracle.sort();
            assert_eq!(as_partition(&set), oracle);
        }
    }

    #[test]
    fn every_core_lands_in_exactly_one_bin() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = chip(4, 4);
        for _ in 0..100 {
            let temps: Vec<f64> = (0..16).map(|_| rng.random_range(45.0..70.0)).collect();
            let set = bins(&temps, &c, 0.7, 1);
            let mut seen = vec![0usize; 16];
            for b in &set.bins {
                for &core in &b.core_ids {
                    seen[core] += 1;
                }
            }
            assert!(seen.iter().all(|&s| s == 1));
        }
    }

    #[test]
    fn chain_property_within_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c = chip(4, 4);
        for _ in 0..100 {
            let temps: Vec<f64> = (0..16).map(|_| rng.random_range(45.0..55.0)).collect();
            let eps = 0.7;
            let set = bins(&temps, &c, eps, 1);
            for b in &set.bins {
                let mut member_temps: Vec<f64> = b.core_ids.iter().map(|&i| temps[i]).collect();
                member_temps.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for w in member_temps.windows(2) {
                    assert!(w[1] - w[0] < eps);
                }
            }
        }
    }

    #[test]
    fn partition_ignores_core_order() {
        let c = chip(2, 3);
        let temps = [61.2, 60.0, 64.9, 60.4, 65.3, 52.1];
        let set_a = bins(&temps, &c, 0.7, 1);
        // Permute temperatures, map the partition back through the
        // permutation, and compare as sets of sets.
        let perm = [3usize, 5, 0, 1, 4, 2];
        let permuted: Vec<f64> = perm.iter().map(|&i| temps[i]).collect();
        let set_b = bins(&permuted, &c, 0.7, 1);
        let mut mapped: Vec<Vec<usize>> = set_b
            .bins
            .iter()
            .map(|b| {
                let mut v: Vec<usize> = b.core_ids.iter().map(|&i| perm[i]).collect();
                v.sort();
                v
            })
            .collect();
        mapped.sort();
        assert_eq!(as_partition(&set_a), mapped);
    }

    #[test]
    fn strict_epsilon_comparison_splits_exact_gaps() {
        let c = chip(1, 2);
        let set = bins(&[60.0, 60.7], &c, 0.7, 1);
        assert_eq!(set.bins.len(), 2);
        let set = bins(&[60.0, 60.69], &c, 0.7, 1);
        assert_eq!(set.bins.len(), 1);
    }

    #[test]
    fn checkerboard_bins_are_spatially_dispersed() {
        let c = chip(4, 4);
        let temps: Vec<f64> = (0..16)
            .map(|i| {
                let (x, y) = c.dims.pos_of(i);
                if (x + y) % 2 == 0 {
                    50.0
                } else {
                    58.0
                }
            })
            .collect();
        let set = bins(&temps, &c, 0.7, 1);
        assert_eq!(set.bins.len(), 2);
        for b in &set.bins {
            // No two members are mesh-adjacent: a dispersed bin.
            for &a in &b.core_ids {
                for &o in &b.core_ids {
                    if a != o {
                        assert!(
                            manhattan_distance(c.position_of(a), c.position_of(o)) > 1
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn noise_becomes_singleton_bins_when_min_pts_is_two() {
        let c = chip(1, 5);
        // 55.0 is isolated; the rest chain.
        let set = bins(&[50.0, 50.3, 50.6, 55.0, 50.1], &c, 0.5, 2);
        let parts = as_partition(&set);
        assert_eq!(parts, vec![vec![0, 1, 2, 4], vec![3]]);
    }

    #[test]
    fn bins_are_sorted_by_average_temperature() {
        let c = chip(2, 3);
        let set = bins(&[70.0, 50.0, 60.0, 50.2, 70.3, 60.1], &c, 0.7, 1);
        let avgs: Vec<f64> = set.bins.iter().map(|b| b.avg_temp_c).collect();
        for w in avgs.windows(2) {
            assert!(w[0] <= w[1]);
        }
        assert_eq!(set.bins[0].id, 0);
        assert_eq!(set.bins.last().unwrap().id, set.bins.len() - 1);
    }

    #[test]
    fn center_is_the_manhattan_median_member() {
        let c = chip(4, 4);
        // Members strung along the top row plus one below: (0,0) (1,0) (2,0) (1,1).
        let ids = [
            c.dims.id_of(0, 0),
            c.dims.id_of(1, 0),
            c.dims.id_of(2, 0),
            c.dims.id_of(1, 1),
        ];
        let mut temps = vec![90.0; 16];
        for &i in &ids {
            temps[i] = 50.0;
        }
        let set = bins(&temps, &c, 0.7, 1);
        let bin = set.bins.iter().find(|b| b.core_ids.len() == 4).unwrap();
        assert_eq!(bin.center_pos, (1, 0));
    }

    #[test]
    fn update_policy_table() {
        use BinEvent::*;
        use BinUpdatePolicy::*;
        assert!(!should_update_bins(PerApplication, TaskMapped));
        assert!(should_update_bins(PerApplication, ApplicationCompleted));
        assert!(should_update_bins(PerTask, TaskMapped));
        assert!(!should_update_bins(PerTask, ApplicationCompleted));
    }
}
