//! Sampling designs: simple random sampling without replacement (SRSWOR) and
//! stratified SRSWOR, with exact first- and second-order inclusion
//! probabilities.
//!
//! Unit indices are zero-based positions in the population.

use std::sync::Arc;

use rand::seq::index;
use rand::Rng;

use crate::error::{ImputeError, Result};

/// Smallest per-stratum sample size; keeps within-stratum joint inclusion
/// probabilities strictly positive.
pub const MIN_STRATUM_SAMPLE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignKind {
    Srswor,
    StratifiedSrswor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stratum {
    pub units: Vec<usize>,
    pub sample_size: usize,
}

impl Stratum {
    pub fn population_size(&self) -> usize {
        self.units.len()
    }

    fn inclusion(&self) -> f64 {
        self.sample_size as f64 / self.units.len() as f64
    }

    fn joint_inclusion(&self) -> f64 {
        let (n, nn) = (self.sample_size as f64, self.units.len() as f64);
        n * (n - 1.0) / (nn * (nn - 1.0))
    }
}

/// Immutable description of a fixed-size sampling design.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignDescriptor {
    kind: DesignKind,
    population_size: usize,
    sample_size: usize,
    strata: Vec<Stratum>,
    // stratum index per population unit; empty for SRSWOR
    stratum_of: Vec<usize>,
}

impl DesignDescriptor {
    pub fn srswor(population_size: usize, sample_size: usize) -> Result<Self> {
        if sample_size == 0 {
            return Err(ImputeError::InvalidDesign(
                "sample size must be positive".into(),
            ));
        }
        if sample_size > population_size {
            return Err(ImputeError::InvalidDesign(format!(
                "sample size {sample_size} exceeds population size {population_size}"
            )));
        }
        Ok(Self {
            kind: DesignKind::Srswor,
            population_size,
            sample_size,
            strata: Vec::new(),
            stratum_of: Vec::new(),
        })
    }

    /// Stratified SRSWOR. The strata must partition `0..population_size` and
    /// every stratum must satisfy `2 <= n_h <= N_h`.
    pub fn stratified(population_size: usize, strata: Vec<Stratum>) -> Result<Self> {
        if strata.is_empty() {
            return Err(ImputeError::InvalidDesign("no strata given".into()));
        }
        let mut stratum_of = vec![usize::MAX; population_size];
        for (h, stratum) in strata.iter().enumerate() {
            let size = stratum.population_size();
            if size < MIN_STRATUM_SAMPLE {
                return Err(ImputeError::InvalidDesign(format!(
                    "stratum {h} has {size} units; at least {MIN_STRATUM_SAMPLE} required"
                )));
            }
            if stratum.sample_size < MIN_STRATUM_SAMPLE || stratum.sample_size > size {
                return Err(ImputeError::InvalidDesign(format!(
                    "stratum {h}: sample size {} outside [{MIN_STRATUM_SAMPLE}, {size}]",
                    stratum.sample_size
                )));
            }
            for &k in &stratum.units {
                if k >= population_size {
                    return Err(ImputeError::InvalidDesign(format!(
                        "stratum {h} references unit {k} outside the population"
                    )));
                }
                if stratum_of[k] != usize::MAX {
                    return Err(ImputeError::InvalidDesign(format!(
                        "unit {k} belongs to more than one stratum"
                    )));
                }
                stratum_of[k] = h;
            }
        }
        if let Some(k) = stratum_of.iter().position(|&h| h == usize::MAX) {
            return Err(ImputeError::InvalidDesign(format!(
                "unit {k} is not in any stratum"
            )));
        }
        let sample_size = strata.iter().map(|s| s.sample_size).sum();
        Ok(Self {
            kind: DesignKind::StratifiedSrswor,
            population_size,
            sample_size,
            strata,
            stratum_of,
        })
    }

    /// Stratified design over consecutive blocks of units with the given
    /// `(N_h, n_h)` pairs. Used when only stratum sizes are known, e.g. when
    /// estimating from a data file.
    pub fn stratified_from_sizes(sizes: &[(usize, usize)]) -> Result<Self> {
        let mut start = 0;
        let strata = sizes
            .iter()
            .map(|&(size, sample_size)| {
                let units = (start..start + size).collect();
                start += size;
                Stratum { units, sample_size }
            })
            .collect();
        Self::stratified(start, strata)
    }

    pub fn kind(&self) -> DesignKind {
        self.kind
    }

    pub fn population_size(&self) -> usize {
        self.population_size
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    pub fn stratum_of(&self, k: usize) -> Option<usize> {
        self.stratum_of.get(k).copied()
    }

    fn check_unit(&self, k: usize) -> Result<()> {
        if k >= self.population_size {
            return Err(ImputeError::Domain(format!(
                "unit {k} outside population of size {}",
                self.population_size
            )));
        }
        Ok(())
    }

    /// First-order inclusion probability of unit `k`.
    pub fn inclusion(&self, k: usize) -> Result<f64> {
        self.check_unit(k)?;
        Ok(match self.kind {
            DesignKind::Srswor => self.sample_size as f64 / self.population_size as f64,
            DesignKind::StratifiedSrswor => self.strata[self.stratum_of[k]].inclusion(),
        })
    }

    /// Second-order inclusion probability `P(k, l in S)` for `k != l`.
    pub fn joint_inclusion(&self, k: usize, l: usize) -> Result<f64> {
        self.check_unit(k)?;
        self.check_unit(l)?;
        if k == l {
            return Err(ImputeError::Domain(format!(
                "joint inclusion requires distinct units, got ({k}, {l})"
            )));
        }
        Ok(match self.kind {
            DesignKind::Srswor => {
                let (n, nn) = (self.sample_size as f64, self.population_size as f64);
                n * (n - 1.0) / (nn * (nn - 1.0))
            }
            DesignKind::StratifiedSrswor => {
                let (hk, hl) = (self.stratum_of[k], self.stratum_of[l]);
                if hk == hl {
                    self.strata[hk].joint_inclusion()
                } else {
                    self.strata[hk].inclusion() * self.strata[hl].inclusion()
                }
            }
        })
    }

    /// Sampling covariance `pi_kl - pi_k pi_l`, with `pi_kk = pi_k`.
    pub fn delta(&self, k: usize, l: usize) -> Result<f64> {
        let pk = self.inclusion(k)?;
        if k == l {
            return Ok(pk * (1.0 - pk));
        }
        let pl = self.inclusion(l)?;
        Ok(self.joint_inclusion(k, l)? - pk * pl)
    }

    /// `pi_kl` with the diagonal convention `pi_kk = pi_k`.
    pub fn pair_inclusion(&self, k: usize, l: usize) -> Result<f64> {
        if k == l {
            self.inclusion(k)
        } else {
            self.joint_inclusion(k, l)
        }
    }
}

/// A realized sample: selected unit ids (ascending) and their inclusion
/// probabilities.
#[derive(Debug, Clone)]
pub struct SampleDraw {
    pub unit_ids: Vec<usize>,
    pub pi: Vec<f64>,
    pub design: Arc<DesignDescriptor>,
}

impl SampleDraw {
    /// Builds a draw from explicit unit ids, filling in `pi` from the design.
    pub fn from_units(design: Arc<DesignDescriptor>, mut unit_ids: Vec<usize>) -> Result<Self> {
        unit_ids.sort_unstable();
        if unit_ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(ImputeError::InvalidDesign(
                "duplicate unit in sample".into(),
            ));
        }
        let pi = unit_ids
            .iter()
            .map(|&k| design.inclusion(k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            unit_ids,
            pi,
            design,
        })
    }

    pub fn len(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unit_ids.is_empty()
    }

    pub fn population_size(&self) -> usize {
        self.design.population_size()
    }
}

pub fn draw_srswor<R: Rng + ?Sized>(
    population_size: usize,
    sample_size: usize,
    rng: &mut R,
) -> Result<SampleDraw> {
    let design = Arc::new(DesignDescriptor::srswor(population_size, sample_size)?);
    let units = index::sample(rng, population_size, sample_size).into_vec();
    SampleDraw::from_units(design, units)
}

/// Splits `population_size` units into blocks proportional to `fractions`
/// using largest-remainder rounding (ties go to the earlier block).
pub fn stratum_sizes(fractions: &[f64], population_size: usize) -> Result<Vec<usize>> {
    if fractions.is_empty() {
        return Err(ImputeError::InvalidDesign(
            "no stratum fractions given".into(),
        ));
    }
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(ImputeError::InvalidDesign(
            "stratum fractions must be non-negative".into(),
        ));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(ImputeError::InvalidDesign(format!(
            "stratum fractions sum to {total}, expected 1"
        )));
    }
    let targets: Vec<f64> = fractions
        .iter()
        .map(|f| f * population_size as f64)
        .collect();
    Ok(largest_remainder(&targets, population_size))
}

/// Rounds non-negative reals to integers summing to `total`, giving the
/// leftover units to the largest fractional parts (ties to the lower index).
fn largest_remainder(targets: &[f64], total: usize) -> Vec<usize> {
    let mut out: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = targets[a] - targets[a].floor();
        let rb = targets[b] - targets[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &h in order.iter().cycle().take(total.saturating_sub(assigned)) {
        out[h] += 1;
    }
    out
}

/// Neyman allocation weights `N_h * S_h`, falling back to `N_h` when every
/// standard deviation is zero.
fn neyman_weights(sizes: &[usize], std_devs: &[f64]) -> Vec<f64> {
    let weights: Vec<f64> = sizes
        .iter()
        .zip(std_devs)
        .map(|(&size, &sd)| size as f64 * sd)
        .collect();
    if weights.iter().all(|&w| w <= 0.0) {
        sizes.iter().map(|&s| s as f64).collect()
    } else {
        weights
    }
}

/// Plain Neyman allocation `n_h ∝ N_h S_h` rounded by largest remainder,
/// without stratum bounds.
pub fn neyman_allocation(sizes: &[usize], std_devs: &[f64], sample_size: usize) -> Vec<usize> {
    let weights = neyman_weights(sizes, std_devs);
    let total: f64 = weights.iter().sum();
    let targets: Vec<f64> = weights
        .iter()
        .map(|w| sample_size as f64 * w / total)
        .collect();
    largest_remainder(&targets, sample_size)
}

/// Neyman allocation with every `n_h` held in `[2, N_h]`: `n_h` is
/// `clamp(lambda * N_h S_h, 2, N_h)` with `lambda` chosen so the sizes add up
/// to `n`.
pub fn bounded_neyman_allocation(
    sizes: &[usize],
    std_devs: &[f64],
    sample_size: usize,
) -> Result<Vec<usize>> {
    if let Some(h) = sizes.iter().position(|&s| s < MIN_STRATUM_SAMPLE) {
        return Err(ImputeError::InvalidDesign(format!(
            "stratum {h} has {} units; at least {MIN_STRATUM_SAMPLE} required",
            sizes[h]
        )));
    }
    let lower = MIN_STRATUM_SAMPLE * sizes.len();
    let upper: usize = sizes.iter().sum();
    if sample_size < lower || sample_size > upper {
        return Err(ImputeError::InvalidDesign(format!(
            "sample size {sample_size} cannot be allocated within [{lower}, {upper}]"
        )));
    }

    let weights = neyman_weights(sizes, std_devs);
    let lo = vec![MIN_STRATUM_SAMPLE as f64; sizes.len()];
    let hi: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let total: f64 = weights.iter().sum();
    let mut alloc: Vec<f64> = weights
        .iter()
        .map(|w| sample_size as f64 * w / total)
        .collect();
    if alloc
        .iter()
        .zip(&hi)
        .any(|(&a, &h)| a < MIN_STRATUM_SAMPLE as f64 || a > h)
    {
        alloc = match water_fill(&weights, &lo, &hi, sample_size as f64) {
            Some(a) => a,
            None => {
                // strata with zero weight absorb the rest in proportion to size
                let mut fill = lo.clone();
                let mut rest = sample_size as f64;
                for h in 0..sizes.len() {
                    if weights[h] > 0.0 {
                        fill[h] = hi[h];
                        rest -= hi[h];
                    }
                }
                let idle: Vec<usize> = (0..sizes.len()).filter(|&h| weights[h] <= 0.0).collect();
                let pick = |v: &[f64]| idle.iter().map(|&h| v[h]).collect::<Vec<_>>();
                let spread = water_fill(&pick(&hi), &pick(&lo), &pick(&hi), rest)
                    .expect("sample size within stratum bounds");
                for (&h, v) in idle.iter().zip(spread) {
                    fill[h] = v;
                }
                fill
            }
        };
    }
    Ok(largest_remainder(&alloc, sample_size))
}

/// Solves `sum_h clamp(lambda * w_h, lo_h, hi_h) = target` for `lambda >= 0`
/// and returns the clamped values, or `None` when the target is out of reach.
fn water_fill(weights: &[f64], lo: &[f64], hi: &[f64], target: f64) -> Option<Vec<f64>> {
    let at = |lambda: f64| -> Vec<f64> {
        (0..weights.len())
            .map(|h| (lambda * weights[h]).clamp(lo[h], hi[h]))
            .collect()
    };
    let sum_at = |lambda: f64| at(lambda).iter().sum::<f64>();
    let mut breaks: Vec<f64> = (0..weights.len())
        .filter(|&h| weights[h] > 0.0)
        .flat_map(|h| [lo[h] / weights[h], hi[h] / weights[h]])
        .collect();
    breaks.sort_by(f64::total_cmp);
    let mut prev = 0.0;
    if sum_at(prev) >= target {
        return (sum_at(prev) - target).abs().le(&1e-9).then(|| at(prev));
    }
    for b in breaks {
        let (f_prev, f_b) = (sum_at(prev), sum_at(b));
        if f_b >= target {
            let lambda = if f_b > f_prev {
                prev + (b - prev) * (target - f_prev) / (f_b - f_prev)
            } else {
                b
            };
            return Some(at(lambda));
        }
        prev = b;
    }
    None
}

fn sample_std_dev(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values
        .clone()
        .fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n < 2 {
        return 0.0;
    }
    let mean = sum / n as f64;
    let ss: f64 = values.map(|v| (v - mean).powi(2)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Stratified SRSWOR: units sorted ascending by `sort_key` (ties by index)
/// are cut into consecutive strata sized by `fractions`; `n_h` follows the
/// bounded Neyman allocation on `alloc_variable`.
pub fn draw_stratified<R: Rng + ?Sized>(
    sort_key: &[f64],
    alloc_variable: &[f64],
    fractions: &[f64],
    sample_size: usize,
    rng: &mut R,
) -> Result<SampleDraw> {
    let population_size = sort_key.len();
    if alloc_variable.len() != population_size {
        return Err(ImputeError::InvalidDesign(
            "sort key and allocation variable lengths differ".into(),
        ));
    }
    if sort_key
        .iter()
        .chain(alloc_variable)
        .any(|v| !v.is_finite())
    {
        return Err(ImputeError::InvalidDesign(
            "non-finite stratification variable".into(),
        ));
    }
    let sizes = stratum_sizes(fractions, population_size)?;

    let mut order: Vec<usize> = (0..population_size).collect();
    order.sort_by(|&a, &b| sort_key[a].total_cmp(&sort_key[b]).then(a.cmp(&b)));

    let mut blocks = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &size in &sizes {
        blocks.push(order[start..start + size].to_vec());
        start += size;
    }
    let std_devs: Vec<f64> = blocks
        .iter()
        .map(|units| sample_std_dev(units.iter().map(|&k| alloc_variable[k])))
        .collect();
    let allocation = bounded_neyman_allocation(&sizes, &std_devs, sample_size)?;

    let strata: Vec<Stratum> = blocks
        .into_iter()
        .zip(allocation)
        .map(|(units, sample_size)| Stratum { units, sample_size })
        .collect();
    let mut selected = Vec::with_capacity(sample_size);
    for stratum in &strata {
        let picks = index::sample(rng, stratum.units.len(), stratum.sample_size);
        selected.extend(picks.iter().map(|i| stratum.units[i]));
    }
    let design = Arc::new(DesignDescriptor::stratified(population_size, strata)?);
    SampleDraw::from_units(design, selected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn census_srswor_selects_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draw = draw_srswor(4, 4, &mut rng).unwrap();
        assert_eq!(draw.unit_ids, vec![0, 1, 2, 3]);
        assert!(draw.pi.iter().all(|&p| p == 1.0));
        for k in 0..4 {
            for l in 0..4 {
                assert_eq!(draw.design.delta(k, l).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn srswor_ten_percent_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draw = draw_srswor(5000, 500, &mut rng).unwrap();
        assert_eq!(draw.len(), 500);
        assert!(draw.pi.iter().all(|&p| p == 0.1));
        assert!(draw.unit_ids.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn srswor_rejects_bad_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            draw_srswor(5, 6, &mut rng),
            Err(ImputeError::InvalidDesign(_))
        ));
        assert!(matches!(
            draw_srswor(5, 0, &mut rng),
            Err(ImputeError::InvalidDesign(_))
        ));
    }

    #[test]
    fn srswor_joint_inclusion_values() {
        let d = DesignDescriptor::srswor(4, 2).unwrap();
        assert!((d.joint_inclusion(0, 3).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!((d.delta(1, 2).unwrap() + 1.0 / 12.0).abs() < 1e-15);
        assert!(matches!(
            d.joint_inclusion(1, 1),
            Err(ImputeError::Domain(_))
        ));
        assert!(d.inclusion(4).is_err());
        let d = DesignDescriptor::srswor(8, 3).unwrap();
        assert!((d.joint_inclusion(0, 7).unwrap() - 3.0 / 28.0).abs() < 1e-15);
    }

    #[test]
    fn fixed_size_identity_srswor() {
        let d = DesignDescriptor::srswor(13, 5).unwrap();
        for k in 0..13 {
            let s: f64 = (0..13)
                .filter(|&l| l != k)
                .map(|l| d.joint_inclusion(k, l).unwrap())
                .sum();
            assert!((s - 4.0 * d.inclusion(k).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_stratum_pairs_are_independent() {
        let d = DesignDescriptor::stratified_from_sizes(&[(50, 5), (30, 3)]).unwrap();
        assert!((d.joint_inclusion(0, 60).unwrap() - 0.01).abs() < 1e-15);
        assert!(d.delta(0, 60).unwrap().abs() < 1e-15);
        let within = d.joint_inclusion(0, 1).unwrap();
        assert!((within - 5.0 * 4.0 / (50.0 * 49.0)).abs() < 1e-15);
    }

    #[test]
    fn single_stratum_matches_srswor() {
        let strat = DesignDescriptor::stratified_from_sizes(&[(9, 4)]).unwrap();
        let srs = DesignDescriptor::srswor(9, 4).unwrap();
        for k in 0..9 {
            assert_eq!(strat.inclusion(k).unwrap(), srs.inclusion(k).unwrap());
            for l in 0..9 {
                assert_eq!(strat.delta(k, l).unwrap(), srs.delta(k, l).unwrap());
            }
        }
    }

    #[test]
    fn stratified_rejects_invalid_partitions() {
        let overlap = vec![
            Stratum {
                units: vec![0, 1, 2],
                sample_size: 2,
            },
            Stratum {
                units: vec![2, 3],
                sample_size: 2,
            },
        ];
        assert!(DesignDescriptor::stratified(4, overlap).is_err());
        let gap = vec![Stratum {
            units: vec![0, 1],
            sample_size: 2,
        }];
        assert!(DesignDescriptor::stratified(3, gap).is_err());
        let tiny = vec![
            Stratum {
                units: vec![0, 1, 2],
                sample_size: 1,
            },
            Stratum {
                units: vec![3, 4],
                sample_size: 2,
            },
        ];
        assert!(DesignDescriptor::stratified(5, tiny).is_err());
    }

    #[test]
    fn paper_stratum_sizes() {
        let sizes = stratum_sizes(&[0.5, 0.25, 0.20, 0.05], 5000).unwrap();
        assert_eq!(sizes, vec![2500, 1250, 1000, 250]);
        let sizes = stratum_sizes(&[1.0 / 3.0; 3], 10).unwrap();
        assert_eq!(sizes.iter().sum::<usize>(), 10);
        assert!(stratum_sizes(&[0.5, 0.4], 10).is_err());
    }

    #[test]
    fn neyman_hand_example() {
        assert_eq!(neyman_allocation(&[4, 4], &[1.0, 3.0], 4), vec![1, 3]);
        // the minimum of two units per stratum moves one unit across
        assert_eq!(
            bounded_neyman_allocation(&[4, 4], &[1.0, 3.0], 4).unwrap(),
            vec![2, 2]
        );
    }

    #[test]
    fn neyman_constant_variable_falls_back_to_proportional() {
        assert_eq!(
            neyman_allocation(&[60, 30, 10], &[0.0; 3], 20),
            vec![12, 6, 2]
        );
        assert_eq!(
            bounded_neyman_allocation(&[60, 30, 10], &[0.0; 3], 20).unwrap(),
            vec![12, 6, 2]
        );
    }

    #[test]
    fn bounded_allocation_respects_stratum_sizes() {
        let alloc = bounded_neyman_allocation(&[100, 5, 100], &[1.0, 100.0, 1.0], 40).unwrap();
        assert_eq!(alloc[1], 5);
        assert_eq!(alloc.iter().sum::<usize>(), 40);
        assert!(bounded_neyman_allocation(&[1, 10], &[1.0, 1.0], 4).is_err());
    }

    #[test]
    fn bounded_allocation_mixed_bound_hits() {
        assert_eq!(bounded_neyman_allocation(&[3, 2], &[17.0, 0.0], 4).unwrap(), vec![2, 2]);
        assert_eq!(bounded_neyman_allocation(&[3, 2], &[17.0, 0.0], 5).unwrap(), vec![3, 2]);
        let alloc = bounded_neyman_allocation(&[29, 5], &[0.0, 0.1], 30).unwrap();
        assert_eq!(alloc, vec![25, 5]);
        let alloc = bounded_neyman_allocation(&[10, 40, 6], &[0.0, 1.0, 5.0], 30).unwrap();
        assert_eq!(alloc, vec![2, 22, 6]);
    }

    #[test]
    fn stratified_draw_inclusions_sum_to_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let key: Vec<f64> = (0..1000).map(|k| ((k * 7919) % 1000) as f64).collect();
        let alloc: Vec<f64> = (0..1000).map(|k| ((k * 31) % 17) as f64).collect();
        let draw = draw_stratified(&key, &alloc, &[0.5, 0.25, 0.2, 0.05], 100, &mut rng).unwrap();
        assert_eq!(draw.len(), 100);
        let total: f64 = (0..1000).map(|k| draw.design.inclusion(k).unwrap()).sum();
        assert!((total - 100.0).abs() < 1e-9);
        // first stratum holds the smallest keys
        let first = &draw.design.strata()[0];
        assert_eq!(first.units.len(), 500);
        assert!(first.units.iter().all(|&k| key[k] < 500.0));
    }
}
