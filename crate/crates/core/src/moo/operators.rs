use std::cmp::Ordering;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{stream_rng, GaConfig, Individual, MooError, SearchSpace};
use crate::features::{FeatureVector, FEATURE_COUNT};

/// Gaussian noise on the raw feature scale, feature by feature with
/// probability `mutation_prob`, then projected back into the box.
pub fn gaussian_mutate<R: Rng + ?Sized>(
    x: &FeatureVector,
    cfg: &GaConfig,
    space: &SearchSpace,
    rng: &mut R,
) -> Result<FeatureVector, MooError> {
    let normal = Normal::new(0.0, cfg.mutation_sigma)
        .map_err(|e| MooError::Config(e.to_string()))?;
    let mut out = *x;
    for i in 0..FEATURE_COUNT {
        if space.is_frozen(i) {
            continue;
        }
        if rng.gen_bool(cfg.mutation_prob) {
            out.set(i, out.get(i) + normal.sample(rng));
        }
    }
    space.project(&out)
}

/// Per-feature uniform crossover applied with probability `crossover_prob`.
pub fn uniform_crossover<R: Rng + ?Sized>(
    a: &FeatureVector,
    b: &FeatureVector,
    cfg: &GaConfig,
    space: &SearchSpace,
    rng: &mut R,
) -> (FeatureVector, FeatureVector) {
    let (mut c1, mut c2) = (*a, *b);
    if rng.gen_bool(cfg.crossover_prob) {
        for i in 0..FEATURE_COUNT {
            if space.is_frozen(i) {
                continue;
            }
            if rng.gen_bool(0.5) {
                let (va, vb) = (c1.get(i), c2.get(i));
                c1.set(i, vb);
                c2.set(i, va);
            }
        }
    }
    (c1, c2)
}

/// Crowded comparison: lower rank first, then larger crowding distance.
pub(crate) fn crowded_cmp(a: &Individual, b: &Individual) -> Ordering {
    a.rank
        .cmp(&b.rank)
        .then_with(|| b.crowding.total_cmp(&a.crowding))
}

/// Tournament over `size` distinct members; returns the winner's index.
pub fn tournament_select<R: Rng + ?Sized>(pop: &[Individual], size: usize, rng: &mut R) -> usize {
    let picks = rand::seq::index::sample(rng, pop.len(), size.min(pop.len()));
    let mut best = picks.index(0);
    for i in picks.iter().skip(1) {
        if crowded_cmp(&pop[i], &pop[best]) == Ordering::Less {
            best = i;
        }
    }
    best
}

/// Initial population built from exemplar vectors.
///
/// The first `min(k, N)` slots hold the exemplars unchanged. Remaining slots
/// pick every feature from a uniformly chosen exemplar, then mutate.
pub fn seed_population(
    exemplars: &[FeatureVector],
    cfg: &GaConfig,
    space: &SearchSpace,
) -> Result<Vec<FeatureVector>, MooError> {
    if exemplars.is_empty() {
        return Err(MooError::NoExemplars);
    }
    let n = cfg.population_size;
    let mut pop = Vec::with_capacity(n);
    for e in exemplars.iter().take(n) {
        pop.push(space.project(e)?);
    }
    for slot in pop.len()..n {
        let mut rng = stream_rng(cfg.seed, 0, slot as u32);
        let mut child = exemplars[0];
        for i in 0..FEATURE_COUNT {
            let donor = &exemplars[rng.gen_range(0..exemplars.len())];
            child.set(i, donor.get(i));
        }
        let child = space.project(&child)?;
        pop.push(gaussian_mutate(&child, cfg, space, &mut rng)?);
    }
    Ok(pop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::catalog_default;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn space() -> SearchSpace {
        SearchSpace::full(catalog_default())
    }

    #[test]
    fn mutation_disabled_is_identity() {
        let cfg = GaConfig {
            mutation_prob: 0.0,
            ..GaConfig::default()
        };
        let x = catalog_default().midpoint_vector();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(gaussian_mutate(&x, &cfg, &space(), &mut rng).unwrap(), x);
    }

    #[test]
    fn mutation_rate_matches_probability() {
        let cfg = GaConfig::default();
        let s = space();
        let x = catalog_default().midpoint_vector();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trials = 10_000;
        let mut changed = [0usize; FEATURE_COUNT];
        for _ in 0..trials {
            let y = gaussian_mutate(&x, &cfg, &s, &mut rng).unwrap();
            assert!(y.is_within(&s.catalog));
            for (i, c) in changed.iter_mut().enumerate() {
                if y.get(i) != x.get(i) {
                    *c += 1;
                }
            }
        }
        for c in changed {
            let rate = c as f64 / trials as f64;
            assert!((0.48..=0.52).contains(&rate), "rate {rate}");
        }
    }

    #[test]
    fn frozen_features_never_move() {
        let c = catalog_default();
        let i = c.index_of("quotation_level").unwrap();
        let s = SearchSpace::full(c.clone()).with_frozen_at_min(i);
        let cfg = GaConfig {
            mutation_prob: 1.0,
            crossover_prob: 1.0,
            ..GaConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = s.project(&c.midpoint_vector()).unwrap();
        let mut b = a;
        b.set(i, 0.0);
        for _ in 0..200 {
            let (c1, c2) = uniform_crossover(&a, &b, &cfg, &s, &mut rng);
            let m = gaussian_mutate(&c1, &cfg, &s, &mut rng).unwrap();
            assert_eq!(m.get(i), 0.0);
            assert_eq!(c2.get(i), 0.0);
        }
    }

    #[test]
    fn crossover_fixed_point_and_disabled() {
        let x = catalog_default().midpoint_vector();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = GaConfig::default();
        assert_eq!(uniform_crossover(&x, &x, &cfg, &space(), &mut rng), (x, x));
        let mut y = x;
        y.set(3, 1.0);
        y.set(4, 0.0);
        let off = GaConfig {
            crossover_prob: 0.0,
            ..cfg
        };
        assert_eq!(uniform_crossover(&x, &y, &off, &space(), &mut rng), (x, y));
    }

    #[test]
    fn crossover_conserves_values() {
        let c = catalog_default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = GaConfig {
            crossover_prob: 1.0,
            ..GaConfig::default()
        };
        let a = c.min_vector();
        let b = c.midpoint_vector();
        for _ in 0..100 {
            let (c1, c2) = uniform_crossover(&a, &b, &cfg, &space(), &mut rng);
            for i in 0..FEATURE_COUNT {
                let mut got = [c1.get(i), c2.get(i)];
                let mut want = [a.get(i), b.get(i)];
                got.sort_by(f64::total_cmp);
                want.sort_by(f64::total_cmp);
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn single_exemplar_without_mutation_copies() {
        let cfg = GaConfig {
            mutation_prob: 0.0,
            ..GaConfig::default()
        };
        let x = catalog_default().midpoint_vector();
        let pop = seed_population(&[x], &cfg, &space()).unwrap();
        assert_eq!(pop, vec![x; cfg.population_size]);
    }

    #[test]
    fn recombination_picks_from_exemplars() {
        let cfg = GaConfig {
            mutation_prob: 0.0,
            population_size: 40,
            ..GaConfig::default()
        };
        let a = catalog_default().midpoint_vector();
        let mut b = a;
        b.set(4, 2.9);
        let pop = seed_population(&[a, b], &cfg, &space()).unwrap();
        assert_eq!(pop[0], a);
        assert_eq!(pop[1], b);
        let mut seen = std::collections::BTreeSet::new();
        for p in &pop {
            assert!(p.get(4) == a.get(4) || p.get(4) == b.get(4));
            seen.insert(p.get(4).to_bits());
        }
        assert_eq!(seen.len(), 2);
    }

    #[test]
    fn seeded_population_is_in_bounds() {
        let c = catalog_default();
        let cfg = GaConfig {
            mutation_prob: 1.0,
            mutation_sigma: 2.0,
            population_size: 50,
            ..GaConfig::default()
        };
        let pop = seed_population(&[c.min_vector(), c.midpoint_vector()], &cfg, &space()).unwrap();
        assert_eq!(pop.len(), 50);
        assert!(pop.iter().all(|p| p.is_within(&c)));
        assert_eq!(
            seed_population(&[], &cfg, &space()),
            Err(MooError::NoExemplars)
        );
    }

    #[test]
    fn tournament_prefers_better_rank() {
        let x = catalog_default().midpoint_vector();
        let mut pop: Vec<Individual> = (0..2).map(|_| Individual::with_objectives(x, 1.0, 1.0)).collect();
        pop[0].rank = 1;
        pop[1].rank = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(tournament_select(&pop, 2, &mut rng), 1);
        }
    }
}
