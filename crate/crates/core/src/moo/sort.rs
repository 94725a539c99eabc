use super::{Individual, MooError, Objectives};

pub fn dominates(a: &Objectives, b: &Objectives) -> bool {
    a.dominates(b)
}

/// Fast non-dominated sort over raw objective pairs.
///
/// Returns fronts of indices, each sorted ascending.
pub fn fronts_of(objs: &[Objectives]) -> Vec<Vec<usize>> {
    let n = objs.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    let mut current = Vec::new();
    for p in 0..n {
        for q in 0..n {
            if p == q {
                continue;
            }
            if objs[p].dominates(&objs[q]) {
                dominated_by_me[p].push(q);
            } else if objs[q].dominates(&objs[p]) {
                domination_count[p] += 1;
            }
        }
        if domination_count[p] == 0 {
            current.push(p);
        }
    }
    let mut fronts = Vec::new();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominated_by_me[p] {
                domination_count[q] -= 1;
                if domination_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Sorts `pop` into fronts and writes each member's rank back.
pub fn non_dominated_sort(pop: &mut [Individual]) -> Result<Vec<Vec<usize>>, MooError> {
    let objs = pop
        .iter()
        .enumerate()
        .map(|(i, ind)| ind.objectives.ok_or(MooError::Unevaluated(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let fronts = fronts_of(&objs);
    for (rank, front) in fronts.iter().enumerate() {
        for &i in front {
            pop[i].rank = rank;
        }
    }
    Ok(fronts)
}

/// Writes crowding distances for the members of one front.
pub fn crowding_distance(pop: &mut [Individual], front: &[usize]) {
    for &i in front {
        pop[i].crowding = 0.0;
    }
    if front.len() <= 2 {
        for &i in front {
            pop[i].crowding = f64::INFINITY;
        }
        return;
    }
    let getters: [fn(&Objectives) -> f64; 2] = [|o| o.vis, |o| o.qual];
    for get in getters {
        let mut order = front.to_vec();
        order.sort_by(|&a, &b| {
            get(&pop[a].objectives())
                .total_cmp(&get(&pop[b].objectives()))
                .then(a.cmp(&b))
        });
        let first = order[0];
        let last = order[order.len() - 1];
        let lo = get(&pop[first].objectives());
        let hi = get(&pop[last].objectives());
        pop[first].crowding = f64::INFINITY;
        pop[last].crowding = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in order.windows(3) {
            let gap = get(&pop[w[2]].objectives()) - get(&pop[w[0]].objectives());
            let c = &mut pop[w[1]].crowding;
            if c.is_finite() {
                *c += gap / range;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::catalog_default;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pop(points: &[(f64, f64)]) -> Vec<Individual> {
        let x = catalog_default().midpoint_vector();
        points
            .iter()
            .map(|&(v, q)| Individual::with_objectives(x, v, q))
            .collect()
    }

    /// Peel fronts by repeated full scans.
    fn brute_force_fronts(objs: &[Objectives]) -> Vec<Vec<usize>> {
        let mut remaining: Vec<usize> = (0..objs.len()).collect();
        let mut fronts = Vec::new();
        while !remaining.is_empty() {
            let front: Vec<usize> = remaining
                .iter()
                .copied()
                .filter(|&i| !remaining.iter().any(|&j| objs[j].dominates(&objs[i])))
                .collect();
            remaining.retain(|i| !front.contains(i));
            fronts.push(front);
        }
        fronts
    }

    #[test]
    fn incomparable_pair_shares_front() {
        let mut p = pop(&[(10.0, 80.0), (20.0, 70.0)]);
        let fronts = non_dominated_sort(&mut p).unwrap();
        assert_eq!(fronts, vec![vec![0, 1]]);
    }

    #[test]
    fn strict_dominance_splits_fronts() {
        let mut p = pop(&[(10.0, 80.0), (20.0, 90.0)]);
        let fronts = non_dominated_sort(&mut p).unwrap();
        assert_eq!(fronts, vec![vec![1], vec![0]]);
        assert_eq!(p[0].rank, 1);
        assert_eq!(p[1].rank, 0);
    }

    #[test]
    fn unevaluated_is_error() {
        let mut p = pop(&[(1.0, 1.0)]);
        p.push(Individual::new(Default::default(), catalog_default().midpoint_vector()));
        assert_eq!(non_dominated_sort(&mut p), Err(MooError::Unevaluated(1)));
    }

    #[test]
    fn matches_brute_force_on_random_populations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..64 {
            let n = rng.gen_range(1..=64);
            // coarse grid so ties and duplicates occur
            let objs: Vec<Objectives> = (0..n)
                .map(|_| Objectives::new(rng.gen_range(0..10) as f64, rng.gen_range(0..10) as f64))
                .collect();
            assert_eq!(fronts_of(&objs), brute_force_fronts(&objs));
        }
    }

    #[test]
    fn crowding_boundaries() {
        let mut p = pop(&[(1.0, 1.0)]);
        crowding_distance(&mut p, &[0]);
        assert!(p[0].crowding.is_infinite());
        let mut p = pop(&[(1.0, 2.0), (2.0, 1.0)]);
        crowding_distance(&mut p, &[0, 1]);
        assert!(p.iter().all(|i| i.crowding.is_infinite()));
    }

    #[test]
    fn crowding_evenly_spaced_line() {
        let mut p = pop(&[(0.0, 2.0), (1.0, 1.0), (2.0, 0.0)]);
        crowding_distance(&mut p, &[0, 1, 2]);
        assert!(p[0].crowding.is_infinite());
        assert!(p[2].crowding.is_infinite());
        assert!((p[1].crowding - 2.0).abs() < 1e-12);
    }

    #[test]
    fn crowding_zero_width_objective_contributes_nothing() {
        let mut p = pop(&[(0.0, 5.0), (1.0, 5.0), (3.0, 5.0), (4.0, 5.0)]);
        crowding_distance(&mut p, &[0, 1, 2, 3]);
        assert!((p[1].crowding - 0.75).abs() < 1e-12);
        assert!((p[2].crowding - 0.75).abs() < 1e-12);
    }
}
