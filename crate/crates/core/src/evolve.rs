//! One internal GP run: fresh population, linear-scaled fitness, elitism,
//! tournament selection, mutation-only offspring.

use rand::Rng;

use crate::bench::{RunConfig, Variant};
use crate::error::{Error, Result};
use crate::expr::{CaseMatrix, EvalCounter, ExprTree, TreeGen};
use crate::scaling::{apply_scaling, fit_scaling, fitness_mse, fitness_variance, ScaledModel};

/// One evaluated member of the current generation.
#[derive(Clone, Debug)]
pub struct EvaluatedIndividual {
    pub tree: ExprTree,
    /// Raw (unscaled) semantics on the training cases.
    pub raw: Vec<f64>,
    pub coeffs: crate::scaling::ScalingCoeffs,
    /// Fitness against the current target; +inf if quarantined.
    pub fitness: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Population {
    pub members: Vec<EvaluatedIndividual>,
}

impl Population {
    /// Index of the best member: lowest fitness, ties broken by smaller
    /// tree, then earlier index.
    pub fn best_index(&self) -> usize {
        let mut best = 0;
        for i in 1..self.members.len() {
            if better(&self.members[i], &self.members[best]) {
                best = i;
            }
        }
        best
    }
}

fn better(a: &EvaluatedIndividual, b: &EvaluatedIndividual) -> bool {
    match a.fitness.total_cmp(&b.fitness) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => a.tree.size() < b.tree.size(),
    }
}

/// Result of one internal run of `n_int` generations.
#[derive(Clone, Debug)]
pub struct InternalLoopResult {
    /// Best individual of each generation, frozen with its coefficients.
    pub best_per_generation: Vec<ScaledModel>,
    /// Best of the final generation (the run's partial model).
    pub final_best: ScaledModel,
    /// Scaled training semantics of `final_best`.
    pub final_best_train_output: Vec<f64>,
    /// Node operations spent by this run.
    pub node_ops: u64,
}

fn evaluate_individual(
    tree: ExprTree,
    features: &CaseMatrix,
    target: &[f64],
    cfg: &RunConfig,
    counter: &EvalCounter,
) -> Result<EvaluatedIndividual> {
    let raw = tree.evaluate(features, counter)?;
    let coeffs = fit_scaling(&raw, target)?;
    let scaled = apply_scaling(&raw, coeffs);
    let fitness = match cfg.variant {
        Variant::DtEm => fitness_mse(&scaled, target)?,
        _ => fitness_variance(&scaled, target)?,
    };
    // Quarantine: non-finite fitness can never win tournaments or elitism.
    let fitness = if fitness.is_finite() {
        fitness
    } else {
        f64::INFINITY
    };
    Ok(EvaluatedIndividual {
        tree,
        raw,
        coeffs,
        fitness,
    })
}

/// Tournament of `k` members drawn uniformly with replacement; the winner
/// has the lowest fitness, ties broken by smaller tree then draw order.
pub fn tournament_select<'a, R: Rng + ?Sized>(
    pop: &'a Population,
    k: usize,
    rng: &mut R,
) -> Result<&'a EvaluatedIndividual> {
    if pop.members.is_empty() {
        return Err(Error::contract("tournament over an empty population"));
    }
    if k == 0 {
        return Err(Error::contract("tournament size must be at least 1"));
    }
    let mut winner = &pop.members[rng.gen_range(0..pop.members.len())];
    for _ in 1..k {
        let challenger = &pop.members[rng.gen_range(0..pop.members.len())];
        if better(challenger, winner) {
            winner = challenger;
        }
    }
    Ok(winner)
}

/// Runs exactly `cfg.n_int` generations against `target` and records the
/// generation bests. The next generation is the elite plus mutants of
/// tournament winners; mutation probability is 100% and there is no
/// crossover.
pub fn run_internal<R: Rng + ?Sized>(
    target: &[f64],
    train_features: &CaseMatrix,
    cfg: &RunConfig,
    ext_iter: usize,
    rng: &mut R,
    counter: &EvalCounter,
) -> Result<InternalLoopResult> {
    if target.len() != train_features.rows() {
        return Err(Error::contract(format!(
            "target length {} does not match {} training cases",
            target.len(),
            train_features.rows()
        )));
    }
    let gen_ctx = TreeGen {
        feature_count: train_features.cols(),
        use_min_max: !matches!(cfg.variant, Variant::DtNm),
    };
    let ops_before = counter.total();

    let mut trees = gen_ctx.ramped_half_and_half(rng, cfg.pop_size, cfg.init_max_depth);
    let mut best_per_generation = Vec::with_capacity(cfg.n_int);
    let mut final_best_train_output = Vec::new();

    for int_iter in 0..cfg.n_int {
        let members = trees
            .drain(..)
            .map(|t| evaluate_individual(t, train_features, target, cfg, counter))
            .collect::<Result<Vec<_>>>()?;
        let pop = Population { members };
        let best_idx = pop.best_index();
        let best = &pop.members[best_idx];
        best_per_generation.push(ScaledModel {
            tree: best.tree.clone(),
            coeffs: best.coeffs,
            ext_iter,
            int_iter,
            train_fitness: best.fitness,
        });

        if int_iter + 1 == cfg.n_int {
            final_best_train_output = apply_scaling(&best.raw, best.coeffs);
        } else {
            // Elite first, then (P - elite) single-site mutants.
            let mut order: Vec<usize> = (0..pop.members.len()).collect();
            order.sort_by(|&i, &j| {
                pop.members[i]
                    .fitness
                    .total_cmp(&pop.members[j].fitness)
                    .then(pop.members[i].tree.size().cmp(&pop.members[j].tree.size()))
                    .then(i.cmp(&j))
            });
            trees = order
                .iter()
                .take(cfg.elite_size)
                .map(|&i| pop.members[i].tree.clone())
                .collect();
            while trees.len() < cfg.pop_size {
                let parent = tournament_select(&pop, cfg.tournament_k, rng)?;
                trees.push(gen_ctx.mutate(
                    &parent.tree,
                    rng,
                    cfg.leaf_bias,
                    cfg.mutation_max_depth,
                ));
            }
        }
    }

    let final_best = best_per_generation
        .last()
        .cloned()
        .expect("n_int >= 1 guarantees at least one generation");
    Ok(InternalLoopResult {
        best_per_generation,
        final_best,
        final_best_train_output,
        node_ops: counter.total() - ops_before,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::NodeKind;
    use crate::scaling::ScalingCoeffs;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn desk_config(variant: Variant, pop: usize, n_int: usize) -> RunConfig {
        RunConfig {
            variant,
            pop_size: pop,
            n_int,
            n_ext: 1,
            ..RunConfig::default()
        }
    }

    fn square_features(m: usize, d: usize) -> CaseMatrix {
        CaseMatrix::from_rows(
            &(0..m)
                .map(|i| (0..d).map(|j| ((i + 1) * (j + 2)) as f64 * 0.1).collect())
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    fn evaluated(fitness: f64, size_hint: usize) -> EvaluatedIndividual {
        let mut nodes = vec![NodeKind::Add; (size_hint - 1) / 2];
        nodes.resize(size_hint, NodeKind::Const(0.0));
        EvaluatedIndividual {
            tree: ExprTree::new(nodes).unwrap(),
            raw: vec![0.0, 0.0],
            coeffs: ScalingCoeffs { a: 0.0, b: 1.0 },
            fitness,
        }
    }

    #[test]
    fn single_generation_single_best() {
        let features = square_features(10, 2);
        let target: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let cfg = desk_config(Variant::Sgpdt, 2, 1);
        let counter = EvalCounter::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let res = run_internal(&target, &features, &cfg, 0, &mut rng, &counter).unwrap();
        assert_eq!(res.best_per_generation.len(), 1);
        assert_eq!(res.final_best_train_output.len(), 10);
        assert!(res.node_ops > 0);
    }

    #[test]
    fn constant_target_is_solved_in_generation_one() {
        let features = square_features(12, 3);
        let target = vec![4.2; 12];
        let cfg = desk_config(Variant::Sgpdt, 8, 1);
        let counter = EvalCounter::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let res = run_internal(&target, &features, &cfg, 0, &mut rng, &counter).unwrap();
        assert!(res.final_best.train_fitness.abs() < 1e-18);
    }

    #[test]
    fn best_fitness_is_non_increasing() {
        let features = square_features(30, 4);
        let target: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        for variant in [Variant::Sgpdt, Variant::DtEm, Variant::DtNm] {
            let cfg = desk_config(variant, 30, 15);
            let counter = EvalCounter::new();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let res = run_internal(&target, &features, &cfg, 0, &mut rng, &counter).unwrap();
            let fits: Vec<f64> = res
                .best_per_generation
                .iter()
                .map(|m| m.train_fitness)
                .collect();
            for w in fits.windows(2) {
                assert!(w[1] <= w[0], "fitness increased: {:?}", fits);
            }
        }
    }

    #[test]
    fn population_size_is_constant() {
        // Indirect check: node ops per generation stay proportional to P.
        let features = square_features(10, 2);
        let target: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
        let cfg = desk_config(Variant::Sgpdt, 7, 5);
        let counter = EvalCounter::with_event_log();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        run_internal(&target, &features, &cfg, 0, &mut rng, &counter).unwrap();
        let events = counter.events().unwrap();
        assert_eq!(events.len(), 7 * 5, "P evaluations per generation");
    }

    #[test]
    fn frozen_coefficients_reproduce_recorded_fitness() {
        let features = square_features(25, 3);
        let target: Vec<f64> = (0..25).map(|i| (i as f64).sqrt()).collect();
        let cfg = desk_config(Variant::Sgpdt, 20, 8);
        let counter = EvalCounter::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let res = run_internal(&target, &features, &cfg, 0, &mut rng, &counter).unwrap();
        for model in &res.best_per_generation {
            let raw = model.tree.evaluate(&features, &counter).unwrap();
            let scaled = apply_scaling(&raw, model.coeffs);
            let refit = fitness_variance(&scaled, &target).unwrap();
            let scale = model.train_fitness.abs().max(1.0);
            assert!((refit - model.train_fitness).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn tournament_k1_returns_some_member() {
        let pop = Population {
            members: vec![evaluated(1.0, 1), evaluated(2.0, 1)],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            assert!(tournament_select(&pop, 1, &mut rng).is_ok());
        }
    }

    #[test]
    fn tournament_dominance() {
        let pop = Population {
            members: vec![evaluated(3.0, 1), evaluated(1.0, 1), evaluated(2.0, 1)],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // k much larger than P: the global best is drawn almost surely.
        let w = tournament_select(&pop, 64, &mut rng).unwrap();
        assert_eq!(w.fitness, 1.0);
    }

    #[test]
    fn tournament_tie_broken_by_size() {
        let pop = Population {
            members: vec![evaluated(1.0, 9), evaluated(1.0, 5)],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = tournament_select(&pop, 64, &mut rng).unwrap();
        assert_eq!(w.tree.size(), 5);
    }

    #[test]
    fn tournament_empty_population_errors() {
        let pop = Population::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!(tournament_select(&pop, 4, &mut rng).is_err());
    }

    #[test]
    fn quarantined_individual_never_wins() {
        let pop = Population {
            members: vec![evaluated(f64::INFINITY, 1), evaluated(100.0, 1)],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let w = tournament_select(&pop, 8, &mut rng).unwrap();
            assert_eq!(w.fitness, 100.0);
        }
        assert_eq!(pop.best_index(), 1);
    }
}
