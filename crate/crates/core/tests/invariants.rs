//! Property tests over random designs, states and selections.

use approx::assert_relative_eq;
use bsgs::design::{preprocess, validate_groups, DesignError, GroupStructure, GroupedDesign};
use bsgs::linalg::{
    backward_sacrifice, dual_on_inactive, fit_least_squares, forward_sacrifice, loss_of,
};
use bsgs::metrics::{confusion_of, rates_of, reee_of};
use bsgs::oracle::exhaustive_bsgs;
use bsgs::splicing::{exchange_candidates, gsplicing_fit, GSplicingConfig, SpliceState};
use bsgs::Execution;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_design(seed: u64, n: usize, sizes: &[usize], signal: usize) -> GroupedDesign {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p: usize = sizes.iter().sum();
    let x = DMatrix::from_fn(n, p, |_, _| {
        rng.sample::<f64, _>(StandardNormal) * 2.0 + 0.5
    });
    let mut beta = DVector::zeros(p);
    for c in 0..signal.min(p) {
        beta[c] = 1.5;
    }
    let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = &x * &beta + noise;
    let mut groups = Vec::new();
    let mut next = 0;
    for &k in sizes {
        groups.push((next..next + k).collect());
        next += k;
    }
    preprocess(&x, &y, GroupStructure::new(groups, p).unwrap()).unwrap()
}

fn sizes_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..4, 3..9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shuffled_partitions_validate(p in 1usize..40, cuts in prop::collection::vec(any::<prop::sample::Index>(), 0..6), seed in any::<u64>()) {
        let mut cols: Vec<usize> = (0..p).collect();
        cols.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut bounds: Vec<usize> = cuts.iter().map(|i| i.index(p)).filter(|&b| b > 0).collect();
        bounds.push(0);
        bounds.push(p);
        bounds.sort_unstable();
        bounds.dedup();
        let groups: Vec<Vec<usize>> = bounds.windows(2).map(|w| cols[w[0]..w[1]].to_vec()).collect();
        let s = validate_groups(groups.clone(), p).unwrap();
        prop_assert_eq!(s.num_columns(), p);
        prop_assert_eq!((0..s.num_groups()).map(|j| s.group_size(j)).sum::<usize>(), p);
        let mut seen = vec![0; p];
        for g in s.groups() {
            prop_assert!(g.windows(2).all(|w| w[0] < w[1]));
            g.iter().for_each(|&c| seen[c] += 1);
        }
        prop_assert!(seen.iter().all(|&k| k == 1));

        if groups.len() > 1 {
            let mut overlapping = groups.clone();
            let stolen = overlapping[0][0];
            overlapping[1].push(stolen);
            let overlap_rejected = matches!(validate_groups(overlapping, p), Err(DesignError::Overlap { .. }));
            prop_assert!(overlap_rejected);
        }
    }

    #[test]
    fn groups_are_orthonormal_and_back_map(seed in any::<u64>(), sizes in sizes_strategy(), extra in 0usize..40) {
        let p: usize = sizes.iter().sum();
        let n = p + 5 + extra;
        let d = random_design(seed, n, &sizes, 2);
        let s = d.structure();
        for j in 0..s.num_groups() {
            let cols = d.x().select_columns(s.group(j));
            let gram = cols.tr_mul(&cols) / n as f64;
            let dev = (gram - DMatrix::identity(cols.ncols(), cols.ncols())).abs().max();
            prop_assert!(dev <= 1e-10, "group {} deviates by {:e}", j, dev);
        }
        prop_assert!(d.x().row_sum().abs().max() <= 1e-8 * n as f64);
        prop_assert!(d.y().sum().abs() <= 1e-8 * n as f64 * (1.0 + d.y().abs().max()));

        // Original-basis fitted values reproduce orthonormal-basis ones.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let beta = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut raw_rng = ChaCha8Rng::seed_from_u64(seed);
        let x_raw = DMatrix::from_fn(n, p, |_, _| raw_rng.sample::<f64, _>(StandardNormal) * 2.0 + 0.5);
        let fitted = d.x() * &beta;
        let back = d.centered_columns_of(&x_raw) * d.to_original(&beta);
        prop_assert!((&fitted - back).norm() <= 1e-8 * fitted.norm());
        let round = d.to_orthonormal(&d.to_original(&beta));
        prop_assert!((round - &beta).abs().max() <= 1e-10 * (1.0 + beta.abs().max()));
    }

    #[test]
    fn sacrifices_match_one_group_changes(seed in any::<u64>(), sizes in sizes_strategy(), pick in any::<prop::sample::Index>()) {
        let p: usize = sizes.iter().sum();
        let d = random_design(seed, p + 20, &sizes, 3);
        let j = d.num_groups();
        let active: Vec<usize> = (0..j).filter(|g| g % 2 == 0).collect();
        let fit = fit_least_squares(&d, &active).unwrap();
        let dual = dual_on_inactive(&d, &fit);

        let a = active[pick.index(active.len())];
        let mut dropped = fit.beta.clone();
        d.structure().group(a).iter().for_each(|&c| dropped[c] = 0.0);
        let closed = backward_sacrifice(&d, &fit.beta, a);
        assert_relative_eq!(loss_of(&d, &dropped) - fit.loss, closed, max_relative = 1e-8, epsilon = 1e-14);

        let inactive: Vec<usize> = (0..j).filter(|g| g % 2 == 1).collect();
        if !inactive.is_empty() {
            let i = inactive[pick.index(inactive.len())];
            let mut stepped = fit.beta.clone();
            d.structure().group(i).iter().for_each(|&c| stepped[c] = dual[c]);
            let closed = forward_sacrifice(&d, &dual, i);
            assert_relative_eq!(fit.loss - loss_of(&d, &stepped), closed, max_relative = 1e-8, epsilon = 1e-14);
        }
        for &g in &active {
            for &c in d.structure().group(g) {
                prop_assert_eq!(dual[c], 0.0);
            }
        }
    }

    #[test]
    fn exchange_sets_match_full_sort(seed in any::<u64>(), c in 1usize..4) {
        let sizes = [2usize; 10];
        let d = random_design(seed, 60, &sizes, 6);
        let state = SpliceState::from_active(&d, &[0, 3, 5, 7, 8], 0).unwrap();
        let (s1, s2) = exchange_candidates(&d, &state, c).unwrap();
        let norm = |v: &DVector<f64>, g: usize| d.structure().group(g).iter().map(|&k| v[k] * v[k]).sum::<f64>();
        let mut back: Vec<usize> = state.active.clone();
        back.sort_by(|&a, &b| norm(&state.fit.beta, a).total_cmp(&norm(&state.fit.beta, b)).then(a.cmp(&b)));
        let mut fwd: Vec<usize> = state.inactive.clone();
        fwd.sort_by(|&a, &b| norm(&state.dual, b).total_cmp(&norm(&state.dual, a)).then(a.cmp(&b)));
        prop_assert_eq!(s1, back[..c].to_vec());
        prop_assert_eq!(s2, fwd[..c].to_vec());
    }

    #[test]
    fn splicing_trace_is_disciplined_and_dominated(seed in any::<u64>(), t in 1usize..5, c_max in 1usize..4) {
        let sizes = [2usize, 1, 3, 2, 2, 1, 2, 3];
        let d = random_design(seed, 80, &sizes, 5);
        let cfg = GSplicingConfig::new(&d, t).unwrap().with_c_max(c_max.min(t));
        let fit = gsplicing_fit(&d, &cfg).unwrap();
        prop_assert_eq!(fit.support.len(), t);
        prop_assert!(fit.iterations <= 50);
        for w in fit.trace.windows(2) {
            prop_assert!(w[0].loss - w[1].loss > fit.threshold);
            prop_assert_eq!(w[1].active.len(), t);
        }
        let oracle = exhaustive_bsgs(&d, t, Execution::Sequential).unwrap();
        prop_assert!(oracle.best_loss <= fit.loss * (1.0 + 1e-12));
    }

    #[test]
    fn selection_rates_are_bounded_and_mcc_symmetric(
        j in 1usize..30,
        sel in prop::collection::btree_set(0usize..30, 0..30),
        truth in prop::collection::btree_set(0usize..30, 0..30),
    ) {
        let sel: Vec<usize> = sel.into_iter().filter(|&g| g < j).collect();
        let truth: Vec<usize> = truth.into_iter().filter(|&g| g < j).collect();
        let c = confusion_of(&sel, &truth, j);
        prop_assert_eq!(c.tp + c.fn_, truth.len());
        prop_assert_eq!(c.fp + c.tn, j - truth.len());
        let r = rates_of(c);
        prop_assert!((-1.0..=1.0).contains(&r.mcc));
        prop_assert!(r.tpr.is_none_or(|v| (0.0..=1.0).contains(&v)));
        prop_assert!(r.fpr.is_none_or(|v| (0.0..=1.0).contains(&v)));
        let swapped = rates_of(confusion_of(&truth, &sel, j));
        prop_assert!((swapped.mcc - r.mcc).abs() <= 1e-15);
    }

    #[test]
    fn reee_ignores_consistent_permutations(values in prop::collection::vec(-5.0f64..5.0, 2..30), seed in any::<u64>()) {
        let p = values.len();
        let star = DVector::from_vec(values);
        prop_assume!(star.norm() > 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hat = DVector::from_fn(p, |i, _| star[i] + rng.random_range(-1.0..1.0));
        let mut perm: Vec<usize> = (0..p).collect();
        perm.shuffle(&mut rng);
        let permute = |v: &DVector<f64>| DVector::from_iterator(p, perm.iter().map(|&i| v[i]));
        let a = reee_of(&hat, &star).unwrap();
        let b = reee_of(&permute(&hat), &permute(&star)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }
}
