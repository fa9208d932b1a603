//! Ranking utility, optimal arrangement construction, and proximity.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::types::{ExposureProfile, Ranking, RelevanceVector};

/// Exposure values below this are treated as zero.
pub const EXPOSURE_EPS: f64 = 1e-9;

/// Contiguous token blocks induced by an arrangement: `(offset, len)` of the
/// block occupied by the element at each slot. Offsets are 0-based; the
/// 1-based start position of slot `i` is `offset + 1`.
pub fn token_blocks(perm: &[usize], lens: &[usize]) -> Vec<(usize, usize)> {
    let mut blocks = Vec::with_capacity(perm.len());
    let mut offset = 0;
    for &el in perm {
        let len = lens[el];
        blocks.push((offset, len));
        offset += len;
    }
    blocks
}

fn check_profile<F: Real>(prof: &ExposureProfile<F>, lens: &[usize]) -> Result<()> {
    let needed: usize = lens.iter().sum();
    if prof.len() < needed {
        return Err(Error::ProfileTooShort {
            needed,
            have: prof.len(),
        });
    }
    Ok(())
}

fn clamped(v: f64) -> f64 {
    if v < EXPOSURE_EPS {
        0.0
    } else {
        v
    }
}

fn block_mean<F: Real>(values: &[F], offset: usize, len: usize) -> F {
    let sum: F = values[offset..offset + len].iter().cloned().sum();
    let mean = sum / F::from_usize_(len);
    if mean.to_f64().map(clamped) == Some(0.0) {
        F::zero()
    } else {
        mean
    }
}

/// Expected utility of an arrangement: for each slot, the mean exposure of
/// the token block the element occupies times the element's relevance.
///
/// With unit token lengths this is the plain exposure-weighted sum of
/// relevances over rank positions.
pub fn utility<F: Real>(
    perm: &[usize],
    rel: &RelevanceVector<F>,
    prof: &ExposureProfile<F>,
    lens: &[usize],
) -> Result<F> {
    assert_eq!(perm.len(), rel.len(), "perm and relevance must agree");
    assert_eq!(perm.len(), lens.len(), "perm and lens must agree");
    debug_assert!(lens.iter().all(|&l| l >= 1));
    check_profile(prof, lens)?;
    let blocks = token_blocks(perm, lens);
    let mut total = F::zero();
    for (slot, &(offset, len)) in blocks.iter().enumerate() {
        total = total + block_mean(&prof.values, offset, len) * rel.scores[perm[slot]];
    }
    Ok(total)
}

/// Arrangement maximizing [`utility`].
///
/// Equal token lengths: slots sorted by block exposure descending receive
/// elements sorted by relevance descending — the exact maximizer by the
/// rearrangement inequality. Variable lengths: block boundaries are frozen
/// from the relevance-descending arrangement, then elements are matched to
/// blocks by descending block exposure. Ties break by ascending element id
/// on the element side and ascending slot on the slot side.
pub fn optimal_ranking<F: Real>(
    rel: &RelevanceVector<F>,
    prof: &ExposureProfile<F>,
    lens: &[usize],
) -> Result<Ranking<F>> {
    assert_eq!(rel.len(), lens.len());
    check_profile(prof, lens)?;
    let n = rel.len();

    let mut by_rel: Vec<usize> = (0..n).collect();
    by_rel.sort_by(|&a, &b| {
        rel.scores[b]
            .partial_cmp(&rel.scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    // Block boundaries frozen from the relevance-descending arrangement.
    let blocks = token_blocks(&by_rel, lens);
    let mut by_exposure: Vec<usize> = (0..n).collect();
    let means: Vec<F> = blocks
        .iter()
        .map(|&(o, l)| block_mean(&prof.values, o, l))
        .collect();
    by_exposure.sort_by(|&a, &b| {
        means[b]
            .partial_cmp(&means[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut perm = vec![0usize; n];
    for (rank, &slot) in by_exposure.iter().enumerate() {
        perm[slot] = by_rel[rank];
    }

    let u = utility(&perm, rel, prof, lens)?;
    Ok(Ranking { perm, utility: u })
}

/// Normalized position of `x` between a lower and an upper bound, clamped
/// to [0, 1]. `clamped` flags an out-of-range `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proximity<F> {
    pub value: F,
    pub clamped: bool,
}

pub fn proximity<F: Real>(x: F, lower: F, upper: F) -> Result<Proximity<F>> {
    if lower >= upper {
        return Err(Error::DegenerateBounds {
            lower: lower.to_f64().unwrap_or(f64::NAN),
            upper: upper.to_f64().unwrap_or(f64::NAN),
        });
    }
    let raw = (x - lower) / (upper - lower);
    let value = raw.max(F::zero()).min(F::one());
    Ok(Proximity {
        value,
        clamped: raw != value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::RelevanceMethod;
    use itertools::Itertools;
    use proptest::prelude::*;
    use rand::Rng;

    fn rel(scores: Vec<f64>) -> RelevanceVector<f64> {
        RelevanceVector::new(scores, RelevanceMethod::GroundTruth)
    }

    fn example_rel() -> RelevanceVector<f64> {
        let mut s = vec![0.0; 10];
        for i in [0, 2, 4] {
            s[i] = 1.0;
        }
        rel(s)
    }

    #[test]
    fn worked_example_identity_ranking() {
        let prof = ExposureProfile::<f64>::inverse_rank(10);
        let lens = vec![1usize; 10];
        let perm: Vec<usize> = (0..10).collect();
        let u = utility(&perm, &example_rel(), &prof, &lens).unwrap();
        assert!((u - 23.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn worked_example_optimal_ranking() {
        let prof = ExposureProfile::<f64>::inverse_rank(10);
        let lens = vec![1usize; 10];
        let best = optimal_ranking(&example_rel(), &prof, &lens).unwrap();
        assert_eq!(&best.perm[..3], &[0, 2, 4]);
        assert!((best.utility - 11.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn zero_relevance_gives_zero_utility() {
        let prof = ExposureProfile::<f64>::inverse_rank(10);
        let lens = vec![1usize; 10];
        let perm: Vec<usize> = (0..10).rev().collect();
        let u = utility(&perm, &rel(vec![0.0; 10]), &prof, &lens).unwrap();
        assert_eq!(u, 0.0);
    }

    #[test]
    fn constant_profile_is_permutation_invariant() {
        let prof = ExposureProfile::<f64>::from_values(vec![0.3; 4]);
        let lens = vec![1usize; 4];
        let r = rel(vec![0.9, 0.1, 0.5, 0.7]);
        let base = utility(&[0, 1, 2, 3], &r, &prof, &lens).unwrap();
        for perm in (0..4).permutations(4) {
            let u = utility(&perm, &r, &prof, &lens).unwrap();
            assert!((u - base).abs() < 1e-12);
            assert!((u - 0.3 * (0.9 + 0.1 + 0.5 + 0.7)).abs() < 1e-12);
        }
    }

    #[test]
    fn short_profile_is_an_error() {
        let prof = ExposureProfile::<f64>::inverse_rank(5);
        let lens = vec![2usize; 3];
        let err = utility(&[0, 1, 2], &rel(vec![1.0, 0.0, 0.0]), &prof, &lens).unwrap_err();
        assert!(err.to_string().starts_with("profile_too_short"));
    }

    #[test]
    fn equal_relevance_yields_identity_under_decreasing_profile() {
        let prof = ExposureProfile::<f64>::inverse_rank(6);
        let lens = vec![1usize; 6];
        let best = optimal_ranking(&rel(vec![0.4; 6]), &prof, &lens).unwrap();
        assert_eq!(best.perm, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn optimal_matches_brute_force_on_unit_lengths() {
        // Independent oracle: enumerate all 720 arrangements.
        let mut rng = crate::seed::rng(901);
        for _ in 0..40 {
            let scores: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            let profile: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            let r = rel(scores);
            let prof = ExposureProfile::from_values(profile);
            let lens = vec![1usize; 6];
            let best = optimal_ranking(&r, &prof, &lens).unwrap();
            let brute = (0..6)
                .permutations(6)
                .map(|p| utility(&p, &r, &prof, &lens).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(
                (best.utility - brute).abs() < 1e-12,
                "constructed {} vs brute {}",
                best.utility,
                brute
            );
        }
    }

    #[test]
    fn optimal_dominates_random_permutations() {
        use rand::seq::SliceRandom;
        let mut rng = crate::seed::rng(902);
        for _ in 0..1000 {
            let n = rng.random_range(2..9);
            let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let profile: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let r = rel(scores);
            let prof = ExposureProfile::from_values(profile);
            let lens = vec![1usize; n];
            let best = optimal_ranking(&r, &prof, &lens).unwrap();
            let mut perm: Vec<usize> = (0..n).collect();
            for _ in 0..200 {
                perm.shuffle(&mut rng);
                let u = utility(&perm, &r, &prof, &lens).unwrap();
                assert!(best.utility >= u - 1e-12);
            }
        }
    }

    #[test]
    fn proximity_table_cell() {
        let p = proximity(2.95f64, 0.31, 3.02).unwrap();
        assert!((p.value - 0.974).abs() < 0.005);
        assert!(!p.clamped);
    }

    #[test]
    fn proximity_bounds_and_clamping() {
        assert_eq!(proximity(0.31, 0.31, 3.02).unwrap().value, 0.0);
        assert_eq!(proximity(3.02, 0.31, 3.02).unwrap().value, 1.0);
        let below = proximity(-1.0, 0.0, 1.0).unwrap();
        assert_eq!(below.value, 0.0);
        assert!(below.clamped);
        let above = proximity(2.0, 0.0, 1.0).unwrap();
        assert_eq!(above.value, 1.0);
        assert!(above.clamped);
        let err = proximity(0.5, 1.0, 1.0).unwrap_err();
        assert!(err.to_string().starts_with("degenerate_bounds"));
    }

    proptest! {
        #[test]
        fn proximity_is_affine_invariant(
            x in -10.0f64..10.0,
            l in -10.0f64..0.0,
            span in 0.1f64..10.0,
            a in 0.1f64..5.0,
            b in -5.0f64..5.0,
        ) {
            let u = l + span;
            let p1 = proximity(x, l, u).unwrap().value;
            let p2 = proximity(a * x + b, a * l + b, a * u + b).unwrap().value;
            prop_assert!((p1 - p2).abs() < 1e-9);
        }

        #[test]
        fn blocks_partition_token_positions(lens in proptest::collection::vec(1usize..5, 1..8)) {
            let n = lens.len();
            let perm: Vec<usize> = (0..n).rev().collect();
            let blocks = token_blocks(&perm, &lens);
            let total: usize = lens.iter().sum();
            let mut covered = vec![false; total];
            for (offset, len) in blocks {
                for c in covered.iter_mut().skip(offset).take(len) {
                    prop_assert!(!*c);
                    *c = true;
                }
            }
            prop_assert!(covered.into_iter().all(|c| c));
        }
    }
}
