use std::collections::BTreeMap;

use proptest::prelude::*;
use t2vqa_core::data::RatingRecord;
use t2vqa_core::study::{compute_mosz, DegeneratePolicy, StudyError};
use t2vqa_core::synth::rating_table;

fn by_video(ratings: &[RatingRecord]) -> BTreeMap<String, f64> {
    compute_mosz(ratings, DegeneratePolicy::Abort).unwrap().into_iter().map(|m| (m.video_id, m.mos_z)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mos_ignores_rating_order(seed in 0u64..1000, shuffle in any::<u64>()) {
        let ratings = rating_table(4, 12, seed);
        let mut shuffled = ratings.clone();
        let mut s = shuffle | 1;
        for i in (1..shuffled.len()).rev() {
            s ^= s << 13; s ^= s >> 7; s ^= s << 17;
            shuffled.swap(i, (s % (i as u64 + 1)) as usize);
        }
        prop_assert_eq!(by_video(&ratings), by_video(&shuffled));
    }

    #[test]
    fn mos_ignores_per_annotator_affine_rescoring(
        seed in 0u64..1000,
        scales in prop::collection::vec((0.05f64..20.0, -500.0f64..500.0), 5),
    ) {
        let ratings = rating_table(5, 10, seed);
        let rescored: Vec<RatingRecord> = ratings
            .iter()
            .map(|r| {
                let a: usize = r.annotator_id[1..].parse().unwrap();
                let (mul, add) = scales[a];
                RatingRecord { raw_score: r.raw_score * mul + add, ..r.clone() }
            })
            .collect();
        let (x, y) = (by_video(&ratings), by_video(&rescored));
        for (v, z) in &x {
            prop_assert!((z - y[v]).abs() < 1e-9, "{v}: {z} vs {}", y[v]);
        }
    }
}

#[test]
fn constant_annotator_is_excluded_or_aborts() {
    let mut ratings = rating_table(3, 6, 4);
    for r in ratings.iter_mut().filter(|r| r.annotator_id == "a01") {
        r.raw_score = 55.0;
    }
    assert!(matches!(compute_mosz(&ratings, DegeneratePolicy::Abort), Err(StudyError::Degenerate(_))));
    let kept = compute_mosz(&ratings, DegeneratePolicy::ExcludeWithWarning).unwrap();
    assert_eq!(kept.len(), 6);
    assert!(kept.iter().all(|m| m.n_ratings == 2));
}

#[test]
fn duplicate_and_non_finite_ratings_are_errors() {
    let mut ratings = rating_table(2, 4, 9);
    ratings.push(ratings[0].clone());
    assert!(matches!(compute_mosz(&ratings, DegeneratePolicy::Abort), Err(StudyError::DuplicateRating { .. })));
    let mut ratings = rating_table(2, 4, 9);
    ratings[3].raw_score = f64::NAN;
    assert!(matches!(compute_mosz(&ratings, DegeneratePolicy::Abort), Err(StudyError::NonFinite { .. })));
}
