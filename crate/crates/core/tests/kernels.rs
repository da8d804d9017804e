use proptest::prelude::*;
use sisal_core::selectinf::{bonferroni_p, trunc_p, untruncated_p, NullDistribution};
use sisal_core::{union_normalize, Interval, IntervalUnion};

fn full(dist: NullDistribution) -> IntervalUnion {
    match dist {
        NullDistribution::Normal { .. } => IntervalUnion::single(Interval::REAL_LINE),
        NullDistribution::Chi { .. } => IntervalUnion::single(Interval::at_least(0.0)),
    }
}

fn arb_dist() -> impl Strategy<Value = NullDistribution> {
    prop_oneof![
        (0.05f64..20.0).prop_map(|sd| NullDistribution::Normal { sd }),
        (1u32..200).prop_map(|df| NullDistribution::Chi { df }),
    ]
}

proptest! {
    #[test]
    fn full_support_matches_untruncated(dist in arb_dist(), u in 0.0f64..1.0) {
        let z = match dist {
            NullDistribution::Normal { sd } => (u - 0.5) * 16.0 * sd,
            NullDistribution::Chi { df } => u * (df as f64 + 12.0 * (df as f64).sqrt() + 5.0),
        };
        let truncated = trunc_p(dist, z, &full(dist)).unwrap();
        let plain = untruncated_p(dist, z);
        prop_assert!((truncated - plain).abs() <= 1e-12, "{dist:?} z={z}: {truncated} vs {plain}");
    }

    #[test]
    fn p_values_are_probabilities(
        dist in arb_dist(),
        cuts in prop::collection::vec(-12.0f64..40.0, 2..10),
        pick in 0.0f64..1.0,
    ) {
        let mut cuts = cuts;
        cuts.sort_by(f64::total_cmp);
        let lo_clip = if matches!(dist, NullDistribution::Chi { .. }) { 0.0 } else { f64::NEG_INFINITY };
        let ivs: Vec<Interval> = cuts
            .chunks(2)
            .filter(|c| c.len() == 2)
            .map(|c| Interval::new(c[0].max(lo_clip), c[1].max(lo_clip)))
            .collect();
        let region = union_normalize(ivs);
        prop_assume!(!region.is_empty() && region.total_length() > 0.0);
        let iv = region.intervals()[((pick * region.len() as f64) as usize).min(region.len() - 1)];
        let z = iv.lo() + pick * (iv.hi() - iv.lo());
        // the region can sit where the law has no representable mass
        if let Ok(p) = trunc_p(dist, z, &region) {
            prop_assert!((0.0..=1.0).contains(&p), "p = {p}");
        }
    }

    #[test]
    fn bonferroni_dominates_naive(p in 0.0f64..=1.0, n in 1usize..5000) {
        let b = bonferroni_p(p, n);
        prop_assert!(b >= p && b <= 1.0);
    }
}

#[test]
fn rejects_observation_outside_region() {
    let region = IntervalUnion::single(Interval::new(1.0, 2.0));
    assert!(trunc_p(NullDistribution::Normal { sd: 1.0 }, 3.0, &region).is_err());
    assert!(trunc_p(NullDistribution::Chi { df: 3 }, 0.5, &region).is_err());
}
