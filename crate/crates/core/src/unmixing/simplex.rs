use crate::{Error, Result};

/// Exact Euclidean projection onto the probability simplex
/// `{x : x ≥ 0, Σx = 1}` by sorting (O(d log d)).
pub fn project_to_simplex(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::Invalid("cannot project an empty vector".into()));
    }
    if let Some(index) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(project_finite(v))
}

/// Projection without input validation; `v` must be non-empty and finite.
pub(crate) fn project_finite(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist2(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    #[test]
    fn feasible_point_is_fixed() {
        assert_eq!(project_to_simplex(&[0.5, 0.5]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn uniform_shift() {
        let p = project_to_simplex(&[0.3, 0.3, 0.3]).unwrap();
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_grid_search_on_segment() {
        let v = [2.0, 0.0];
        // oracle: scan x = (s, 1 - s) for s in [0, 1] at 1e-5
        let best = (0..=100_000)
            .map(|i| i as f64 * 1e-5)
            .min_by(|a, b| dist2(&[*a, 1.0 - a], &v).total_cmp(&dist2(&[*b, 1.0 - b], &v)))
            .unwrap();
        let p = project_to_simplex(&v).unwrap();
        assert!((p[0] - best).abs() < 1e-5 && (p[1] - (1.0 - best)).abs() < 1e-5);
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(project_to_simplex(&[]).is_err());
        assert!(project_to_simplex(&[1.0, f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn lands_on_simplex(v in prop::collection::vec(-50.0f64..50.0, 1..16)) {
            let p = project_to_simplex(&v).unwrap();
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn idempotent(v in prop::collection::vec(-5.0f64..5.0, 1..12)) {
            let p = project_to_simplex(&v).unwrap();
            let q = project_to_simplex(&p).unwrap();
            prop_assert!(dist2(&p, &q).sqrt() < 1e-12);
        }

        #[test]
        fn nonexpansive(
            pair in (1usize..10).prop_flat_map(|d| (
                prop::collection::vec(-5.0f64..5.0, d),
                prop::collection::vec(-5.0f64..5.0, d),
            ))
        ) {
            let (u, v) = pair;
            let (pu, pv) = (project_to_simplex(&u).unwrap(), project_to_simplex(&v).unwrap());
            prop_assert!(dist2(&pu, &pv).sqrt() <= dist2(&u, &v).sqrt() + 1e-12);
        }

        #[test]
        fn beats_random_feasible_points(
            v in prop::collection::vec(-3.0f64..3.0, 3),
            w in prop::collection::vec(0.0f64..1.0, 3),
        ) {
            let s: f64 = w.iter().sum();
            prop_assume!(s > 1e-6);
            let q: Vec<f64> = w.iter().map(|x| x / s).collect();
            let p = project_to_simplex(&v).unwrap();
            prop_assert!(dist2(&p, &v) <= dist2(&q, &v) + 1e-12);
        }
    }
}
