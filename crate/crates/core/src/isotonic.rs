//! Weighted least-squares nondecreasing regression (pool adjacent violators).

use alloc::vec::Vec;

use crate::{Error, Result};

/// Nondecreasing step function.
///
/// `f(x) = levels[i]` for the largest `i` with `breakpoints[i] <= x`, and
/// `levels[0]` left of the first breakpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneFn {
    breakpoints: Vec<f64>,
    levels: Vec<f64>,
}

impl MonotoneFn {
    pub fn new(breakpoints: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::EmptyInput);
        }
        if breakpoints.len() != levels.len() {
            return Err(Error::LengthMismatch {
                expected: breakpoints.len(),
                found: levels.len(),
            });
        }
        if let Some(index) = breakpoints.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "breakpoint",
                index,
            });
        }
        if let Some(index) = levels.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "level",
                index,
            });
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "breakpoints must be strictly increasing",
            ));
        }
        if levels.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter("levels must be nondecreasing"));
        }
        Ok(MonotoneFn { breakpoints, levels })
    }

    pub fn constant(x: f64, level: f64) -> Self {
        MonotoneFn {
            breakpoints: alloc::vec![x],
            levels: alloc::vec![level],
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        let i = self.breakpoints.partition_point(|&b| b <= x);
        self.levels[i.saturating_sub(1)]
    }
}

/// Abscissae sorted and grouped once, so several targets can be fitted
/// against the same `xs` without re-sorting.
#[derive(Debug, Clone)]
pub struct SortedAbscissae {
    order: Vec<usize>,
    /// Distinct x values, increasing.
    distinct: Vec<f64>,
    /// `group_end[g]` is one past the last position in `order` holding
    /// `distinct[g]`.
    group_end: Vec<usize>,
}

impl SortedAbscissae {
    pub fn new(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(index) = xs.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "abscissa",
                index,
            });
        }
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
        let mut distinct = Vec::new();
        let mut group_end = Vec::new();
        for (pos, &i) in order.iter().enumerate() {
            if distinct.last() != Some(&xs[i]) {
                if !distinct.is_empty() {
                    group_end.push(pos);
                }
                distinct.push(xs[i]);
            }
        }
        group_end.push(order.len());
        Ok(SortedAbscissae {
            order,
            distinct,
            group_end,
        })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Number of distinct abscissa values.
    pub fn distinct_count(&self) -> usize {
        self.distinct.len()
    }

    /// Fits `ys` with unit weights.
    pub fn fit_unweighted(&self, ys: &[f64]) -> Result<MonotoneFn> {
        self.fit_impl(ys, None)
    }

    pub fn fit(&self, ys: &[f64], ws: &[f64]) -> Result<MonotoneFn> {
        self.fit_impl(ys, Some(ws))
    }

    fn fit_impl(&self, ys: &[f64], ws: Option<&[f64]>) -> Result<MonotoneFn> {
        let n = self.order.len();
        if ys.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: ys.len(),
            });
        }
        if let Some(index) = ys.iter().position(|y| !y.is_finite()) {
            return Err(Error::NonFinite {
                what: "target",
                index,
            });
        }
        if let Some(ws) = ws {
            if ws.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: ws.len(),
                });
            }
            if let Some(index) = ws.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
                return Err(Error::NonPositiveWeight { index });
            }
        }
        let weight = |i: usize| ws.map_or(1.0, |ws| ws[i]);

        // Pool blocks: (first group, weight sum, weighted mean).
        let mut starts: Vec<usize> = Vec::with_capacity(self.distinct.len());
        let mut weights: Vec<f64> = Vec::with_capacity(self.distinct.len());
        let mut means: Vec<f64> = Vec::with_capacity(self.distinct.len());
        let mut begin = 0;
        for (g, &end) in self.group_end.iter().enumerate() {
            let mut w = 0.0;
            let mut wy = 0.0;
            for &i in &self.order[begin..end] {
                w += weight(i);
                wy += weight(i) * ys[i];
            }
            begin = end;
            let mut block_start = g;
            let mut block_w = w;
            let mut block_mean = wy / w;
            // Equal neighbours are pooled as well, which keeps levels strictly
            // increasing without changing the fit.
            while let Some(&prev_mean) = means.last() {
                if prev_mean < block_mean {
                    break;
                }
                let prev_w = weights.pop().unwrap_or(0.0);
                means.pop();
                block_start = starts.pop().unwrap_or(block_start);
                let total = prev_w + block_w;
                block_mean = (prev_w * prev_mean + block_w * block_mean) / total;
                block_w = total;
            }
            starts.push(block_start);
            weights.push(block_w);
            means.push(block_mean);
        }
        let breakpoints = starts.iter().map(|&g| self.distinct[g]).collect();
        Ok(MonotoneFn {
            breakpoints,
            levels: means,
        })
    }
}

/// Weighted least-squares nondecreasing fit of `ys` against `xs`.
///
/// Samples that share an x value are merged into one weighted point first,
/// so the minimizer is unique as a function of x.
pub fn pava(xs: &[f64], ys: &[f64], ws: &[f64]) -> Result<MonotoneFn> {
    if xs.is_empty() {
        return Err(Error::EmptyInput);
    }
    SortedAbscissae::new(xs)?.fit(ys, ws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn unit(n: usize) -> Vec<f64> {
        vec![1.0; n]
    }

    #[test]
    fn pava_examples() {
        let f = pava(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &unit(3)).unwrap();
        assert_eq!(
            [f.evaluate(1.0), f.evaluate(2.0), f.evaluate(3.0)],
            [1.0, 2.0, 3.0]
        );

        let f = pava(&[1.0, 2.0], &[2.0, 1.0], &unit(2)).unwrap();
        assert_eq!(f.levels(), &[1.5]);

        let f = pava(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0], &unit(3)).unwrap();
        assert_eq!(f.levels(), &[2.0]);
    }

    #[test]
    fn ties_are_merged_before_pooling() {
        let f = pava(&[2.0, 1.0, 2.0, 3.0], &[5.0, 0.0, 1.0, 4.0], &unit(4)).unwrap();
        assert_eq!(f.breakpoints(), &[1.0, 2.0, 3.0]);
        assert_eq!(f.levels(), &[0.0, 3.0, 4.0]);
    }

    #[test]
    fn weights_shift_the_pooled_mean() {
        let f = pava(&[1.0, 2.0], &[4.0, 1.0], &[3.0, 1.0]).unwrap();
        assert_eq!(f.levels(), &[3.25]);
    }

    #[test]
    fn errors() {
        assert_eq!(pava(&[], &[], &[]), Err(Error::EmptyInput));
        assert!(matches!(
            pava(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 0.0]),
            Err(Error::NonPositiveWeight { index: 1 })
        ));
        assert!(matches!(
            pava(&[1.0, 2.0], &[1.0], &[1.0, 1.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(pava(&[f64::NAN], &[1.0], &[1.0]).is_err());
        assert!(MonotoneFn::new(vec![1.0, 1.0], vec![0.0, 1.0]).is_err());
        assert!(MonotoneFn::new(vec![1.0, 2.0], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn evaluate_examples() {
        let c = MonotoneFn::new(vec![0.0], vec![5.0]).unwrap();
        assert_eq!(c.evaluate(-10.0), 5.0);
        let f = MonotoneFn::new(vec![1.0, 2.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(f.evaluate(1.5), 0.0);
        assert_eq!(f.evaluate(2.0), 1.0);
        assert_eq!(f.evaluate(100.0), 1.0);
        assert_eq!(f.evaluate(0.0), 0.0);
    }

    #[test]
    fn sorted_abscissae_reuse() {
        let xs = [3.0, 1.0, 2.0, 1.0];
        let sorted = SortedAbscissae::new(&xs).unwrap();
        assert_eq!(sorted.distinct_count(), 3);
        let a = sorted.fit_unweighted(&[1.0, 2.0, 0.0, 4.0]).unwrap();
        assert_eq!(a, pava(&xs, &[1.0, 2.0, 0.0, 4.0], &unit(4)).unwrap());
        let b = sorted.fit_unweighted(&[0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(b.levels(), &[0.0]);
    }

    fn sample() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..30).prop_flat_map(|n| {
            (
                proptest::collection::vec((0i32..8).prop_map(f64::from), n),
                proptest::collection::vec(-10.0f64..10.0, n),
                proptest::collection::vec(0.1f64..5.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn fit_invariants((xs, ys, ws) in sample()) {
            let f = pava(&xs, &ys, &ws).unwrap();
            prop_assert!(f.levels().windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(f.breakpoints().windows(2).all(|w| w[0] < w[1]));
            let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut fitted_mass = 0.0;
            let mut mass = 0.0;
            for i in 0..xs.len() {
                let v = f.evaluate(xs[i]);
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
                fitted_mass += ws[i] * v;
                mass += ws[i] * ys[i];
            }
            prop_assert!((fitted_mass - mass).abs() <= 1e-9 * (1.0 + mass.abs()));
        }

        #[test]
        fn idempotent((xs, ys, ws) in sample()) {
            let f = pava(&xs, &ys, &ws).unwrap();
            let refit_ys: Vec<f64> = xs.iter().map(|&x| f.evaluate(x)).collect();
            let g = pava(&xs, &refit_ys, &ws).unwrap();
            for &x in &xs {
                prop_assert!((f.evaluate(x) - g.evaluate(x)).abs() < 1e-9);
            }
        }
    }
}
