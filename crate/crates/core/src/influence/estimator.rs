//! Plug-in entropy and transfer entropy on quantile-binned series.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quantile binning into at most `bins` symbols. Cuts sit on boundaries
/// between distinct values: cut `k` is the boundary whose cumulative count
/// is nearest `k n / bins` (lower on ties), and duplicate cuts merge. A
/// value's symbol is the number of cuts strictly below it. Only ranks
/// matter, so strictly monotone transforms leave the symbols unchanged, and
/// only a constant series collapses to one symbol.
pub fn discretize(x: &[f64], bins: usize) -> Vec<usize> {
    let n = x.len();
    if n == 0 || bins < 2 {
        return vec![0; n];
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    // (value, number of entries <= value) for every distinct value but the largest
    let mut bounds: Vec<(f64, usize)> = Vec::new();
    for i in 0..n - 1 {
        if sorted[i] < sorted[i + 1] {
            bounds.push((sorted[i], i + 1));
        }
    }
    if bounds.is_empty() {
        return vec![0; n];
    }
    let mut cuts: Vec<f64> = (1..bins)
        .map(|k| {
            let ideal = (k * n) as f64 / bins as f64;
            bounds
                .iter()
                .fold((f64::INFINITY, 0.0), |best, &(v, c)| {
                    let d = (c as f64 - ideal).abs();
                    if d < best.0 { (d, v) } else { best }
                })
                .1
        })
        .collect();
    cuts.dedup();
    x.iter().map(|v| cuts.iter().filter(|&&c| *v > c).count()).collect()
}

fn plogp_sum<K>(counts: &BTreeMap<K, usize>, total: usize) -> f64 {
    let n = total as f64;
    -counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>()
}

pub fn entropy_symbols(s: &[usize]) -> f64 {
    let mut counts = BTreeMap::new();
    for &v in s {
        *counts.entry(v).or_insert(0usize) += 1;
    }
    plogp_sum(&counts, s.len()).max(0.0)
}

/// Shannon entropy in bits of the binned series.
pub fn entropy(x: &[f64], bins: usize) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::SeriesTooShort { len: x.len(), lag: 0 });
    }
    Ok(entropy_symbols(&discretize(x, bins)))
}

fn check(x: &[f64], y: &[f64], k: usize, bins: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if k == 0 {
        return Err(Error::invalid("history length must be at least 1"));
    }
    if x.len() < k + 2 {
        return Err(Error::SeriesTooShort { len: x.len(), lag: k });
    }
    if bins < 2 {
        return Err(Error::invalid("need at least 2 bins"));
    }
    let states = (bins as f64).powi(k as i32);
    if !(states < 2f64.powi(62)) {
        return Err(Error::invalid("history state space too large"));
    }
    Ok(())
}

fn history(s: &[usize], t: usize, k: usize, bins: usize) -> u64 {
    (0..k).fold(0u64, |acc, i| acc * bins as u64 + s[t - i] as u64)
}

/// Joint counts for `T_{source -> target}` over samples `t = k-1 .. n-2`.
#[derive(Clone, Debug, Default)]
struct Tables {
    samples: usize,
    full: BTreeMap<(usize, u64, u64), usize>,
    hist_pair: BTreeMap<(u64, u64), usize>,
    next_hist: BTreeMap<(usize, u64), usize>,
    hist: BTreeMap<u64, usize>,
    next: BTreeMap<usize, usize>,
}

impl Tables {
    fn new(source: &[usize], target: &[usize], k: usize, bins: usize) -> Self {
        let mut t = Tables::default();
        for i in k - 1..target.len() - 1 {
            let yn = target[i + 1];
            let yh = history(target, i, k, bins);
            let xh = history(source, i, k, bins);
            *t.full.entry((yn, yh, xh)).or_insert(0) += 1;
            *t.hist_pair.entry((yh, xh)).or_insert(0) += 1;
            *t.next_hist.entry((yn, yh)).or_insert(0) += 1;
            *t.hist.entry(yh).or_insert(0) += 1;
            *t.next.entry(yn).or_insert(0) += 1;
            t.samples += 1;
        }
        t
    }

    fn local(&self, yn: usize, yh: u64, xh: u64) -> f64 {
        let c = self.full[&(yn, yh, xh)] as f64;
        let num = c * self.hist[&yh] as f64;
        let den = self.hist_pair[&(yh, xh)] as f64 * self.next_hist[&(yn, yh)] as f64;
        (num / den).log2()
    }

    fn te(&self) -> f64 {
        let n = self.samples as f64;
        let s: f64 = self
            .full
            .iter()
            .map(|(&(yn, yh, xh), &c)| c as f64 / n * self.local(yn, yh, xh))
            .sum();
        s.max(0.0)
    }

    fn next_entropy(&self) -> f64 {
        plogp_sum(&self.next, self.samples).max(0.0)
    }
}

/// Transfer entropy `T_{X -> Y}` in bits with history length `k`.
pub fn transfer_entropy(x: &[f64], y: &[f64], k: usize, bins: usize) -> Result<f64> {
    check(x, y, k, bins)?;
    let (sx, sy) = (discretize(x, bins), discretize(y, bins));
    Ok(Tables::new(&sx, &sy, k, bins).te())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Influence {
    pub phi: f64,
    pub te_xy: f64,
    pub te_yx: f64,
    /// Entropy of X's next value over the aligned sample.
    pub h_x: f64,
    pub h_y: f64,
}

fn ratio(te: f64, h: f64) -> f64 {
    if h > 0.0 {
        (te / h).min(1.0)
    } else {
        0.0
    }
}

fn combine(te_xy: f64, te_yx: f64, h_x: f64, h_y: f64) -> Influence {
    Influence {
        phi: ratio(te_xy, h_y) - ratio(te_yx, h_x),
        te_xy,
        te_yx,
        h_x,
        h_y,
    }
}

/// `phi = T_{X->Y} / H_Y - T_{Y->X} / H_X`. Each entropy is taken over the
/// same aligned sample as the transfer entropy it divides, which keeps each
/// ratio in `[0, 1]`. A zero-entropy denominator zeroes its term.
pub fn share_of_influence(x: &[f64], y: &[f64], k: usize, bins: usize) -> Result<Influence> {
    check(x, y, k, bins)?;
    let (sx, sy) = (discretize(x, bins), discretize(y, bins));
    let xy = Tables::new(&sx, &sy, k, bins);
    let yx = Tables::new(&sy, &sx, k, bins);
    Ok(combine(xy.te(), yx.te(), yx.next_entropy(), xy.next_entropy()))
}

/// Distributions estimated once over a long series; windows are scored by
/// the mean local transfer entropy of their time points.
#[derive(Clone, Debug)]
pub struct PooledEstimator {
    k: usize,
    bins: usize,
    sx: Vec<usize>,
    sy: Vec<usize>,
    xy: Tables,
    yx: Tables,
}

impl PooledEstimator {
    pub fn new(x: &[f64], y: &[f64], k: usize, bins: usize) -> Result<Self> {
        check(x, y, k, bins)?;
        let (sx, sy) = (discretize(x, bins), discretize(y, bins));
        let xy = Tables::new(&sx, &sy, k, bins);
        let yx = Tables::new(&sy, &sx, k, bins);
        Ok(PooledEstimator { k, bins, sx, sy, xy, yx })
    }

    /// Scores the bins `[lo, hi)`: every sample whose next value falls in
    /// that range. Window means of local transfer entropy can leave
    /// `[0, H]`, so they are clamped into it.
    pub fn window(&self, lo: usize, hi: usize) -> Influence {
        let (h_x, h_y) = (self.yx.next_entropy(), self.xy.next_entropy());
        let first = lo.max(self.k);
        let last = hi.min(self.sy.len());
        if first >= last {
            return combine(0.0, 0.0, h_x, h_y);
        }
        let (mut a, mut b) = (0.0, 0.0);
        for t1 in first..last {
            let t = t1 - 1;
            let yh = history(&self.sy, t, self.k, self.bins);
            let xh = history(&self.sx, t, self.k, self.bins);
            a += self.xy.local(self.sy[t1], yh, xh);
            b += self.yx.local(self.sx[t1], xh, yh);
        }
        let n = (last - first) as f64;
        combine((a / n).clamp(0.0, h_y), (b / n).clamp(0.0, h_x), h_x, h_y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn discretize_cases() {
        assert_eq!(discretize(&[0.0, 0.0, 1.0, 3.0], 2), vec![0, 0, 1, 1]);
        assert_eq!(discretize(&[5.0; 6], 2), vec![0; 6]);
        assert_eq!(discretize(&[3.0, 1.0, 2.0, 4.0, 6.0, 5.0], 3), vec![1, 0, 0, 1, 2, 2]);
        // heavy ties at the top still split
        assert_eq!(discretize(&[1.0, 1.0, 0.0, 1.0, 1.0], 2), vec![1, 1, 0, 1, 1]);
        assert_eq!(discretize(&[0.0, 0.0, 0.0, 0.0, 7.0], 2), vec![0, 0, 0, 0, 1]);
    }

    #[test]
    fn entropy_cases() {
        assert_eq!(entropy(&[2.0; 10], 2).unwrap(), 0.0);
        let alt: Vec<f64> = (0..10).map(|i| (i % 2) as f64).collect();
        assert!((entropy(&alt, 2).unwrap() - 1.0).abs() < 1e-12);
        // median split {0,0 | 1,3}: two equiprobable symbols
        assert!((entropy(&[0.0, 0.0, 1.0, 3.0], 2).unwrap() - 1.0).abs() < 1e-12);
        assert!(entropy(&[1.0], 2).is_err());
    }

    #[test]
    fn te_errors_and_constants() {
        assert!(matches!(transfer_entropy(&[1.0, 2.0], &[1.0], 1, 2), Err(Error::LengthMismatch(2, 1))));
        assert!(matches!(transfer_entropy(&[1.0, 2.0], &[1.0, 2.0], 1, 2), Err(Error::SeriesTooShort { .. })));
        assert_eq!(transfer_entropy(&[1.0; 20], &[3.0; 20], 1, 2).unwrap(), 0.0);
    }

    fn copy_process(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
        let mut y = vec![0.0; n];
        for t in 1..n {
            y[t] = x[t - 1];
        }
        (x, y)
    }

    #[test]
    fn deterministic_copy_carries_one_bit() {
        let (x, y) = copy_process(1, 1000);
        let te = transfer_entropy(&x, &y, 1, 2).unwrap();
        assert!((te - 1.0).abs() < 0.05, "{te}");
        let inf = share_of_influence(&x, &y, 1, 2).unwrap();
        assert!(inf.phi > 0.5, "{inf:?}");
    }

    #[test]
    fn self_transfer_vanishes() {
        let (x, _) = copy_process(2, 200);
        assert_eq!(transfer_entropy(&x, &x, 1, 2).unwrap(), 0.0);
        assert_eq!(share_of_influence(&x, &x, 1, 2).unwrap().phi, 0.0);
    }

    fn series(len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            proptest::collection::vec(0u32..6, len),
            proptest::collection::vec(0u32..6, len),
        )
            .prop_map(|(a, b)| (a.into_iter().map(f64::from).collect(), b.into_iter().map(f64::from).collect()))
    }

    proptest! {
        #[test]
        fn antisymmetric_and_bounded((x, y) in (4usize..60).prop_flat_map(series), k in 1usize..3, bins in 2usize..4) {
            prop_assume!(x.len() >= k + 2);
            let a = share_of_influence(&x, &y, k, bins).unwrap();
            let b = share_of_influence(&y, &x, k, bins).unwrap();
            prop_assert_eq!(a.phi, -b.phi);
            prop_assert!((-1.0..=1.0).contains(&a.phi));
            prop_assert!(a.te_xy >= 0.0 && a.te_yx >= 0.0);
            prop_assert!(a.te_xy <= a.h_y + 1e-12);
            prop_assert!(a.te_yx <= a.h_x + 1e-12);
        }

        #[test]
        fn invariant_under_monotone_maps((x, y) in (5usize..50).prop_flat_map(series), bins in 2usize..4) {
            let fx: Vec<f64> = x.iter().map(|v| (v * 3.0 + 1.0).exp()).collect();
            let fy: Vec<f64> = y.iter().map(|v| v.powi(3) - 7.0).collect();
            prop_assert_eq!(entropy(&x, bins).unwrap(), entropy(&fx, bins).unwrap());
            prop_assert_eq!(transfer_entropy(&x, &y, 1, bins).unwrap(), transfer_entropy(&fx, &fy, 1, bins).unwrap());
        }

        #[test]
        fn pooled_windows_stay_bounded((x, y) in (20usize..80).prop_flat_map(series), lo in 0usize..10, w in 2usize..15) {
            let est = PooledEstimator::new(&x, &y, 1, 2).unwrap();
            let inf = est.window(lo, lo + w);
            prop_assert!((-1.0..=1.0).contains(&inf.phi));
            prop_assert!(inf.te_xy >= 0.0 && inf.te_yx >= 0.0);
        }
    }
}
