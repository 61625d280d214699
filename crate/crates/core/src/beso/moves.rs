use crate::error::{Error, Result};
use crate::fem::{DensityVector, VariationVector};
use crate::fvsa::SensitivityVector;

/// Per-iteration move limits: net volume change and maximum switched elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoveConstraints {
    pub vv: i64,
    pub tv_max: usize,
}

impl MoveConstraints {
    pub fn new(vv: i64, tv_max: usize) -> Result<Self> {
        if vv.unsigned_abs() as usize > tv_max {
            return Err(Error::InfeasibleMove(format!("|VV| = {} exceeds TV_max = {tv_max}", vv.abs())));
        }
        Ok(Self { vv, tv_max })
    }
}

/// Evolutionary and admission rates with the target volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeSchedule {
    pub er: f64,
    pub ar_max: f64,
    /// Target volume in elements.
    pub target: usize,
}

/// Move limits for the current volume.
///
/// Away from the target, `VV = ∓min(round(N·ER), |V - V*|)` (at least one element when
/// `ER > 0`) and `TV_max = round(N·(ER + 2·AR_max))`. At the target `VV = 0` and
/// `TV_max = round(N·2·AR_max)`. `TV_max` is clamped to `[|VV|, N]`.
pub fn schedule(n: usize, s: &VolumeSchedule, volume: usize) -> MoveConstraints {
    let nf = n as f64;
    let gap = volume.abs_diff(s.target) as i64;
    let (vv, er_eff) = if gap == 0 || s.er <= 0.0 {
        (0, 0.0)
    } else {
        let step = ((nf * s.er).round() as i64).max(1).min(gap);
        (if volume > s.target { -step } else { step }, s.er)
    };
    let tv = (nf * (er_eff + 2.0 * s.ar_max)).round() as usize;
    let tv_max = tv.max(vv.unsigned_abs() as usize).min(n);
    MoveConstraints { vv, tv_max }
}

/// Minimizes `Σ α_i y_i` with `Σ y_i = VV` and `Σ y_i² ≤ TV_max` by ranking.
///
/// Solids are removed in descending `α`, voids added in ascending `α` (ties by index).
/// After the mandatory `|VV|` switches, a remove/add pair is taken only while the
/// added void's value is strictly below the removed solid's. Masked elements are
/// never removed.
pub fn solve_subproblem(alpha: &SensitivityVector, x: &DensityVector, mc: &MoveConstraints) -> Result<VariationVector> {
    let n = x.len();
    if alpha.len() != n {
        return Err(Error::InvalidInput(format!("{} sensitivities for {n} elements", alpha.len())));
    }
    if mc.vv.unsigned_abs() as usize > mc.tv_max {
        return Err(Error::InfeasibleMove(format!("|VV| = {} exceeds TV_max = {}", mc.vv.abs(), mc.tv_max)));
    }
    let a = &alpha.alpha;
    let mut solids: Vec<usize> = (0..n).filter(|&e| x.is_solid(e) && !alpha.is_masked(e)).collect();
    let mut voids: Vec<usize> = (0..n).filter(|&e| !x.is_solid(e)).collect();
    for &e in solids.iter().chain(&voids) {
        if !a[e].is_finite() {
            return Err(Error::InvalidInput(format!("sensitivity of element {e} is {}", a[e])));
        }
    }
    solids.sort_by(|&p, &q| a[q].total_cmp(&a[p]).then(p.cmp(&q)));
    voids.sort_by(|&p, &q| a[p].total_cmp(&a[q]).then(p.cmp(&q)));

    let (mut removed, mut added) = if mc.vv < 0 { (mc.vv.unsigned_abs() as usize, 0) } else { (0, mc.vv as usize) };
    if removed > solids.len() {
        return Err(Error::InfeasibleMove(format!("VV = {} but only {} removable solids", mc.vv, solids.len())));
    }
    if added > voids.len() {
        return Err(Error::InfeasibleMove(format!("VV = {} but only {} voids", mc.vv, voids.len())));
    }
    while removed + added + 2 <= mc.tv_max
        && removed < solids.len()
        && added < voids.len()
        && a[voids[added]] < a[solids[removed]]
    {
        removed += 1;
        added += 1;
    }
    let mut y = vec![0i8; n];
    for &e in &solids[..removed] {
        y[e] = -1;
    }
    for &e in &voids[..added] {
        y[e] = 1;
    }
    VariationVector::new(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sv(a: &[f64]) -> SensitivityVector {
        SensitivityVector::computed(a.to_vec())
    }

    // Exhaustive minimum of Σ α y over the feasible variation set.
    fn brute_force(a: &[f64], x: &DensityVector, mc: &MoveConstraints) -> Option<f64> {
        let n = a.len();
        let mut best: Option<f64> = None;
        for mask in 0u32..(1 << n) {
            let (mut vv, mut tv, mut obj) = (0i64, 0usize, 0.0);
            for e in 0..n {
                if mask & (1 << e) != 0 {
                    let y = if x.is_solid(e) { -1 } else { 1 };
                    vv += y;
                    tv += 1;
                    obj += a[e] * y as f64;
                }
            }
            if vv == mc.vv && tv <= mc.tv_max {
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
        best
    }

    fn objective(a: &[f64], y: &VariationVector) -> f64 {
        y.as_slice().iter().zip(a).map(|(&y, a)| y as f64 * a).sum()
    }

    #[test]
    fn schedule_matches_published_settings() {
        let s = VolumeSchedule { er: 0.01, ar_max: 0.02, target: 15000 };
        assert_eq!(schedule(30000, &s, 30000), MoveConstraints { vv: -300, tv_max: 1500 });
        assert_eq!(schedule(30000, &s, 15000), MoveConstraints { vv: 0, tv_max: 1200 });
        assert_eq!(schedule(30000, &s, 15005).vv, -5);
        let cant = VolumeSchedule { er: 0.0, ar_max: 0.022, target: 320 };
        assert_eq!(schedule(640, &cant, 320), MoveConstraints { vv: 0, tv_max: 28 });
        let free = VolumeSchedule { er: 0.01, ar_max: 1.0, target: 15000 };
        assert_eq!(schedule(30000, &free, 30000).tv_max, 30000);
    }

    #[test]
    fn empty_move() {
        let x = DensityVector::from_bits(&[1, 0]).unwrap();
        let y = solve_subproblem(&sv(&[1.0, 0.0]), &x, &MoveConstraints { vv: 0, tv_max: 0 }).unwrap();
        assert_eq!(y.topological_variation(), 0);
    }

    #[test]
    fn worked_example() {
        let x = DensityVector::from_bits(&[1, 1, 1, 0, 0, 0]).unwrap();
        let a = [5.0, 4.0, 3.0, 1.0, 2.0, 6.0];
        let mc = MoveConstraints { vv: -1, tv_max: 3 };
        let y = solve_subproblem(&sv(&a), &x, &mc).unwrap();
        assert_eq!(y.as_slice(), &[-1, -1, 0, 1, 0, 0]);
        assert_eq!(objective(&a, &y), brute_force(&a, &x, &mc).unwrap());
    }

    #[test]
    fn equal_values_make_no_discretionary_swaps() {
        let x = DensityVector::from_bits(&[1, 1, 1, 0, 0, 0]).unwrap();
        let y = solve_subproblem(&sv(&[2.0; 6]), &x, &MoveConstraints { vv: -2, tv_max: 6 }).unwrap();
        assert_eq!(y.topological_variation(), 2);
        assert_eq!(y.as_slice(), &[-1, -1, 0, 0, 0, 0]);
    }

    #[test]
    fn masked_solids_stay() {
        let x = DensityVector::from_bits(&[1, 1]).unwrap();
        let mut s = sv(&[5.0, 1.0]);
        s.status[0] = crate::fvsa::Status::MaskedConnective;
        let y = solve_subproblem(&s, &x, &MoveConstraints { vv: -1, tv_max: 1 }).unwrap();
        assert_eq!(y.as_slice(), &[0, -1]);
    }

    #[test]
    fn infeasible_moves_are_reported() {
        let x = DensityVector::from_bits(&[1, 0, 0]).unwrap();
        assert!(solve_subproblem(&sv(&[0.0; 3]), &x, &MoveConstraints { vv: -2, tv_max: 2 }).is_err());
        assert!(solve_subproblem(&sv(&[0.0; 3]), &x, &MoveConstraints { vv: 1, tv_max: 0 }).is_err());
    }

    proptest! {
        #[test]
        fn greedy_is_optimal(bits in proptest::collection::vec(any::<bool>(), 1..=12),
                             vals in proptest::collection::vec(-10i32..10, 12),
                             vv in -4i64..=4, extra in 0usize..6) {
            let n = bits.len();
            let x = DensityVector::new(bits);
            let a: Vec<f64> = vals[..n].iter().map(|&v| v as f64 * 0.5).collect();
            let mc = MoveConstraints { vv, tv_max: vv.unsigned_abs() as usize + extra };
            match (solve_subproblem(&sv(&a), &x, &mc), brute_force(&a, &x, &mc)) {
                (Ok(y), Some(best)) => {
                    prop_assert_eq!(y.volume_variation(), vv);
                    prop_assert!(y.topological_variation() <= mc.tv_max);
                    prop_assert!((objective(&a, &y) - best).abs() < 1e-12);
                }
                (Err(_), None) => {}
                (r, b) => prop_assert!(false, "greedy {:?} vs brute force {:?}", r.is_ok(), b),
            }
        }
    }
}
