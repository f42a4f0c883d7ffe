//! Feasibility indices, fixed points and regime classification.
//!
//! For targets `Γ` the index `C(Γ) = inf_{p>0} max_k γ_k I_k(p) / p_k`
//! decides whether the targets can be met (`C(Γ) < 1`). Under per-user caps
//! `p̂` the analogous `C(Γ; 𝒫)` is a minimum over the box and the targets are
//! met iff it is at most one. Both indices are homogeneous in `Γ`, so they are
//! computed as the reciprocal of the largest feasible scaling of `Γ`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::interference::{check_powers, InterferenceFunction, PowerVector, SirTargets};
use crate::AffineModel;

/// Values within this distance of 1 count as infeasible.
pub const BOUNDARY_TIE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationOptions {
    /// Relative ∞-norm tolerance on `‖p - F(p)‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IterationOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
        }
    }
}

/// Per-user power caps `p̂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PowerConstraints {
    caps: Vec<f64>,
}

impl PowerConstraints {
    pub fn new(caps: Vec<f64>) -> Result<Self> {
        if caps.is_empty() {
            return Err(invalid("power caps", "no users"));
        }
        if caps.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(invalid("power caps", "must be finite and positive"));
        }
        Ok(Self { caps })
    }

    pub fn uniform(users: usize, cap: f64) -> Result<Self> {
        Self::new(vec![cap; users])
    }

    pub fn caps(&self) -> &[f64] {
        &self.caps
    }

    pub fn check_users(&self, users: usize) -> Result<()> {
        if self.caps.len() != users {
            return Err(Error::DimensionMismatch {
                expected: users,
                found: self.caps.len(),
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for PowerConstraints {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PowerConstraints> for Vec<f64> {
    fn from(c: PowerConstraints) -> Self {
        c.caps
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Iterates `p -> min{w ∘ I(p), caps}` from `p0` until the relative residual
/// drops below `tol`. Returns the first iterate that passes.
pub fn weighted_fixed_point<M: InterferenceFunction + ?Sized>(
    model: &M,
    weights: &[f64],
    caps: Option<&[f64]>,
    p0: &[f64],
    opts: &IterationOptions,
) -> Result<PowerVector> {
    let k = model.users();
    check_powers(k, p0)?;
    if weights.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: weights.len(),
        });
    }
    if let Some(c) = caps {
        if c.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: c.len(),
            });
        }
    }
    let mut p = p0.to_vec();
    let mut next = vec![0.0; k];
    for iteration in 0..opts.max_iter {
        model.evaluate_into(&p, &mut next);
        for (i, x) in next.iter_mut().enumerate() {
            *x *= weights[i];
            if let Some(c) = caps {
                *x = x.min(c[i]);
            }
        }
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::Budget {
                iterations: iteration,
                last: p,
            });
        }
        let diff = p.iter().zip(&next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if diff <= opts.tol * sup_norm(&p) {
            return PowerVector::new(p);
        }
        core::mem::swap(&mut p, &mut next);
    }
    Err(Error::Budget {
        iterations: opts.max_iter,
        last: p,
    })
}

/// Fixed point of `p -> w ∘ (V p + z)` by a direct solve of
/// `(I - diag(w) V) p = diag(w) z`. Fails unless the solution is positive,
/// which is the case exactly when `diag(w) V` has spectral radius below one.
pub fn affine_fixed_point(model: &AffineModel, weights: &[f64]) -> Result<PowerVector> {
    let k = model.users();
    if weights.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: weights.len(),
        });
    }
    let mut a = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            a[i * k + j] = if i == j { 1.0 } else { 0.0 } - weights[i] * model.gain(i, j);
        }
    }
    let b: Vec<f64> = (0..k).map(|i| weights[i] * model.noise()[i]).collect();
    let p = crate::linalg::solve_real(&a, &b)?;
    if p.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(invalid("targets", "not attainable by any power vector"));
    }
    PowerVector::new(p)
}

/// Fixed point `p* = Γ I(p*)` by the standard iteration from `p0`.
pub fn yates_fixed_point<M: InterferenceFunction + ?Sized>(
    model: &M,
    targets: &SirTargets,
    p0: &[f64],
    opts: &IterationOptions,
) -> Result<PowerVector> {
    targets.check_users(model.users())?;
    weighted_fixed_point(model, targets.gamma(), None, p0, opts)
}

/// Fixed point of `p -> min{δΓ I(p), p̂}`, iterated upward from zero. When
/// the protected targets fit under the caps this is the minimal power vector
/// meeting them with margin.
pub fn constrained_fixed_point<M: InterferenceFunction + ?Sized>(
    model: &M,
    targets: &SirTargets,
    constraints: &PowerConstraints,
    opts: &IterationOptions,
) -> Result<PowerVector> {
    targets.check_users(model.users())?;
    constraints.check_users(model.users())?;
    weighted_fixed_point(
        model,
        &targets.protected(),
        Some(constraints.caps()),
        &vec![0.0; model.users()],
        opts,
    )
}

/// Spectral radius of the nonnegative matrix `diag(γ) V`, which equals
/// `C(Γ)` for affine interference.
pub fn c_gamma_affine(model: &AffineModel, targets: &SirTargets) -> Result<f64> {
    let k = model.users();
    targets.check_users(k)?;
    let a: Vec<f64> = (0..k * k)
        .map(|idx| targets.gamma()[idx / k] * model.gains()[idx])
        .collect();
    Ok(spectral_radius_nonneg(&a, k))
}

/// Spectral radius of a nonnegative row-major `n × n` matrix.
///
/// The radius is the largest over the strongly connected components of the
/// matrix graph; each irreducible block is handled by shifted power
/// iteration with Collatz-Wielandt bounds.
pub fn spectral_radius_nonneg(a: &[f64], n: usize) -> f64 {
    strongly_connected_components(a, n)
        .iter()
        .map(|block| {
            if block.len() == 1 {
                let i = block[0];
                a[i * n + i]
            } else {
                irreducible_radius(a, n, block)
            }
        })
        .fold(0.0, f64::max)
}

fn strongly_connected_components(a: &[f64], n: usize) -> Vec<Vec<usize>> {
    // reach[i][j]: j reachable from i in one or more steps
    let mut reach: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| a[i * n + j] > 0.0).collect()).collect();
    for m in 0..n {
        for i in 0..n {
            if reach[i][m] {
                for j in 0..n {
                    if reach[m][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut assigned = vec![false; n];
    let mut blocks = Vec::new();
    for i in 0..n {
        if assigned[i] {
            continue;
        }
        let mut block = vec![i];
        assigned[i] = true;
        for j in i + 1..n {
            if !assigned[j] && reach[i][j] && reach[j][i] {
                block.push(j);
                assigned[j] = true;
            }
        }
        blocks.push(block);
    }
    blocks
}

fn irreducible_radius(a: &[f64], n: usize, block: &[usize]) -> f64 {
    let m = block.len();
    let sub: Vec<f64> = block
        .iter()
        .flat_map(|&i| block.iter().map(move |&j| a[i * n + j]))
        .collect();
    let row_sums: Vec<f64> = (0..m).map(|i| sub[i * m..(i + 1) * m].iter().sum()).collect();
    let hi = row_sums.iter().copied().fold(0.0, f64::max);
    let lo = row_sums.iter().copied().fold(f64::INFINITY, f64::min);
    // the shift makes the block primitive; its size trades off the
    // contraction of periodic eigenvalues against that of complex ones
    let shift = libm::sqrt(hi * lo.max(hi * 1e-3));
    let mut x = vec![1.0; m];
    let mut y = vec![0.0; m];
    let mut bounds = (lo, hi);
    for _ in 0..200_000 {
        for i in 0..m {
            y[i] = shift * x[i] + sub[i * m..(i + 1) * m].iter().zip(&x).map(|(v, x)| v * x).sum::<f64>();
        }
        let (mut rmin, mut rmax) = (f64::INFINITY, 0.0f64);
        for i in 0..m {
            let r = y[i] / x[i];
            rmin = rmin.min(r);
            rmax = rmax.max(r);
        }
        bounds = ((rmin - shift).max(bounds.0), (rmax - shift).min(bounds.1));
        let norm = sup_norm(&y);
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
        if bounds.1 - bounds.0 <= 1e-14 * bounds.1.max(1e-300) {
            break;
        }
    }
    0.5 * (bounds.0 + bounds.1)
}

/// Absolute power level beyond which the probing iteration counts as divergent.
pub const PROBE_CEILING: f64 = 1e150;

/// Parameters for deciding feasibility of a general model by running the
/// standard iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub iteration: IterationOptions,
    /// Divergence is considered once powers exceed this multiple of the
    /// first iterate.
    pub guard: f64,
    /// Consecutive growing steps above the guard required for a verdict.
    pub window: usize,
    /// Minimal per-step growth ratio counted as growing.
    pub growth: f64,
    pub bisection_steps: usize,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            iteration: IterationOptions::default(),
            guard: 1e12,
            window: 50,
            growth: 1.0 + 1e-6,
            bisection_steps: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Feasible,
    Infeasible,
    Undecided,
}

/// Runs `p -> w ∘ I(p)` from zero and reports whether it settles.
pub fn probe_feasibility<M: InterferenceFunction + ?Sized>(model: &M, weights: &[f64], opts: &ProbeOptions) -> Verdict {
    let k = model.users();
    let mut p = vec![0.0; k];
    let mut next = vec![0.0; k];
    let mut guard = f64::INFINITY;
    let mut streak = 0;
    for iteration in 0..opts.iteration.max_iter {
        model.evaluate_into(&p, &mut next);
        for (x, w) in next.iter_mut().zip(weights) {
            *x *= w;
        }
        if next.iter().any(|x| !x.is_finite()) {
            return Verdict::Infeasible;
        }
        let size = sup_norm(&next);
        if iteration == 0 {
            guard = opts.guard * size;
        }
        // model evaluations lose all accuracy long before overflow
        if size > PROBE_CEILING {
            return Verdict::Infeasible;
        }
        let diff = p.iter().zip(&next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if diff <= opts.iteration.tol * size {
            return Verdict::Feasible;
        }
        if size > guard {
            let ratio = next.iter().zip(&p).map(|(a, b)| a / b).fold(f64::INFINITY, f64::min);
            if ratio >= opts.growth {
                streak += 1;
                if streak >= opts.window {
                    return Verdict::Infeasible;
                }
            } else {
                streak = 0;
            }
        }
        core::mem::swap(&mut p, &mut next);
    }
    Verdict::Undecided
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralIndex {
    /// Verdict for the unscaled targets.
    pub verdict: Verdict,
    /// Estimate of `C(Γ)` as the reciprocal of the boundary scaling.
    pub value: f64,
    /// Scalings of `Γ` last known feasible and infeasible.
    pub bracket: (f64, f64),
}

/// `C(Γ)` for a general model: a verdict from the iteration itself and a
/// value from geometric bisection on the scaling `s` of `Γ`.
pub fn c_gamma_general<M: InterferenceFunction + ?Sized>(
    model: &M,
    targets: &SirTargets,
    opts: &ProbeOptions,
) -> Result<GeneralIndex> {
    targets.check_users(model.users())?;
    let gamma = targets.gamma();
    let verdict_at = |s: f64| {
        let w: Vec<f64> = gamma.iter().map(|g| g * s).collect();
        probe_feasibility(model, &w, opts)
    };
    let verdict = verdict_at(1.0);
    let (mut lo, mut hi) = match verdict {
        Verdict::Undecided => {
            return Ok(GeneralIndex {
                verdict,
                value: 1.0,
                bracket: (1.0, 1.0),
            })
        }
        Verdict::Feasible => {
            let mut lo = 1.0;
            loop {
                let s = lo * 2.0;
                match verdict_at(s) {
                    Verdict::Feasible if s < 1e30 => lo = s,
                    // every scaling feasible: no coupling worth measuring
                    Verdict::Feasible => {
                        return Ok(GeneralIndex {
                            verdict,
                            value: 0.0,
                            bracket: (lo, f64::INFINITY),
                        })
                    }
                    Verdict::Infeasible => break (lo, s),
                    Verdict::Undecided => {
                        return Ok(GeneralIndex {
                            verdict,
                            value: 1.0 / s,
                            bracket: (lo, s),
                        })
                    }
                }
            }
        }
        Verdict::Infeasible => {
            let mut hi = 1.0;
            loop {
                let s = hi * 0.5;
                if s < 1e-30 {
                    return Err(Error::Bracket);
                }
                match verdict_at(s) {
                    Verdict::Infeasible => hi = s,
                    Verdict::Feasible => break (s, hi),
                    Verdict::Undecided => {
                        return Ok(GeneralIndex {
                            verdict,
                            value: 1.0 / s,
                            bracket: (s, hi),
                        })
                    }
                }
            }
        }
    };
    for _ in 0..opts.bisection_steps {
        let mid = libm::sqrt(lo * hi);
        match verdict_at(mid) {
            Verdict::Feasible => lo = mid,
            Verdict::Infeasible => hi = mid,
            Verdict::Undecided => break,
        }
    }
    Ok(GeneralIndex {
        verdict,
        value: 1.0 / libm::sqrt(lo * hi),
        bracket: (lo, hi),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedIndex {
    /// `C(Γ; 𝒫)`.
    pub value: f64,
    /// A minimizer `p′` of the box-constrained index: the capped fixed
    /// point at the boundary scaling.
    pub minimizer: PowerVector,
}

/// Whether `p -> min{w ∘ I(p), p̂}` has a fixed point that meets the
/// weighted targets.
fn capped_feasible<M: InterferenceFunction + ?Sized>(
    model: &M,
    weights: &[f64],
    caps: &[f64],
    opts: &IterationOptions,
) -> Result<(bool, PowerVector)> {
    let k = model.users();
    let q = weighted_fixed_point(model, weights, Some(caps), &vec![0.0; k], opts)?;
    let mut iq = vec![0.0; k];
    model.evaluate_into(&q, &mut iq);
    let ok = (0..k).all(|i| q[i] >= weights[i] * iq[i] * (1.0 - 1e-11));
    Ok((ok, q))
}

/// `C(Γ; 𝒫)` by bisection on the scaling of `Γ`, deciding each probe at
/// the capped fixed point. `tol` is the relative width of the final bracket.
pub fn c_gamma_constrained<M: InterferenceFunction + ?Sized>(
    model: &M,
    targets: &SirTargets,
    constraints: &PowerConstraints,
    tol: f64,
) -> Result<ConstrainedIndex> {
    let k = model.users();
    targets.check_users(k)?;
    constraints.check_users(k)?;
    if !(tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    let caps = constraints.caps();
    let gamma = targets.gamma();
    let opts = IterationOptions {
        tol: (tol * 1e-3).min(1e-13),
        ..IterationOptions::default()
    };
    let scaled = |s: f64| -> Vec<f64> { gamma.iter().map(|g| g * s).collect() };
    // the caps themselves certify the scaling 1/u
    let mut ip = vec![0.0; k];
    model.evaluate_into(caps, &mut ip);
    let upper = (0..k).map(|i| gamma[i] * ip[i] / caps[i]).fold(0.0, f64::max);
    if !(upper.is_finite() && upper > 0.0) {
        return Err(Error::Bracket);
    }
    let mut lo = 1.0 / upper;
    let mut hi = lo * 2.0;
    let mut best = capped_feasible(model, &scaled(lo), caps, &opts)?.1;
    let mut doublings = 0;
    loop {
        let (ok, q) = capped_feasible(model, &scaled(hi), caps, &opts)?;
        if !ok {
            break;
        }
        lo = hi;
        best = q;
        hi *= 2.0;
        doublings += 1;
        if doublings > 100 {
            return Err(Error::Bracket);
        }
    }
    while hi / lo - 1.0 > tol {
        let mid = libm::sqrt(lo * hi);
        let (ok, q) = capped_feasible(model, &scaled(mid), caps, &opts)?;
        if ok {
            lo = mid;
            best = q;
        } else {
            hi = mid;
        }
    }
    Ok(ConstrainedIndex {
        value: 1.0 / lo,
        minimizer: best,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `C(Γ) < C(δΓ) < 1`: every user can be admitted with margin.
    C1,
    /// `C(Γ) < 1 ≤ C(δΓ)`.
    C2,
    /// `C(Γ) ≥ 1`.
    C3,
    #[serde(rename = "undecided")]
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstrainedRegime {
    #[serde(rename = "C1'")]
    C1,
    #[serde(rename = "C2'")]
    C2,
    #[serde(rename = "C3'")]
    C3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexMethod {
    /// Exact spectral radius of the weighted gain matrix.
    Spectral,
    /// Estimated by bisection on the target scaling; an approximation.
    Bisection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub method: IndexMethod,
    /// `C(Γ)`; for bisection estimates this is the boundary estimate.
    pub c_gamma: f64,
    pub c_delta_gamma: f64,
    pub regime: Regime,
    pub c_gamma_constrained: Option<f64>,
    pub c_delta_gamma_constrained: Option<f64>,
    pub constrained_regime: Option<ConstrainedRegime>,
    /// `p* = Γ I(p*)`.
    pub fixed_point: Option<PowerVector>,
    /// `p̄ = δΓ I(p̄)`.
    pub protected_fixed_point: Option<PowerVector>,
    /// `p° = δΓ I(p°) ≤ p̂`.
    pub p_circle: Option<PowerVector>,
    /// `p′`, minimizer of the box-constrained index.
    pub min_power: Option<PowerVector>,
}

fn below_one(c: f64) -> bool {
    c < 1.0 - BOUNDARY_TIE
}

/// Computes the indices, regimes and characteristic power vectors.
pub fn classify<M: InterferenceFunction + ?Sized>(
    model: &M,
    targets: &SirTargets,
    constraints: Option<&PowerConstraints>,
    opts: &ProbeOptions,
) -> Result<FeasibilityReport> {
    let k = model.users();
    targets.check_users(k)?;
    let delta = targets.delta();
    let (method, c_gamma, regime) = match model.as_affine() {
        Some(affine) => {
            let c = c_gamma_affine(affine, targets)?;
            let regime = if below_one(delta * c) {
                Regime::C1
            } else if below_one(c) {
                Regime::C2
            } else {
                Regime::C3
            };
            (IndexMethod::Spectral, c, regime)
        }
        None => {
            let index = c_gamma_general(model, targets, opts)?;
            let regime = match index.verdict {
                Verdict::Undecided => Regime::Undecided,
                Verdict::Infeasible => Regime::C3,
                Verdict::Feasible => match probe_feasibility(model, &targets.protected(), opts) {
                    Verdict::Feasible => Regime::C1,
                    Verdict::Infeasible => Regime::C2,
                    Verdict::Undecided => Regime::Undecided,
                },
            };
            (IndexMethod::Bisection, index.value, regime)
        }
    };
    let zeros = vec![0.0; k];
    let fixed_point = match regime {
        Regime::C1 | Regime::C2 => yates_fixed_point(model, targets, &zeros, &opts.iteration).ok(),
        _ => None,
    };
    let protected_fixed_point = match regime {
        Regime::C1 => weighted_fixed_point(model, &targets.protected(), None, &zeros, &opts.iteration).ok(),
        _ => None,
    };
    let mut report = FeasibilityReport {
        method,
        c_gamma,
        c_delta_gamma: delta * c_gamma,
        regime,
        c_gamma_constrained: None,
        c_delta_gamma_constrained: None,
        constrained_regime: None,
        fixed_point,
        protected_fixed_point,
        p_circle: None,
        min_power: None,
    };
    if let Some(constraints) = constraints {
        constraints.check_users(k)?;
        let index = c_gamma_constrained(model, targets, constraints, 1e-12)?;
        let c = index.value;
        let constrained = if below_one(delta * c) {
            ConstrainedRegime::C1
        } else if below_one(c) {
            ConstrainedRegime::C2
        } else {
            ConstrainedRegime::C3
        };
        if constrained == ConstrainedRegime::C1 {
            report.p_circle = Some(constrained_fixed_point(model, targets, constraints, &opts.iteration)?);
        }
        report.c_gamma_constrained = Some(c);
        report.c_delta_gamma_constrained = Some(delta * c);
        report.constrained_regime = Some(constrained);
        report.min_power = Some(index.minimizer);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric() -> AffineModel {
        AffineModel::from_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]], vec![1.0, 1.0]).unwrap()
    }

    fn targets(g: f64, delta: f64) -> SirTargets {
        SirTargets::common(2, g, delta).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * y.abs().max(1.0))
    }

    #[test]
    fn affine_index() {
        let m = symmetric();
        assert!((c_gamma_affine(&m, &targets(1.0, 1.5)).unwrap() - 0.5).abs() < 1e-13);
        assert!((c_gamma_affine(&m, &targets(3.0, 1.5)).unwrap() - 1.5).abs() < 1e-13);
        let zero = AffineModel::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]], vec![1.0, 1.0]).unwrap();
        assert_eq!(c_gamma_affine(&zero, &targets(1.0, 1.5)).unwrap(), 0.0);
    }

    #[test]
    fn reducible_matrix_radius() {
        // upper triangular blocks: radius is the larger block's
        let a = [
            0.0, 2.0, 5.0, 0.0, 2.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        ];
        let a: Vec<f64> = {
            let mut m = a.to_vec();
            m[3 * 4 + 2] = 9.0; // 2 <-> 3 with gain 1 * 9
            m[2 * 4 + 3] = 1.0;
            m
        };
        // block {0,1}: [[0,2],[2,0]] -> 2; block {2,3}: [[0,1],[9,0]] -> 3
        assert!((spectral_radius_nonneg(&a, 4) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_points() {
        let m = symmetric();
        let o = IterationOptions::default();
        let p = yates_fixed_point(&m, &targets(1.0, 1.5), &[0.0, 0.0], &o).unwrap();
        assert!(close(&p, &[2.0, 2.0], 1e-9));
        let p = yates_fixed_point(&m, &targets(1.0, 1.5), &[100.0, 1.0], &o).unwrap();
        assert!(close(&p, &[2.0, 2.0], 1e-9));
        let p = yates_fixed_point(&m, &targets(1.5, 1.5), &[0.0, 0.0], &o).unwrap();
        assert!(close(&p, &[6.0, 6.0], 1e-9));
        assert!(matches!(
            yates_fixed_point(&m, &targets(3.0, 1.5), &[1.0, 1.0], &o),
            Err(Error::Budget { .. })
        ));
    }

    #[test]
    fn capped_fixed_points() {
        let m = symmetric();
        let o = IterationOptions::default();
        let t = targets(1.0, 1.5);
        let p = constrained_fixed_point(&m, &t, &PowerConstraints::uniform(2, 8.0).unwrap(), &o).unwrap();
        assert!(close(&p, &[6.0, 6.0], 1e-9));
        let p = constrained_fixed_point(&m, &t, &PowerConstraints::uniform(2, 4.0).unwrap(), &o).unwrap();
        assert_eq!(&*p, &[4.0, 4.0]);
        let p = constrained_fixed_point(&m, &t, &PowerConstraints::uniform(2, 1e300).unwrap(), &o).unwrap();
        assert!(close(&p, &[6.0, 6.0], 1e-9));
    }

    #[test]
    fn general_index_matches_spectral() {
        let m = symmetric();
        let o = ProbeOptions::default();
        let g = c_gamma_general(&m, &targets(1.0, 1.5), &o).unwrap();
        assert_eq!(g.verdict, Verdict::Feasible);
        assert!((g.value - 0.5).abs() < 1e-3, "{g:?}");
        let g = c_gamma_general(&m, &targets(3.0, 1.5), &o).unwrap();
        assert_eq!(g.verdict, Verdict::Infeasible);
        assert!((g.value - 1.5).abs() < 1e-3, "{g:?}");
    }

    #[test]
    fn constrained_index() {
        let m = symmetric();
        let four = PowerConstraints::uniform(2, 4.0).unwrap();
        let eight = PowerConstraints::uniform(2, 8.0).unwrap();
        let c = c_gamma_constrained(&m, &targets(1.0, 1.5), &four, 1e-12).unwrap();
        assert!((c.value - 0.75).abs() < 1e-9, "{}", c.value);
        assert!(close(&c.minimizer, &[4.0, 4.0], 1e-9));
        let c = c_gamma_constrained(&m, &targets(1.5, 1.5), &four, 1e-12).unwrap();
        assert!((c.value - 1.125).abs() < 1e-9, "{}", c.value);
        let c = c_gamma_constrained(&m, &targets(1.5, 1.5), &eight, 1e-12).unwrap();
        assert!((c.value - 0.9375).abs() < 1e-9);
    }

    #[test]
    fn regimes() {
        let m = symmetric();
        let o = ProbeOptions::default();
        let r = classify(&m, &targets(1.0, 1.5), None, &o).unwrap();
        assert_eq!(r.regime, Regime::C1);
        assert!(close(r.protected_fixed_point.as_ref().unwrap(), &[6.0, 6.0], 1e-9));
        assert_eq!(classify(&m, &targets(1.0, 2.2), None, &o).unwrap().regime, Regime::C2);
        assert_eq!(classify(&m, &targets(3.0, 1.5), None, &o).unwrap().regime, Regime::C3);
        // exactly on the boundary counts as infeasible
        assert_eq!(classify(&m, &targets(1.0, 2.0), None, &o).unwrap().regime, Regime::C2);

        let eight = PowerConstraints::uniform(2, 8.0).unwrap();
        let r = classify(&m, &targets(1.0, 1.5), Some(&eight), &o).unwrap();
        assert_eq!(r.constrained_regime, Some(ConstrainedRegime::C1));
        assert!(close(r.p_circle.as_ref().unwrap(), &[6.0, 6.0], 1e-9));
        let four = PowerConstraints::uniform(2, 4.0).unwrap();
        let r = classify(&m, &targets(1.0, 1.5), Some(&four), &o).unwrap();
        assert_eq!(r.constrained_regime, Some(ConstrainedRegime::C2));
        let r = classify(&m, &targets(3.0, 1.5), Some(&four), &o).unwrap();
        assert_eq!(r.constrained_regime, Some(ConstrainedRegime::C3));
    }
}
