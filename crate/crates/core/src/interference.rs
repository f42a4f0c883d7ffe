//! Interference functions and their concrete instances.
//!
//! A model maps a power vector `p` to the per-user interference `I(p)`. The
//! SIR of user `k` is `p_k / I_k(p)`; weighting by the targets gives the
//! map `p -> (γ_k I_k(p))_k` that every iteration in this crate works with.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, CMatrix, CVector};

/// A per-user interference map.
///
/// Implementors are expected (but not required) to be *standard*: positive,
/// strictly sub-homogeneous and monotone. [`check_axioms`] probes those
/// properties; iterations in this crate rely on them for their guarantees.
pub trait InterferenceFunction {
    fn users(&self) -> usize;

    /// `I_k(p)`. Callers guarantee `p.len() == self.users()`.
    fn interference(&self, k: usize, p: &[f64]) -> f64;

    fn evaluate_into(&self, p: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.interference(k, p);
        }
    }

    /// Downcast hook used by routines that have a closed form for affine
    /// interference.
    fn as_affine(&self) -> Option<&AffineModel> {
        None
    }
}

impl<M: InterferenceFunction + ?Sized> InterferenceFunction for &M {
    fn users(&self) -> usize {
        (**self).users()
    }
    fn interference(&self, k: usize, p: &[f64]) -> f64 {
        (**self).interference(k, p)
    }
    fn evaluate_into(&self, p: &[f64], out: &mut [f64]) {
        (**self).evaluate_into(p, out)
    }
    fn as_affine(&self) -> Option<&AffineModel> {
        (**self).as_affine()
    }
}

impl<M: InterferenceFunction + ?Sized> InterferenceFunction for Box<M> {
    fn users(&self) -> usize {
        (**self).users()
    }
    fn interference(&self, k: usize, p: &[f64]) -> f64 {
        (**self).interference(k, p)
    }
    fn evaluate_into(&self, p: &[f64], out: &mut [f64]) {
        (**self).evaluate_into(p, out)
    }
    fn as_affine(&self) -> Option<&AffineModel> {
        (**self).as_affine()
    }
}

pub(crate) fn check_powers(users: usize, p: &[f64]) -> Result<()> {
    if p.len() != users {
        return Err(Error::DimensionMismatch {
            expected: users,
            found: p.len(),
        });
    }
    for (index, &x) in p.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonFinite { index });
        }
        if x < 0.0 {
            return Err(Error::NegativePower { index });
        }
    }
    Ok(())
}

/// Unchecked evaluation for internal loops.
pub(crate) fn eval<M: InterferenceFunction + ?Sized>(model: &M, p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; model.users()];
    model.evaluate_into(p, &mut out);
    out
}

/// `I(p)` with input validation.
pub fn evaluate<M: InterferenceFunction + ?Sized>(model: &M, p: &[f64]) -> Result<Vec<f64>> {
    check_powers(model.users(), p)?;
    Ok(eval(model, p))
}

/// `Γ I(p)`, the target-weighted interference.
pub fn evaluate_weighted<M: InterferenceFunction + ?Sized>(
    model: &M,
    targets: &SirTargets,
    p: &[f64],
) -> Result<Vec<f64>> {
    targets.check_users(model.users())?;
    let mut out = evaluate(model, p)?;
    for (o, g) in out.iter_mut().zip(&targets.gamma) {
        *o *= g;
    }
    Ok(out)
}

/// SIR of every user, `p_k / I_k(p)`.
pub fn sirs<M: InterferenceFunction + ?Sized>(model: &M, p: &[f64]) -> Result<Vec<f64>> {
    let i = evaluate(model, p)?;
    Ok(p.iter().zip(&i).map(|(p, i)| p / i).collect())
}

/// Nonnegative transmit powers, one per user.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PowerVector(Vec<f64>);

impl PowerVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_powers(values.len(), &values)?;
        Ok(Self(values))
    }

    pub fn zeros(users: usize) -> Self {
        Self(vec![0.0; users])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for PowerVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for PowerVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PowerVector> for Vec<f64> {
    fn from(p: PowerVector) -> Self {
        p.0
    }
}

/// Per-user SIR targets `γ` and the protection margin `δ > 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTargets")]
pub struct SirTargets {
    gamma: Vec<f64>,
    delta: f64,
}

#[derive(Deserialize)]
struct RawTargets {
    gamma: Vec<f64>,
    delta: f64,
}

impl TryFrom<RawTargets> for SirTargets {
    type Error = Error;
    fn try_from(raw: RawTargets) -> Result<Self> {
        Self::new(raw.gamma, raw.delta)
    }
}

impl SirTargets {
    pub fn new(gamma: Vec<f64>, delta: f64) -> Result<Self> {
        if gamma.is_empty() {
            return Err(invalid("gamma", "no users"));
        }
        if gamma.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(invalid("gamma", "targets must be finite and positive"));
        }
        if !(delta.is_finite() && delta > 1.0) {
            return Err(invalid("delta", "protection margin must exceed 1"));
        }
        Ok(Self { gamma, delta })
    }

    pub fn common(users: usize, gamma: f64, delta: f64) -> Result<Self> {
        Self::new(vec![gamma; users], delta)
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn users(&self) -> usize {
        self.gamma.len()
    }

    /// Same targets with a different margin.
    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(self.gamma.clone(), delta)
    }

    /// Targets scaled by `s`, margin unchanged.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.gamma.iter().map(|g| g * s).collect(), self.delta)
    }

    /// `δγ`, the targets active users aim for.
    pub fn protected(&self) -> Vec<f64> {
        self.gamma.iter().map(|g| g * self.delta).collect()
    }

    pub fn check_users(&self, users: usize) -> Result<()> {
        if self.gamma.len() != users {
            return Err(Error::DimensionMismatch {
                expected: users,
                found: self.gamma.len(),
            });
        }
        Ok(())
    }
}

/// `I(p) = V p + z` with a nonnegative, zero-diagonal gain matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffineModel {
    users: usize,
    gains: Vec<f64>,
    noise: Vec<f64>,
}

impl AffineModel {
    /// `gains` is row-major, `users × users`.
    pub fn new(gains: Vec<f64>, noise: Vec<f64>) -> Result<Self> {
        let users = noise.len();
        if users == 0 {
            return Err(invalid("noise", "no users"));
        }
        if gains.len() != users * users {
            return Err(Error::DimensionMismatch {
                expected: users * users,
                found: gains.len(),
            });
        }
        if let Some(index) = gains.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if gains.iter().any(|v| *v < 0.0) {
            return Err(invalid("gain matrix", "entries must be nonnegative"));
        }
        if (0..users).any(|k| gains[k * users + k] != 0.0) {
            return Err(invalid("gain matrix", "diagonal must be zero"));
        }
        if noise.iter().any(|z| !(z.is_finite() && *z > 0.0)) {
            return Err(invalid("noise", "must be finite and positive"));
        }
        Ok(Self { users, gains, noise })
    }

    pub fn from_rows(rows: &[Vec<f64>], noise: Vec<f64>) -> Result<Self> {
        if rows.iter().any(|r| r.len() != rows.len()) {
            return Err(invalid("gain matrix", "must be square"));
        }
        Self::new(rows.concat(), noise)
    }

    #[inline]
    pub fn gain(&self, k: usize, l: usize) -> f64 {
        self.gains[k * self.users + l]
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }
}

impl InterferenceFunction for AffineModel {
    fn users(&self) -> usize {
        self.users
    }

    fn interference(&self, k: usize, p: &[f64]) -> f64 {
        let row = &self.gains[k * self.users..(k + 1) * self.users];
        row.iter().zip(p).map(|(v, p)| v * p).sum::<f64>() + self.noise[k]
    }

    fn as_affine(&self) -> Option<&AffineModel> {
        Some(self)
    }
}

/// Receive strategies a [`MinStrategyModel`] minimizes over.
#[derive(Debug, Clone, PartialEq)]
pub enum ReceiveSet {
    /// The whole unit sphere, minimized in closed form.
    Sphere,
    /// A finite set of unit-norm candidates, minimized by enumeration.
    Finite(Vec<CVector>),
}

#[derive(Debug, Clone, PartialEq)]
struct UserSpan {
    // orthonormal basis of the interferers' span
    basis: Vec<CVector>,
    // coordinates of the desired channel in `basis`
    signal: CVector,
    // energy of the desired channel outside the span
    perp: f64,
    // the part of the desired channel outside the span
    perp_part: CVector,
    // coordinates of every interferer in `basis` (empty for l == k)
    cross: Vec<CVector>,
}

/// Interference seen by an optimally adapted linear receiver.
///
/// Receiver `k` observes transmitter `l` through the vector `g_kl` and picks
/// a unit-norm `u` to minimize
/// `ρ_k(p, u) = (Σ_{l≠k} p_l |u^H g_kl|² + σ_k²) / |u^H g_kk|²`.
/// On the full sphere the minimum is `1 / (g_kk^H R_k(p)^{-1} g_kk)` with
/// `R_k(p) = Σ_{l≠k} p_l g_kl g_kl^H + σ_k² I`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinStrategyModel {
    users: usize,
    dim: usize,
    channels: Vec<CVector>,
    noise: Vec<f64>,
    receive: ReceiveSet,
    spans: Vec<UserSpan>,
}

impl MinStrategyModel {
    /// `channels[k][l]` is `g_kl`, the effective channel from transmitter
    /// `l` to receiver `k`.
    pub fn new(channels: Vec<Vec<CVector>>, noise: Vec<f64>) -> Result<Self> {
        let users = channels.len();
        if users == 0 {
            return Err(invalid("channels", "no users"));
        }
        if noise.len() != users {
            return Err(Error::DimensionMismatch {
                expected: users,
                found: noise.len(),
            });
        }
        if noise.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(invalid("noise", "must be finite and positive"));
        }
        let dim = channels[0].first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(invalid("channels", "empty receive space"));
        }
        let mut flat = Vec::with_capacity(users * users);
        for (k, row) in channels.into_iter().enumerate() {
            if row.len() != users {
                return Err(Error::DimensionMismatch {
                    expected: users,
                    found: row.len(),
                });
            }
            for (l, g) in row.into_iter().enumerate() {
                if g.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: g.len(),
                    });
                }
                if g.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(Error::NonFinite { index: k * users + l });
                }
                flat.push(g);
            }
        }
        for k in 0..users {
            if linalg::norm_sqr(&flat[k * users + k]) == 0.0 {
                return Err(Error::DegenerateBeam { user: k });
            }
        }
        let spans = (0..users).map(|k| Self::span(&flat, users, k)).collect();
        Ok(Self {
            users,
            dim,
            channels: flat,
            noise,
            receive: ReceiveSet::Sphere,
            spans,
        })
    }

    /// Every receiver sees transmitter `l` through the same `signatures[l]`.
    pub fn shared(signatures: Vec<CVector>, noise: Vec<f64>) -> Result<Self> {
        let rows = (0..signatures.len()).map(|_| signatures.clone()).collect();
        Self::new(rows, noise)
    }

    /// Replaces closed-form minimization with enumeration over `grid`.
    pub fn with_receive_set(mut self, receive: ReceiveSet) -> Result<Self> {
        if let ReceiveSet::Finite(grid) = &receive {
            if grid.is_empty() {
                return Err(invalid("receive set", "empty grid"));
            }
            for u in grid {
                if u.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        found: u.len(),
                    });
                }
                if (linalg::norm(u) - 1.0).abs() > 1e-12 {
                    return Err(invalid("receive set", "candidates must be unit norm"));
                }
            }
        }
        self.receive = receive;
        Ok(self)
    }

    fn span(channels: &[CVector], users: usize, k: usize) -> UserSpan {
        let g = &channels[k * users + k];
        let basis = linalg::orthonormal_basis(
            (0..users)
                .filter(|&l| l != k)
                .map(|l| channels[k * users + l].as_slice()),
            1e-12,
        );
        let signal: CVector = basis.iter().map(|q| linalg::dot(q, g)).collect();
        let mut perp_part = g.clone();
        for (q, a) in basis.iter().zip(&signal) {
            for (x, qi) in perp_part.iter_mut().zip(q) {
                *x -= a * qi;
            }
        }
        // a residual at rounding level is an artifact, and would otherwise
        // pose as an interference-free direction once powers are large
        if basis.len() == g.len() || linalg::norm(&perp_part) <= 1e-12 * linalg::norm(g) {
            perp_part.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
        }
        let perp = linalg::norm_sqr(&perp_part);
        let cross = (0..users)
            .map(|l| {
                if l == k {
                    Vec::new()
                } else {
                    let h = &channels[k * users + l];
                    basis.iter().map(|q| linalg::dot(q, h)).collect()
                }
            })
            .collect();
        UserSpan {
            basis,
            signal,
            perp,
            perp_part,
            cross,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    pub fn channel(&self, k: usize, l: usize) -> &[Complex64] {
        &self.channels[k * self.users + l]
    }

    pub fn receive_set(&self) -> &ReceiveSet {
        &self.receive
    }

    /// `ρ_k(p, u)` for a particular receive vector `u` (any nonzero norm;
    /// the noise term scales with `‖u‖²`).
    pub fn rho(&self, k: usize, p: &[f64], u: &[Complex64]) -> f64 {
        let signal = linalg::dot(u, self.channel(k, k)).norm_sqr();
        let mut num = self.noise[k] * linalg::norm_sqr(u);
        for (l, &pl) in p.iter().enumerate() {
            if l != k && pl != 0.0 {
                num += pl * linalg::dot(u, self.channel(k, l)).norm_sqr();
            }
        }
        if signal == 0.0 {
            f64::INFINITY
        } else {
            num / signal
        }
    }

    // S = Σ p_l b_l b_l^H + σ² I restricted to the interferers' span, and
    // its inverse applied to the signal coordinates.
    fn span_solve(&self, k: usize, p: &[f64]) -> Option<CVector> {
        let span = &self.spans[k];
        let r = span.basis.len();
        if r == 0 {
            return Some(Vec::new());
        }
        let sigma = self.noise[k];
        let mut s = CMatrix::identity(r).scale(sigma);
        for (l, b) in span.cross.iter().enumerate() {
            if l == k || p[l] == 0.0 {
                continue;
            }
            for i in 0..r {
                for j in 0..r {
                    let v = s.get(i, j) + b[i] * b[j].conj() * p[l];
                    s.set(i, j, v);
                }
            }
        }
        linalg::cholesky_solve(&s, &span.signal)
    }

    fn closed_form(&self, k: usize, p: &[f64]) -> f64 {
        let span = &self.spans[k];
        let sigma = self.noise[k];
        let in_span = self
            .span_solve(k, p)
            .map_or(0.0, |x| linalg::dot(&span.signal, &x).re.max(0.0));
        1.0 / (in_span + span.perp / sigma)
    }

    /// The sphere minimizer of `ρ_k(p, ·)`, unit norm with its largest entry
    /// real and positive.
    pub fn optimal_receiver(&self, k: usize, p: &[f64]) -> CVector {
        let span = &self.spans[k];
        let sigma = self.noise[k];
        let coords = self
            .span_solve(k, p)
            .unwrap_or_else(|| vec![Complex64::new(0.0, 0.0); span.basis.len()]);
        let mut u: CVector = span.perp_part.iter().map(|z| z / sigma).collect();
        for (q, c) in span.basis.iter().zip(&coords) {
            for (x, qi) in u.iter_mut().zip(q) {
                *x += c * qi;
            }
        }
        let mut u = linalg::normalized(&u).unwrap_or_else(|| linalg::normalized(self.channel(k, k)).unwrap_or(u));
        linalg::fix_phase(&mut u);
        u
    }
}

impl InterferenceFunction for MinStrategyModel {
    fn users(&self) -> usize {
        self.users
    }

    fn interference(&self, k: usize, p: &[f64]) -> f64 {
        match &self.receive {
            ReceiveSet::Sphere => self.closed_form(k, p),
            ReceiveSet::Finite(grid) => grid.iter().map(|u| self.rho(k, p, u)).fold(f64::INFINITY, f64::min),
        }
    }
}

/// Pointwise maximum over a finite family of interference functions.
pub struct WorstCaseModel {
    users: usize,
    members: Vec<Box<dyn InterferenceFunction + Send + Sync>>,
}

impl core::fmt::Debug for WorstCaseModel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("WorstCaseModel")
            .field("users", &self.users)
            .field("members", &self.members.len())
            .finish()
    }
}

impl WorstCaseModel {
    pub fn new(members: Vec<Box<dyn InterferenceFunction + Send + Sync>>) -> Result<Self> {
        let users = members.first().ok_or(invalid("uncertainty set", "empty"))?.users();
        if let Some(m) = members.iter().find(|m| m.users() != users) {
            return Err(Error::DimensionMismatch {
                expected: users,
                found: m.users(),
            });
        }
        Ok(Self { users, members })
    }

    pub fn members(&self) -> &[Box<dyn InterferenceFunction + Send + Sync>] {
        &self.members
    }
}

impl InterferenceFunction for WorstCaseModel {
    fn users(&self) -> usize {
        self.users
    }

    fn interference(&self, k: usize, p: &[f64]) -> f64 {
        self.members
            .iter()
            .map(|m| m.interference(k, p))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `p -> (w_k I_k(p))_k`.
#[derive(Debug, Clone)]
pub struct Weighted<M> {
    inner: M,
    weights: Vec<f64>,
}

impl<M: InterferenceFunction> Weighted<M> {
    pub fn new(inner: M, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != inner.users() {
            return Err(Error::DimensionMismatch {
                expected: inner.users(),
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(invalid("weights", "must be finite and positive"));
        }
        Ok(Self { inner, weights })
    }

    /// `Γ I`, the map whose fixed points meet the targets with equality.
    pub fn targets(inner: M, targets: &SirTargets) -> Result<Self> {
        Self::new(inner, targets.gamma().to_vec())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }
}

impl<M: InterferenceFunction> InterferenceFunction for Weighted<M> {
    fn users(&self) -> usize {
        self.inner.users()
    }

    fn interference(&self, k: usize, p: &[f64]) -> f64 {
        self.weights[k] * self.inner.interference(k, p)
    }

    fn evaluate_into(&self, p: &[f64], out: &mut [f64]) {
        self.inner.evaluate_into(p, out);
        for (o, w) in out.iter_mut().zip(&self.weights) {
            *o *= w;
        }
    }
}

/// Estimates `J(p) = lim_{c→∞} I(cp)/c` by probing a geometric schedule.
#[derive(Debug, Clone)]
pub struct AsymptoticModel<M> {
    base: M,
    schedule: Vec<f64>,
    tol: f64,
}

impl<M: InterferenceFunction> AsymptoticModel<M> {
    /// Probes `c = 10^0, 10^1, …, 10^12` with relative tolerance `1e-8`.
    pub fn new(base: M) -> Self {
        let schedule = (0..=12).map(|e| libm::pow(10.0, f64::from(e))).collect();
        Self {
            base,
            schedule,
            tol: 1e-8,
        }
    }

    pub fn with_schedule(mut self, schedule: Vec<f64>) -> Result<Self> {
        if schedule.is_empty()
            || schedule.iter().any(|c| !(c.is_finite() && *c > 0.0))
            || schedule.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(invalid("probe schedule", "must be positive and increasing"));
        }
        self.schedule = schedule;
        Ok(self)
    }

    pub fn with_tol(mut self, tol: f64) -> Result<Self> {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(invalid("tol", "must be positive"));
        }
        self.tol = tol;
        Ok(self)
    }

    pub fn base(&self) -> &M {
        &self.base
    }

    /// Runs the probe schedule at `p`.
    pub fn limit(&self, p: &[f64]) -> Result<Vec<f64>> {
        check_powers(self.base.users(), p)?;
        let k = self.base.users();
        let mut scaled = vec![0.0; k];
        let mut current = vec![0.0; k];
        let mut previous: Option<Vec<f64>> = None;
        for &c in &self.schedule {
            for (s, x) in scaled.iter_mut().zip(p) {
                *s = c * x;
            }
            self.base.evaluate_into(&scaled, &mut current);
            for v in current.iter_mut() {
                *v /= c;
            }
            if let Some(prev) = &previous {
                let scale = prev.iter().chain(current.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
                let scale = scale.max(p.iter().fold(0.0f64, |m, v| m.max(*v)));
                // the estimates may only shrink as c grows
                if current
                    .iter()
                    .zip(prev)
                    .any(|(cur, old)| *cur > *old + 1e-12 * scale.max(1e-300))
                {
                    return Err(Error::NotMonotone { scale: c });
                }
                let change = current.iter().zip(prev).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                if change <= self.tol * scale {
                    return Ok(current);
                }
            }
            previous = Some(current.clone());
        }
        Err(Error::Budget {
            iterations: self.schedule.len(),
            last: current,
        })
    }
}

/// `J(p)` estimated with tolerance `tol` on the default schedule.
pub fn asymptotic_limit<M: InterferenceFunction>(model: M, p: &[f64], tol: f64) -> Result<Vec<f64>> {
    AsymptoticModel::new(model).with_tol(tol)?.limit(p)
}

impl<M: InterferenceFunction> InterferenceFunction for AsymptoticModel<M> {
    fn users(&self) -> usize {
        self.base.users()
    }

    fn interference(&self, k: usize, p: &[f64]) -> f64 {
        let mut out = vec![0.0; self.users()];
        self.evaluate_into(p, &mut out);
        out[k]
    }

    /// Falls back to the estimate at the largest probe when the schedule
    /// does not settle.
    fn evaluate_into(&self, p: &[f64], out: &mut [f64]) {
        match self.limit(p) {
            Ok(v) | Err(Error::Budget { last: v, .. }) => out.copy_from_slice(&v),
            Err(_) => {
                let c = self.schedule[self.schedule.len() - 1];
                let scaled: Vec<f64> = p.iter().map(|x| c * x).collect();
                self.base.evaluate_into(&scaled, out);
                for v in out.iter_mut() {
                    *v /= c;
                }
            }
        }
    }
}

/// A model over the active users only, with inactive powers pinned.
#[derive(Debug, Clone)]
pub struct RestrictedModel<M> {
    inner: M,
    active: Vec<usize>,
    inactive: Vec<usize>,
    fixed: Vec<f64>,
}

impl<M: InterferenceFunction> RestrictedModel<M> {
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn inactive(&self) -> &[usize] {
        &self.inactive
    }

    /// Assembles the full power vector from active powers.
    pub fn embed(&self, active_powers: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.inner.users()];
        for (&i, &x) in self.active.iter().zip(active_powers) {
            full[i] = x;
        }
        for (&i, &x) in self.inactive.iter().zip(&self.fixed) {
            full[i] = x;
        }
        full
    }
}

/// `p_a -> J_a((p_a, λ))`: the model seen by the active users when the
/// inactive users' powers are held at `lambda` (listed in increasing user
/// order of the complement of `active`).
pub fn restrict_active<M: InterferenceFunction>(
    inner: M,
    active: &[usize],
    lambda: &[f64],
) -> Result<RestrictedModel<M>> {
    let k = inner.users();
    let mut is_active = vec![false; k];
    for &a in active {
        if a >= k {
            return Err(invalid("active set", "user index out of range"));
        }
        if is_active[a] {
            return Err(invalid("active set", "duplicate user"));
        }
        is_active[a] = true;
    }
    let inactive: Vec<usize> = (0..k).filter(|&i| !is_active[i]).collect();
    if lambda.len() != inactive.len() {
        return Err(Error::DimensionMismatch {
            expected: inactive.len(),
            found: lambda.len(),
        });
    }
    if lambda.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(invalid("inactive powers", "must be strictly positive"));
    }
    let mut active = active.to_vec();
    active.sort_unstable();
    Ok(RestrictedModel {
        inner,
        active,
        inactive,
        fixed: lambda.to_vec(),
    })
}

impl<M: InterferenceFunction> InterferenceFunction for RestrictedModel<M> {
    fn users(&self) -> usize {
        self.active.len()
    }

    fn interference(&self, k: usize, p: &[f64]) -> f64 {
        self.inner.interference(self.active[k], &self.embed(p))
    }

    fn evaluate_into(&self, p: &[f64], out: &mut [f64]) {
        let full = eval(&self.inner, &self.embed(p));
        for (o, &i) in out.iter_mut().zip(&self.active) {
            *o = full[i];
        }
    }
}

/// Sampling plan for [`check_axioms`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomCheck {
    pub trials: usize,
    pub scales: Vec<f64>,
    /// Powers are drawn log-uniformly from this range.
    pub power_range: (f64, f64),
    /// Relative slack on strict inequalities, applied as
    /// `slack * max(1, |value|)`.
    pub slack: f64,
}

impl Default for AxiomCheck {
    fn default() -> Self {
        Self {
            trials: 200,
            scales: vec![1.0 + 1e-6, 1.5, 10.0],
            power_range: (1e-3, 1e3),
            slack: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axiom {
    Positivity,
    Scalability,
    Monotonicity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub axiom: Axiom,
    pub user: usize,
    pub powers: Vec<f64>,
    /// The dominated vector for monotonicity, or `[μ]` for scalability.
    pub other: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub positivity: bool,
    pub scalability: bool,
    pub monotonicity: bool,
    pub counterexample: Option<Counterexample>,
}

impl AxiomReport {
    pub fn all_pass(&self) -> bool {
        self.positivity && self.scalability && self.monotonicity
    }
}

fn sample_powers<R: Rng + ?Sized>(rng: &mut R, k: usize, range: (f64, f64)) -> Vec<f64> {
    let (lo, hi) = (libm::log(range.0), libm::log(range.1));
    (0..k).map(|_| libm::exp(rng.random_range(lo..=hi))).collect()
}

/// Randomized falsification of positivity, strict scalability and
/// monotonicity. The first counterexample found for each axiom flips its
/// flag; the report keeps the first one overall.
pub fn check_axioms<M, R>(model: &M, plan: &AxiomCheck, rng: &mut R) -> AxiomReport
where
    M: InterferenceFunction + ?Sized,
    R: Rng + ?Sized,
{
    let k = model.users();
    let mut report = AxiomReport {
        positivity: true,
        scalability: true,
        monotonicity: true,
        counterexample: None,
    };
    let fail = |report: &mut AxiomReport, ex: Counterexample| {
        match ex.axiom {
            Axiom::Positivity => report.positivity = false,
            Axiom::Scalability => report.scalability = false,
            Axiom::Monotonicity => report.monotonicity = false,
        }
        if report.counterexample.is_none() {
            report.counterexample = Some(ex);
        }
    };
    if k == 0 {
        return report;
    }
    let tol = |v: f64| plan.slack * v.abs().max(1.0);

    let zero = vec![0.0; k];
    if let Some(user) = eval(model, &zero).iter().position(|v| !(*v > 0.0)) {
        fail(
            &mut report,
            Counterexample {
                axiom: Axiom::Positivity,
                user,
                powers: zero,
                other: Vec::new(),
            },
        );
    }

    for _ in 0..plan.trials.max(1) {
        let p = sample_powers(rng, k, plan.power_range);
        let ip = eval(model, &p);
        if report.positivity {
            if let Some(user) = ip.iter().position(|v| !(*v > 0.0)) {
                fail(
                    &mut report,
                    Counterexample {
                        axiom: Axiom::Positivity,
                        user,
                        powers: p.clone(),
                        other: Vec::new(),
                    },
                );
            }
        }
        if report.scalability {
            for &mu in &plan.scales {
                let scaled: Vec<f64> = p.iter().map(|x| mu * x).collect();
                let i_scaled = eval(model, &scaled);
                let bad = (0..k).find(|&j| {
                    let bound = mu * ip[j];
                    !(bound - i_scaled[j] > tol(bound))
                });
                if let Some(user) = bad {
                    fail(
                        &mut report,
                        Counterexample {
                            axiom: Axiom::Scalability,
                            user,
                            powers: p.clone(),
                            other: vec![mu],
                        },
                    );
                    break;
                }
            }
        }
        if report.monotonicity {
            // a dominating vector: raise a random subset of coordinates
            let bump = sample_powers(rng, k, plan.power_range);
            let p1: Vec<f64> = p
                .iter()
                .zip(&bump)
                .map(|(x, b)| if rng.random_bool(0.5) { x + b } else { *x })
                .collect();
            let i1 = eval(model, &p1);
            if let Some(user) = (0..k).find(|&j| !(i1[j] >= ip[j] - tol(ip[j]))) {
                fail(
                    &mut report,
                    Counterexample {
                        axiom: Axiom::Monotonicity,
                        user,
                        powers: p1,
                        other: p,
                    },
                );
            }
        }
    }
    report
}
