//! Shape reconstruction from phaseless pair data: the intensity operator,
//! its shape derivative, Levenberg-Marquardt steps with an `H^s` penalty,
//! and the recursive sweep over ascending frequencies.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bie::{BieSystem, CMatrix};
use crate::error::{Error, Result};
use crate::geometry::{hs_weights, perturbation_field, BoundaryCurve, StarlikeCurve, RADIUS_FLOOR};
use crate::imaging::PeakSet;
use crate::medium::DirectionKind;
use crate::synth::{FrequencyBlock, PhaselessDataset};
use crate::{Medium, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonConfig {
    /// Sobolev index of the radial penalty.
    pub s: f64,
    /// Fourier order of the radial functions.
    pub order: usize,
    /// Target ratio of linearized to current residual.
    pub rho: f64,
    /// Discrepancy factor.
    pub tau: f64,
    /// Radius of the initial circles.
    pub r0: f64,
    pub max_iters_per_freq: usize,
    /// Boundary nodes per component in the inversion solves.
    pub nodes: usize,
    /// Noise level used for stopping when the data are noiseless.
    pub delta_floor: f64,
    /// Relative tolerance on the residual-ratio equation.
    pub ratio_tolerance: f64,
    /// Lower bound imposed on the radial functions after each step.
    pub radius_floor: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            s: 1.6,
            order: 25,
            rho: 0.935,
            tau: 1.45,
            r0: 0.35,
            max_iters_per_freq: 20,
            nodes: crate::bie::INVERSION_NODES,
            delta_floor: 1e-4,
            ratio_tolerance: 0.02,
            radius_floor: RADIUS_FLOOR,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if !(self.tau > 1.0) {
            return bad("tau must exceed 1");
        }
        if !(self.r0 > 0.0) || !(self.s >= 0.0) || !(self.delta_floor > 0.0) || !(self.ratio_tolerance > 0.0) {
            return bad("r0, delta_floor and ratio_tolerance must be positive, s nonnegative");
        }
        if self.nodes < 8 || self.nodes % 2 == 1 || self.max_iters_per_freq == 0 {
            return bad("nodes must be even and at least 8; iteration cap at least 1");
        }
        Ok(())
    }

    /// Diagonal penalty for one component: 1 for the center shift, the
    /// squared `H^s` weights for the radial coefficients.
    pub fn penalty(&self) -> Vec<f64> {
        let mut p = vec![1.0, 1.0];
        p.extend(hs_weights(self.order, self.s));
        p
    }
}

/// Forward solution for one obstacle configuration at one frequency, kept
/// for the derivative.
pub struct ForwardState {
    pub system: BieSystem,
    pub obs: Vec<f64>,
    /// Far fields of the pair superpositions, `pair_far[q][j]`.
    pub pair_far: Vec<Vec<Complex64>>,
    /// Total-field normal derivatives of the pair superpositions on the
    /// boundary nodes, one column per pair.
    pub pair_normal: CMatrix,
    far_op: CMatrix,
}

impl ForwardState {
    pub fn new(curves: &[&dyn BoundaryCurve<f64>], medium: &Medium, nodes: usize, block: &FrequencyBlock, n_f: usize) -> Result<Self> {
        let obs = medium.aperture_grid(DirectionKind::Observation, n_f);
        let system = BieSystem::assemble(curves, medium, nodes)?;
        let dens = system.densities(&block.incident)?;
        let far_op = system.far_field_operator(&obs)?;
        let single = &far_op * &dens;
        let psi = system.total_normal_derivative(&block.incident)?;
        let pair_far = block
            .pairs
            .iter()
            .map(|&[l, i]| (0..obs.len()).map(|j| single[(j, l)] + single[(j, i)]).collect())
            .collect();
        let pair_normal = CMatrix::from_fn(system.len(), block.pairs.len(), |r, q| {
            let [l, i] = block.pairs[q];
            psi[(r, l)] + psi[(r, i)]
        });
        Ok(Self { system, obs, pair_far, pair_normal, far_op })
    }

    /// `|u_inf|^2` for each pair.
    pub fn intensities(&self) -> Vec<Vec<f64>> {
        self.pair_far.iter().map(|u| u.iter().map(|v| v.norm_sqr()).collect()).collect()
    }

    /// Derivative of the intensities of pair `q` along boundary
    /// displacements with normal components `hn` (one column per
    /// direction): `2 Re(conj(u_inf) u'_inf)`, where `u'` solves the
    /// exterior problem with data `-(d u / d nu) (h . nu)`.
    pub fn derivative(&self, q: usize, hn: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.system.len();
        if hn.nrows() != n {
            return Err(Error::Layout(format!("{} normal components for {n} nodes", hn.nrows())));
        }
        let rhs = CMatrix::from_fn(n, hn.ncols(), |r, c| -self.pair_normal[(r, q)] * hn[(r, c)]);
        let far = &self.far_op * self.system.solve_many(&rhs)?;
        let u = &self.pair_far[q];
        Ok(DMatrix::from_fn(far.nrows(), far.ncols(), |j, c| 2.0 * (u[j].conj() * far[(j, c)]).re))
    }
}

/// Normal components of the displacement fields generated by each shape
/// parameter, `(a1, a2, c_0, ..., c_2M)` per component, on the nodes.
pub fn parameter_fields(curves: &[StarlikeCurve<f64>], nodes: usize) -> DMatrix<f64> {
    let thetas = crate::geometry::parameter_grid::<f64>(nodes);
    let per: Vec<usize> = curves.iter().map(|c| c.param_count() + 2).collect();
    let total: usize = per.iter().sum();
    let mut hn = DMatrix::zeros(nodes * curves.len(), total);
    let mut col0 = 0;
    for (k, curve) in curves.iter().enumerate() {
        let m = curve.param_count();
        for p in 0..m + 2 {
            let mut shift = [0.0; 2];
            let mut radial = vec![0.0; m];
            if p < 2 {
                shift[p] = 1.0;
            } else {
                radial[p - 2] = 1.0;
            }
            for (j, (_, v)) in perturbation_field(curve, shift, &radial, &thetas).into_iter().enumerate() {
                hn[(k * nodes + j, col0 + p)] = v;
            }
        }
        col0 += per[k];
    }
    hn
}

/// Stacked Jacobian: rows are pairs times observations, columns the shape
/// parameters of all components.
pub fn assemble_jacobian(state: &ForwardState, curves: &[StarlikeCurve<f64>], nodes: usize) -> Result<DMatrix<f64>> {
    let hn = parameter_fields(curves, nodes);
    let n_f = state.obs.len();
    let blocks = (0..state.pair_far.len()).map(|q| state.derivative(q, &hn)).collect::<Result<Vec<_>>>()?;
    let mut jac = DMatrix::zeros(n_f * blocks.len(), hn.ncols());
    for (q, b) in blocks.iter().enumerate() {
        jac.rows_mut(q * n_f, n_f).copy_from(b);
    }
    Ok(jac)
}

/// Linearized residual as a function of the regularization parameter,
/// in the spectral basis of the scaled Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResidual<T> {
    pub sigma: Vec<T>,
    /// Components of the residual along the left singular vectors.
    pub coeffs: Vec<T>,
    /// Squared norm of the residual part outside the range.
    pub perp_sq: T,
    pub total_sq: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaChoice<T> {
    pub beta: T,
    /// Achieved squared ratio of linearized to current residual.
    pub ratio: T,
    pub fallback: bool,
}

impl<T: Real> SpectralResidual<T> {
    /// Squared linearized residual over squared current residual.
    pub fn ratio(&self, beta: T) -> T {
        let inside = self.sigma.iter().zip(&self.coeffs).fold(T::zero(), |acc, (&s, &c)| {
            let f = beta / (s * s + beta);
            acc + f * f * c * c
        });
        (inside + self.perp_sq) / self.total_sq
    }

    /// Bisection in `log beta` for `ratio(beta) = target`. The ratio is
    /// increasing in `beta`; when the target is out of reach the nearest end
    /// of the bracket is returned as a fallback.
    pub fn select_beta(&self, target: T) -> BetaChoice<T> {
        let smax = self.sigma.iter().fold(T::zero(), |a, &s| a.max(s));
        let scale = if smax > T::zero() { smax * smax } else { T::one() };
        let mut lo = scale * T::lit(1e-12);
        let mut hi = scale * T::lit(1e12);
        while self.ratio(hi) < target && hi < scale * T::lit(1e300) {
            hi = hi * T::lit(1e6);
        }
        while self.ratio(lo) > target && lo > scale * T::lit(1e-300) {
            lo = lo * T::lit(1e-6);
        }
        let (rlo, rhi) = (self.ratio(lo), self.ratio(hi));
        if rlo > target || rhi < target {
            let beta = if rlo > target { lo } else { hi };
            return BetaChoice { beta, ratio: self.ratio(beta), fallback: true };
        }
        let (mut a, mut b) = (lo.ln(), hi.ln());
        for _ in 0..400 {
            let mid = T::lit(0.5) * (a + b);
            if self.ratio(mid.exp()) < target {
                a = mid;
            } else {
                b = mid;
            }
            if b - a <= T::epsilon() * T::lit(4.0) * a.abs().max(T::one()) {
                break;
            }
        }
        let beta = (T::lit(0.5) * (a + b)).exp();
        BetaChoice { beta, ratio: self.ratio(beta), fallback: false }
    }
}

#[derive(Debug, Clone)]
pub struct LmStep {
    pub delta: DVector<f64>,
    pub beta: f64,
    pub ratio: f64,
    pub fallback: bool,
}

/// Solves `min W |J d - r|^2 + beta d^T P d` with `beta` chosen so the
/// squared linearized residual is `rho^2` times `W |r|^2`.
pub fn lm_step(jac: &DMatrix<f64>, residual: &DVector<f64>, weight: f64, penalty: &[f64], rho: f64) -> Result<LmStep> {
    if jac.ncols() != penalty.len() || jac.nrows() != residual.len() {
        return Err(Error::Layout("Jacobian, residual and penalty sizes disagree".into()));
    }
    if penalty.iter().any(|&p| !(p > 0.0)) || !(weight > 0.0) {
        return Err(Error::InvalidParameter("penalty and data weights must be positive".into()));
    }
    let sw = weight.sqrt();
    let inv_sqrt_p: Vec<f64> = penalty.iter().map(|p| 1.0 / p.sqrt()).collect();
    let scaled = DMatrix::from_fn(jac.nrows(), jac.ncols(), |i, c| sw * jac[(i, c)] * inv_sqrt_p[c]);
    let r = residual * sw;
    let svd = scaled.svd(true, true);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let coeffs: Vec<f64> = (0..svd.singular_values.len()).map(|i| u.column(i).dot(&r)).collect();
    let total_sq = r.norm_squared();
    if total_sq == 0.0 {
        return Ok(LmStep { delta: DVector::zeros(jac.ncols()), beta: f64::INFINITY, ratio: 1.0, fallback: false });
    }
    let perp_sq = (total_sq - coeffs.iter().map(|c| c * c).sum::<f64>()).max(0.0);
    let spectral = SpectralResidual { sigma: svd.singular_values.iter().copied().collect(), coeffs, perp_sq, total_sq };
    let choice = spectral.select_beta(rho * rho);
    if choice.fallback {
        log::warn!("residual ratio {:.4} cannot reach {:.4}; using beta = {:e}", choice.ratio, rho * rho, choice.beta);
    }
    let mut dt = DVector::zeros(jac.ncols());
    for (i, (&s, &c)) in spectral.sigma.iter().zip(&spectral.coeffs).enumerate() {
        dt += v_t.row(i).transpose() * (s * c / (s * s + choice.beta));
    }
    let delta = DVector::from_fn(jac.ncols(), |c, _| dt[c] * inv_sqrt_p[c]);
    Ok(LmStep { delta, beta: choice.beta, ratio: choice.ratio, fallback: choice.fallback })
}

/// Mean over pairs of the relative misfit `|F - data| / |data|`.
pub fn relative_error(model: &[Vec<f64>], data: &[Vec<f64>]) -> Result<f64> {
    if model.len() != data.len() || model.is_empty() {
        return Err(Error::Layout("model and data pair counts differ".into()));
    }
    let mut sum = 0.0;
    for (m, d) in model.iter().zip(data) {
        if m.len() != d.len() {
            return Err(Error::Layout("model and data observation counts differ".into()));
        }
        let dn = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if dn == 0.0 {
            return Err(Error::InvalidParameter("data block has zero norm".into()));
        }
        sum += m.iter().zip(d).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / dn;
    }
    Ok(sum / model.len() as f64)
}

/// One line of the trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub block: usize,
    pub k_plus: f64,
    pub iteration: usize,
    /// Relative error after this iteration (before any step at 0).
    pub error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_sq: Option<f64>,
    pub fallback: bool,
    pub projected: bool,
    pub step_halvings: usize,
    /// Parameters `(a1, a2, c_0, ..., c_2M)` of every component, concatenated.
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySummary {
    pub block: usize,
    pub k_plus: f64,
    pub iterations: usize,
    pub error: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct InversionResult {
    pub curves: Vec<StarlikeCurve<f64>>,
    pub summaries: Vec<FrequencySummary>,
    pub records: Vec<IterationRecord>,
}

/// Circles of radius `r0` centered at the imaging peaks, one per peak.
pub fn initial_curves(peaks: &PeakSet, config: &NewtonConfig) -> Result<Vec<StarlikeCurve<f64>>> {
    if peaks.peaks.is_empty() {
        return Err(Error::InvalidParameter("no imaging peaks to start from".into()));
    }
    Ok(peaks.peaks.iter().map(|p| StarlikeCurve::circle(p.location, config.r0, config.order)).collect())
}

fn flatten(curves: &[StarlikeCurve<f64>]) -> Vec<f64> {
    curves.iter().flat_map(|c| c.to_params()).collect()
}

fn as_dyn(curves: &[StarlikeCurve<f64>]) -> Vec<&dyn BoundaryCurve<f64>> {
    curves.iter().map(|c| c as &dyn BoundaryCurve<f64>).collect()
}

fn apply_step(curves: &[StarlikeCurve<f64>], delta: &DVector<f64>, scale: f64, floor: f64) -> Result<(Vec<StarlikeCurve<f64>>, bool)> {
    let mut out = Vec::with_capacity(curves.len());
    let mut offset = 0;
    let mut projected = false;
    for c in curves {
        let n = c.param_count() + 2;
        let p: Vec<f64> = c.to_params().iter().enumerate().map(|(i, v)| v + scale * delta[offset + i]).collect();
        let mut next = StarlikeCurve::from_params(&p)?;
        projected |= next.project_positive(floor);
        out.push(next);
        offset += n;
    }
    Ok((out, projected))
}

/// Recursive Levenberg-Marquardt sweep over the dataset's frequency blocks
/// in order. `on_record` sees every trajectory record as it is produced.
pub fn run_recursive(
    data: &PhaselessDataset,
    initial: Vec<StarlikeCurve<f64>>,
    config: &NewtonConfig,
    mut on_record: impl FnMut(&IterationRecord) -> Result<()>,
) -> Result<InversionResult> {
    config.validate()?;
    data.check_layout()?;
    let spec = data.spec();
    if spec.blocks.windows(2).any(|w| !(w[0].k_plus < w[1].k_plus)) {
        return Err(Error::InvalidParameter("frequencies must be strictly increasing".into()));
    }
    if initial.is_empty() {
        return Err(Error::InvalidParameter("no initial curves".into()));
    }
    let mut curves: Vec<StarlikeCurve<f64>> = initial.iter().map(|c| c.with_order(config.order)).collect();
    let delta = if spec.noise.delta > 0.0 { spec.noise.delta } else { config.delta_floor };
    let stop = config.tau * delta;
    let penalty: Vec<f64> = curves.iter().flat_map(|_| config.penalty()).collect();
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    let mut emit = |rec: IterationRecord, records: &mut Vec<IterationRecord>| -> Result<()> {
        on_record(&rec)?;
        records.push(rec);
        Ok(())
    };

    for (b, block) in spec.blocks.iter().enumerate() {
        let medium = spec.medium(b)?;
        let measured = &data.values[b];
        let weight = medium.aperture_length() / spec.n_f as f64;
        let mut state = ForwardState::new(&as_dyn(&curves), &medium, config.nodes, block, spec.n_f)?;
        let mut error = relative_error(&state.intensities(), measured)?;
        let mut record = IterationRecord {
            block: b,
            k_plus: block.k_plus,
            iteration: 0,
            error,
            beta: None,
            ratio: None,
            residual_sq: None,
            fallback: false,
            projected: false,
            step_halvings: 0,
            params: flatten(&curves),
        };
        emit(record.clone(), &mut records)?;
        let mut iteration = 0;
        while error >= stop && iteration < config.max_iters_per_freq {
            iteration += 1;
            let jac = assemble_jacobian(&state, &curves, config.nodes)?;
            let model = state.intensities();
            let residual = DVector::from_iterator(
                jac.nrows(),
                measured.iter().zip(&model).flat_map(|(d, m)| d.iter().zip(m).map(|(a, b)| a - b)),
            );
            let step = lm_step(&jac, &residual, weight, &penalty, config.rho)?;
            // a step that pushes a component across the interface is halved
            let mut halvings = 0;
            let (next_curves, next_state, projected) = loop {
                let scale = 0.5f64.powi(halvings as i32);
                let (cand, projected) = apply_step(&curves, &step.delta, scale, config.radius_floor)?;
                match ForwardState::new(&as_dyn(&cand), &medium, config.nodes, block, spec.n_f) {
                    Ok(s) => break (cand, s, projected),
                    Err(Error::Domain(msg)) if halvings < 30 => {
                        log::warn!("step leaves the lower half-plane ({msg}); halving");
                        halvings += 1;
                    }
                    Err(e) => return Err(e),
                }
            };
            if projected {
                log::warn!("radial function floored at {} after iteration {iteration}", config.radius_floor);
            }
            curves = next_curves;
            state = next_state;
            error = relative_error(&state.intensities(), measured)?;
            record = IterationRecord {
                block: b,
                k_plus: block.k_plus,
                iteration,
                error,
                beta: Some(step.beta),
                ratio: Some(step.ratio),
                residual_sq: Some(weight * residual.norm_squared()),
                fallback: step.fallback,
                projected,
                step_halvings: halvings,
                params: flatten(&curves),
            };
            emit(record.clone(), &mut records)?;
        }
        let converged = error < stop;
        if !converged {
            log::warn!(
                "k+ = {}: stopped after {iteration} iterations with E = {error:.4} >= {stop:.4}",
                block.k_plus
            );
        }
        summaries.push(FrequencySummary { block: b, k_plus: block.k_plus, iterations: iteration, error, converged });
    }
    Ok(InversionResult { curves, summaries, records })
}
