//! Gradients of the cross-entropy loss.
//!
//! The classical stack is differentiated by hand-written backprop. Quantum
//! angles use parameter-shift rules applied to every gate instance that reads
//! an angle, with contributions of shared angles summed.

use std::f64::consts::{FRAC_PI_2, SQRT_2};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::heads::{softmax, Dense, HeadActivations, HeadParams, KAPPA};
use crate::qcnn::{CircuitOp, Qcnn, QuantumFeatures, Readout, QUANTUM_PARAM_COUNT};
use crate::sim::StateVector;

/// Parameter-shift recipe for one gate family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftRule {
    /// `½[f(θ + π/2) − f(θ − π/2)]`; exact for `exp(−iθP/2)` with `P² = I`.
    TwoTerm,
    /// Four evaluations at `±π/2, ±3π/2`; exact for controlled rotations,
    /// whose generator has eigenvalues `{0, ±½}`.
    FourTerm,
}

/// `(√2 + 1) / (4√2)`.
pub const FOUR_TERM_D1: f64 = (SQRT_2 + 1.0) / (4.0 * SQRT_2);
/// `(√2 − 1) / (4√2)`.
pub const FOUR_TERM_D2: f64 = (SQRT_2 - 1.0) / (4.0 * SQRT_2);

impl ShiftRule {
    pub fn for_op(op: &CircuitOp) -> Self {
        if op.is_controlled_rotation() {
            ShiftRule::FourTerm
        } else {
            ShiftRule::TwoTerm
        }
    }

    /// `(coefficient, shift)` pairs with `∂f = Σ c · f(θ + s)`.
    pub fn terms(self) -> &'static [(f64, f64)] {
        const TWO: [(f64, f64); 2] = [(0.5, FRAC_PI_2), (-0.5, -FRAC_PI_2)];
        const FOUR: [(f64, f64); 4] = [
            (FOUR_TERM_D1, FRAC_PI_2),
            (-FOUR_TERM_D1, -FRAC_PI_2),
            (-FOUR_TERM_D2, 3.0 * FRAC_PI_2),
            (FOUR_TERM_D2, -3.0 * FRAC_PI_2),
        ];
        match self {
            ShiftRule::TwoTerm => &TWO,
            ShiftRule::FourTerm => &FOUR,
        }
    }

    /// Applies the rule to a scalar function of one angle.
    pub fn apply(self, theta: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.terms().iter().map(|&(c, s)| c * f(theta + s)).sum()
    }
}

/// Central difference `(f(θ + ε e_i) − f(θ − ε e_i)) / 2ε`.
pub fn finite_diff(mut f: impl FnMut(&[f64]) -> f64, params: &[f64], index: usize, eps: f64) -> f64 {
    let mut p = params.to_vec();
    p[index] = params[index] + eps;
    let up = f(&p);
    p[index] = params[index] - eps;
    let down = f(&p);
    (up - down) / (2.0 * eps)
}

/// Backprop result for the classical stack.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalGrad {
    pub loss: f64,
    /// Same shapes as the head parameters.
    pub heads: HeadParams,
    /// `∂L/∂x` for the rescaled retained vector.
    pub d_retained_scaled: [f64; 4],
    /// `∂L/∂x` for the rescaled discarded vector (recycled models only).
    pub d_discarded_scaled: Option<[f64; 4]>,
}

impl ClassicalGrad {
    /// Upstream gradient with respect to the raw probabilities, laid out like
    /// [`QuantumFeatures::to_vec`].
    pub fn upstream(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.d_retained_scaled.iter().map(|g| KAPPA * g).collect();
        if let Some(d) = self.d_discarded_scaled {
            v.extend(d.iter().map(|g| KAPPA * g));
        }
        v
    }
}

/// Backward through `y = tanh(W x + b)`; accumulates into `grad` and returns `∂L/∂x`.
fn tanh_backward(layer: &Dense, x: &[f64], y: &[f64], dy: &[f64], grad: &mut Dense) -> Vec<f64> {
    let delta: Vec<f64> = y.iter().zip(dy).map(|(y, g)| g * (1.0 - y * y)).collect();
    affine_backward(layer, x, &delta, grad)
}

fn affine_backward(layer: &Dense, x: &[f64], delta: &[f64], grad: &mut Dense) -> Vec<f64> {
    let mut dx = vec![0.0; layer.cols];
    for (r, d) in delta.iter().enumerate() {
        grad.bias[r] += d;
        for (c, xc) in x.iter().enumerate() {
            grad.weights[r * layer.cols + c] += d * xc;
            dx[c] += layer.weights[r * layer.cols + c] * d;
        }
    }
    dx
}

/// Loss and gradients for one sample, given the forward activations.
pub fn backward_classical(heads: &HeadParams, acts: &HeadActivations, label: usize) -> Result<ClassicalGrad> {
    let loss = crate::heads::cross_entropy(&acts.logits, label)?;
    let mut grads = heads.zeros_like();

    let mut d_logits = softmax(&acts.logits);
    d_logits[label] -= 1.0;

    let d_fused = match (&heads.final_layer, &mut grads.final_layer) {
        (Some(layer), Some(g)) => affine_backward(layer, &acts.fused, &d_logits, g),
        _ => d_logits,
    };

    let (d_ret_out, d_discarded_scaled) = match (&heads.discarded, &acts.discarded, &acts.discarded_scaled) {
        (Some(head), Some(a), Some(x)) => {
            let g = grads.discarded.as_mut().expect("zeros_like keeps the discarded head");
            let d_ret: Vec<f64> = d_fused.iter().zip(&a.output).map(|(d, o)| d * o).collect();
            let d_out: Vec<f64> = d_fused.iter().zip(&acts.retained_out).map(|(d, r)| d * r).collect();
            let d_exp = tanh_backward(&head.recover, &a.expanded, &a.output, &d_out, &mut g.recover);
            let d_proj = tanh_backward(&head.expand, &a.projected, &a.expanded, &d_exp, &mut g.expand);
            let d_x = tanh_backward(&head.project, x, &a.projected, &d_proj, &mut g.project);
            (d_ret, Some(to4(&d_x)?))
        }
        (None, _, _) => (d_fused, None),
        _ => return Err(Error::Shape("activations do not match the head layout".into())),
    };

    let d_ret_x = tanh_backward(
        &heads.retained,
        &acts.retained_scaled,
        &acts.retained_out,
        &d_ret_out,
        &mut grads.retained,
    );

    Ok(ClassicalGrad {
        loss,
        heads: grads,
        d_retained_scaled: to4(&d_ret_x)?,
        d_discarded_scaled,
    })
}

fn to4(v: &[f64]) -> Result<[f64; 4]> {
    v.try_into()
        .map_err(|_| Error::Shape(format!("expected 4 entries, got {}", v.len())))
}

fn weighted(features: &QuantumFeatures, upstream: &[f64]) -> f64 {
    features.to_vec().iter().zip(upstream).map(|(f, u)| f * u).sum()
}

/// Gradient of `upstream · features(θ)` for every quantum angle.
///
/// States before each parameterised op are cached from one forward sweep, so
/// each shifted evaluation only re-runs the suffix of the circuit.
pub fn quantum_grad(
    qcnn: &Qcnn,
    input: &StateVector,
    angles: &[f64],
    readout: Readout,
    upstream: &[f64],
) -> Result<Vec<f64>> {
    if upstream.len() != readout.feature_len() {
        return Err(Error::Shape(format!(
            "upstream has {} entries, readout yields {}",
            upstream.len(),
            readout.feature_len()
        )));
    }
    if upstream.iter().any(|u| !u.is_finite()) {
        return Err(Error::NonFiniteGradient(format!("upstream {upstream:?}")));
    }
    // validates the input width and angle count
    qcnn.evolve(input, angles)?;

    let ops = qcnn.ops();
    let mut prefixes: Vec<(usize, StateVector)> = Vec::new();
    let mut state = input.clone();
    for (k, op) in ops.iter().enumerate() {
        if op.param.is_some() {
            prefixes.push((k, state.clone()));
        }
        qcnn.run_range(&mut state, angles, k..k + 1)?;
    }

    let contributions: Vec<(usize, f64)> = prefixes
        .par_iter()
        .map(|(k, before)| -> Result<(usize, f64)> {
            let op = &ops[*k];
            let id = op.param.expect("only parameterised ops are cached");
            let theta = angles[id];
            let mut total = 0.0;
            for &(c, s) in ShiftRule::for_op(op).terms() {
                let mut st = before.clone();
                st.apply(&op.gate(theta + s))?;
                qcnn.run_range(&mut st, angles, k + 1..ops.len())?;
                total += c * weighted(&qcnn.readout(&st, readout)?, upstream);
            }
            Ok((id, total))
        })
        .collect::<Result<_>>()?;

    let mut grad = vec![0.0; QUANTUM_PARAM_COUNT];
    for (id, g) in contributions {
        grad[id] += g;
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient("quantum angle gradient".into()));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::HeadConfig;
    use crate::qcnn::{CircuitLayout, LayoutOptions, QcnnParams};
    use crate::sim::Gate;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut impl Rng) -> StateVector {
        let mut amps: Vec<Complex64> = (0..256)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        amps.iter_mut().for_each(|a| *a /= norm);
        StateVector::from_amplitudes(amps).unwrap()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn four_term_constants() {
        assert_abs_diff_eq!(FOUR_TERM_D1, 0.4267766952966369, epsilon = 1e-15);
        assert_abs_diff_eq!(FOUR_TERM_D2, 0.07322330470336313, epsilon = 1e-15);
    }

    #[test]
    fn rules_exact_on_trig_polynomials() {
        for theta in [-2.0, -0.3, 0.0, 0.7, 2.9] {
            // frequencies {1}: both rules exact
            let f = |t: f64| 0.3 * t.sin() - 1.2 * t.cos() + 0.5;
            let df = 0.3 * f64::cos(theta) + 1.2 * f64::sin(theta);
            assert_abs_diff_eq!(ShiftRule::TwoTerm.apply(theta, f), df, epsilon = 1e-12);
            assert_abs_diff_eq!(ShiftRule::FourTerm.apply(theta, f), df, epsilon = 1e-12);
            // frequencies {½, 1}: only the four-term rule is exact
            let g = |t: f64| (t / 2.0).sin() + 0.4 * (t / 2.0).cos() + t.sin();
            let dg = 0.5 * (theta / 2.0).cos() - 0.2 * (theta / 2.0).sin() + theta.cos();
            assert_abs_diff_eq!(ShiftRule::FourTerm.apply(theta, g), dg, epsilon = 1e-12);
        }
        let h = |t: f64| (t / 2.0).sin();
        assert!((ShiftRule::TwoTerm.apply(0.0, h) - 0.5).abs() > 1e-3);
    }

    #[test]
    fn single_rotation_shift_matches_closed_form() {
        // ⟨Z⟩ after RY(θ)|0⟩ is cos θ
        for theta in [-1.0, 0.2, 1.4] {
            let z = |t: f64| {
                let s = StateVector::zero(1).unwrap().with_gate(&Gate::Ry { wire: 0, theta: t }).unwrap();
                let p = s.probabilities();
                p[0] - p[1]
            };
            assert_abs_diff_eq!(ShiftRule::TwoTerm.apply(theta, z), -f64::sin(theta), epsilon = 1e-12);
        }
    }

    #[test]
    fn controlled_rotation_four_term_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let theta = rng.gen_range(-3.0..3.0);
            let prep = [
                Gate::Ry { wire: 0, theta: rng.gen_range(-3.0..3.0) },
                Gate::Rx { wire: 1, theta: rng.gen_range(-3.0..3.0) },
            ];
            for which in 0..2 {
                let f = |t: f64| {
                    let mut s = StateVector::zero(2).unwrap();
                    for g in &prep {
                        s.apply(g).unwrap();
                    }
                    let g = if which == 0 {
                        Gate::Crx { control: 0, target: 1, theta: t }
                    } else {
                        Gate::Crz { control: 0, target: 1, theta: t }
                    };
                    s.apply(&g).unwrap();
                    s.apply(&Gate::Ry { wire: 1, theta: 0.4 }).unwrap();
                    s.excitation_probabilities(&[1]).unwrap()[0]
                };
                let fd = finite_diff(|p| f(p[0]), &[theta], 0, 1e-6);
                let ps = ShiftRule::FourTerm.apply(theta, f);
                assert_abs_diff_eq!(ps, fd, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn finite_diff_on_polynomial() {
        let g = finite_diff(|p| p[0] * p[0] * p[1], &[3.0, 2.0], 0, 1e-4);
        assert_abs_diff_eq!(g, 12.0, epsilon = 1e-7);
    }

    fn classical_case(seed: u64, cfg: HeadConfig) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut heads = HeadParams::new(&cfg, &mut rng).unwrap();
        // nonzero biases exercise every path
        let mut flat = heads.to_flat();
        flat.iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
        heads.assign_flat(&flat).unwrap();
        let features = QuantumFeatures {
            retained: [0.1, 0.5, 0.15, 0.25],
            discarded: cfg.recycle.then(|| std::array::from_fn(|_| rng.gen())),
        };
        let label = rng.gen_range(0..4);
        let acts = heads.activations(&features).unwrap();
        let g = backward_classical(&heads, &acts, label).unwrap();
        let analytic = g.heads.to_flat();

        let loss_at = |p: &[f64]| {
            let mut h = heads.clone();
            h.assign_flat(p).unwrap();
            crate::heads::cross_entropy(&h.logits(&features).unwrap(), label).unwrap()
        };
        assert_abs_diff_eq!(g.loss, loss_at(&flat), epsilon = 1e-15);
        for i in 0..flat.len() {
            let fd = finite_diff(loss_at, &flat, i, 1e-6);
            let err = (fd - analytic[i]).abs();
            assert!(err <= 1e-6 * analytic[i].abs().max(1e-3), "param {i}: fd {fd} vs {}", analytic[i]);
        }

        // input gradient with respect to the raw probabilities
        let up = g.upstream();
        let raw = features.to_vec();
        for i in 0..raw.len() {
            let loss_raw = |p: &[f64]| {
                let f = QuantumFeatures {
                    retained: [p[0], p[1], p[2], p[3]],
                    discarded: features.discarded.map(|_| [p[4], p[5], p[6], p[7]]),
                };
                crate::heads::cross_entropy(&heads.logits(&f).unwrap(), label).unwrap()
            };
            let fd = finite_diff(loss_raw, &raw, i, 1e-6);
            assert!(rel_err(fd, up[i]) < 1e-6 || (fd - up[i]).abs() < 1e-9, "input {i}: {fd} vs {}", up[i]);
        }
    }

    #[test]
    fn classical_gradients_match_finite_differences() {
        classical_case(1, HeadConfig::default());
        classical_case(2, HeadConfig { expansion: 3, final_layer: true, ..Default::default() });
        classical_case(3, HeadConfig { recycle: false, ..Default::default() });
        classical_case(4, HeadConfig { recycle: false, final_layer: true, ..Default::default() });
    }

    #[test]
    fn quantum_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (opts, readout) in [
            (LayoutOptions::default(), Readout::Recycled),
            (LayoutOptions::odd_survivors([7, 1]), Readout::Baseline),
        ] {
            let q = Qcnn::new(CircuitLayout::build(&opts).unwrap()).unwrap();
            let input = random_state(&mut rng);
            let angles = QcnnParams::random(&mut rng).to_flat();
            let upstream: Vec<f64> = (0..readout.feature_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let grad = quantum_grad(&q, &input, &angles, readout, &upstream).unwrap();
            let f = |a: &[f64]| weighted(&q.forward_flat(&input, a, readout).unwrap(), &upstream);
            for id in (0..QUANTUM_PARAM_COUNT).step_by(7).chain([30, 31, 62, 63]) {
                let fd = finite_diff(f, &angles, id, 1e-5);
                assert!(
                    rel_err(fd, grad[id]) < 1e-4 || (fd - grad[id]).abs() < 1e-9,
                    "angle {id}: fd {fd} vs shift {}",
                    grad[id]
                );
            }
        }
    }

    #[test]
    fn quantum_gradient_rejects_bad_upstream() {
        let q = Qcnn::new(CircuitLayout::default()).unwrap();
        let s = StateVector::zero(8).unwrap();
        let a = vec![0.1; QUANTUM_PARAM_COUNT];
        assert!(quantum_grad(&q, &s, &a, Readout::Baseline, &[0.0; 8]).is_err());
        assert!(matches!(
            quantum_grad(&q, &s, &a, Readout::Recycled, &[f64::NAN; 8]),
            Err(Error::NonFiniteGradient(_))
        ));
        assert!(quantum_grad(&q, &s, &a[..5], Readout::Baseline, &[0.0; 4]).is_err());
    }
}
