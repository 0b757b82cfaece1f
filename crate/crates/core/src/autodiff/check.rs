//! Finite-difference verification of the reverse pass.

use crate::error::Result;
use crate::scalar::Scalar;

use super::loss::mape_loss;
use super::network::{Network, Tape};
use super::tensor::Tensor;

/// Outcome of comparing analytic against central-difference gradients.
#[derive(Debug, Clone)]
pub struct GradientCheckReport {
    pub max_absolute_error: f64,
    pub max_relative_error: f64,
    /// `name[index]` of the worst element, empty if nothing was checked.
    pub worst_parameter: String,
    pub elements_checked: usize,
}

/// Analytic gradients of the MAPE loss w.r.t. every trainable parameter,
/// computed with batch-norm statistics held fixed (inference semantics) so
/// the loss surface probed by finite differences is the same one the
/// reverse pass differentiates.
pub fn analytic_gradients<F: Scalar>(
    net: &mut Network<F>,
    input: &Tensor<F>,
    target: &[F],
) -> Result<Vec<(String, Vec<F>)>> {
    let was_training = net.is_training();
    net.set_training(false);
    let result = (|| {
        let mut tape = Tape::new();
        let out = net.forward_train(input, &mut tape)?;
        let (_, grad) = mape_loss(out.data(), target)?;
        net.zero_grad();
        net.backward(&mut tape, &Tensor::column(&grad))?;
        Ok(net
            .params()
            .iter()
            .filter(|p| !p.frozen)
            .map(|p| (p.name.clone(), p.grad.clone()))
            .collect())
    })();
    net.set_training(was_training);
    result
}

/// Central-difference gradients of the same loss, one probe pair per
/// trainable parameter element.
pub fn numeric_gradients<F: Scalar>(
    net: &mut Network<F>,
    input: &Tensor<F>,
    target: &[F],
    step: f64,
) -> Result<Vec<(String, Vec<F>)>> {
    let was_training = net.is_training();
    net.set_training(false);
    let step_f: F = crate::scalar::c(step);
    let two: F = crate::scalar::c(2.0);

    let loss_at = |net: &Network<F>| -> Result<F> {
        let out = net.forward(input)?;
        let (loss, _) = mape_loss(out.data(), target)?;
        Ok(loss)
    };

    let ids: Vec<usize> = (0..net.params().len())
        .filter(|&i| !net.params().get(i).frozen)
        .collect();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let name = net.params().get(id).name.clone();
        let len = net.params().get(id).len();
        let mut grads = vec![F::zero(); len];
        for (i, grad) in grads.iter_mut().enumerate() {
            let original = net.params().get(id).data[i];
            net.params_mut().get_mut(id).data[i] = original + step_f;
            let plus = loss_at(net);
            net.params_mut().get_mut(id).data[i] = original - step_f;
            let minus = loss_at(net);
            net.params_mut().get_mut(id).data[i] = original;
            *grad = (plus? - minus?) / (two * step_f);
        }
        out.push((name, grads));
    }
    net.set_training(was_training);
    Ok(out)
}

/// Elementwise comparison; relative error uses |a - n| / max(1e-8, |a| + |n|).
pub fn compare_gradients<F: Scalar>(
    analytic: &[(String, Vec<F>)],
    numeric: &[(String, Vec<F>)],
) -> GradientCheckReport {
    let mut report = GradientCheckReport {
        max_absolute_error: 0.0,
        max_relative_error: 0.0,
        worst_parameter: String::new(),
        elements_checked: 0,
    };
    for ((name, a_vec), (_, n_vec)) in analytic.iter().zip(numeric.iter()) {
        for (i, (a, n)) in a_vec.iter().zip(n_vec.iter()).enumerate() {
            let a = a.to_f64_c();
            let n = n.to_f64_c();
            let abs = (a - n).abs();
            let rel = abs / (a.abs() + n.abs()).max(1e-8);
            report.elements_checked += 1;
            if abs > report.max_absolute_error {
                report.max_absolute_error = abs;
            }
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst_parameter = format!("{name}[{i}]");
            }
        }
    }
    report
}

/// Runs the full analytic-vs-numeric comparison on a (small) network.
pub fn check_gradients<F: Scalar>(
    net: &mut Network<F>,
    input: &Tensor<F>,
    target: &[F],
    step: f64,
) -> Result<GradientCheckReport> {
    let analytic = analytic_gradients(net, input, target)?;
    let numeric = numeric_gradients(net, input, target, step)?;
    Ok(compare_gradients(&analytic, &numeric))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ops::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_graph_is_exact() {
        // Dense only: the loss is locally linear in every parameter, so the
        // central difference is exact up to rounding.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut net = Network::<f64>::new();
        net.add_dense("head", 3, 2, &mut rng);
        let input = Tensor::column(&[0.9, 0.4, 0.6]);
        let report = check_gradients(&mut net, &input, &[0.8, 0.5], 1e-5).unwrap();
        assert!(report.elements_checked >= 8);
        assert!(
            report.max_relative_error < 1e-10,
            "rel {} at {}",
            report.max_relative_error,
            report.worst_parameter
        );
    }

    #[test]
    fn mixed_convolutional_stack_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut net = Network::<f64>::new();
        net.add_conv1d("conv1", 1, 3, 4, 1, &mut rng);
        net.add_batch_norm("bn1", 3);
        net.add_activation(Activation::Tanh);
        net.add_max_pool2();
        net.add_conv1d("conv2", 3, 2, 2, 2, &mut rng);
        net.add_activation(Activation::Tanh);
        net.add_flatten();
        net.add_dense("head", 2 * 4, 2, &mut rng);

        // Give batch-norm statistics a non-trivial state first.
        net.set_training(true);
        let mut tape = Tape::new();
        let warm = Tensor::from_series(&[0.6, 0.8, 0.5, 0.9, 0.7, 0.4, 0.55, 0.65]);
        net.forward_train(&warm, &mut tape).unwrap();
        net.set_training(false);

        let input = Tensor::from_series(&[0.5, 0.7, 0.9, 0.6, 0.8, 0.4, 0.75, 0.55]);
        let report = check_gradients(&mut net, &input, &[0.7, 0.9], 1e-5).unwrap();
        assert!(
            report.max_relative_error < 1e-4,
            "rel {} at {}",
            report.max_relative_error,
            report.worst_parameter
        );
    }

    #[test]
    fn lstm_stack_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut net = Network::<f64>::new();
        net.add_lstm("lstm", 1, 3, Activation::Tanh, &mut rng);
        net.add_flatten();
        net.add_dense("head", 3 * 5, 2, &mut rng);
        let input = Tensor::from_series(&[0.4, 0.9, 0.2, 0.7, 0.5]);
        let report = check_gradients(&mut net, &input, &[0.6, 0.8], 1e-5).unwrap();
        assert!(
            report.max_relative_error < 1e-4,
            "rel {} at {}",
            report.max_relative_error,
            report.worst_parameter
        );
    }

    #[test]
    fn frozen_parameters_are_not_probed() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut net = Network::<f64>::new();
        net.add_dense("body", 2, 2, &mut rng);
        net.add_dense("head", 2, 1, &mut rng);
        net.params_mut()
            .freeze_all_except(&["head.weight", "head.bias"])
            .unwrap();
        let analytic =
            analytic_gradients(&mut net, &Tensor::column(&[0.5, 0.9]), &[0.7]).unwrap();
        let names: Vec<&str> = analytic.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, vec!["head.weight", "head.bias"]);
    }

    #[test]
    fn corrupted_analytic_gradient_fails_the_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut net = Network::<f64>::new();
        net.add_dense("head", 2, 1, &mut rng);
        let input = Tensor::column(&[0.5, 0.9]);
        let target = [0.7];
        let mut analytic = analytic_gradients(&mut net, &input, &target).unwrap();
        let numeric = numeric_gradients(&mut net, &input, &target, 1e-5).unwrap();
        assert!(compare_gradients(&analytic, &numeric).max_relative_error < 1e-8);
        // A wrong backward rule would surface exactly like this corruption.
        analytic[0].1[0] += 0.25;
        let report = compare_gradients(&analytic, &numeric);
        assert!(report.max_relative_error > 1e-2);
        assert_eq!(report.worst_parameter, "head.weight[0]");
    }
}
