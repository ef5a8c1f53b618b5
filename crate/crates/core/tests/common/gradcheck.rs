use form_core::model::{FormModel, ThreadInput};
use form_core::RumorLabel;

pub const FD_STEP: f64 = 1e-5;
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub struct Worst {
    pub error: f64,
    pub param: String,
    pub analytic: f64,
    pub numeric: f64,
}

/// Largest relative error between back-propagated and central-difference
/// gradients of the total loss, over every scalar of every parameter.
pub fn check_model(model: &FormModel, input: &ThreadInput, label: RumorLabel) -> Worst {
    let (_, grads) = model.loss_and_gradients(input, label);
    let mut worst = Worst {
        error: 0.0,
        param: String::new(),
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut probe = model.clone();
    for (name, grad) in &grads {
        let shape = grad.dim();
        for i in 0..shape.0 {
            for j in 0..shape.1 {
                let orig = model.params.get(name).unwrap()[[i, j]];
                probe.params.get_mut(name).unwrap()[[i, j]] = orig + FD_STEP;
                let up = probe.loss(input, label).total;
                probe.params.get_mut(name).unwrap()[[i, j]] = orig - FD_STEP;
                let down = probe.loss(input, label).total;
                probe.params.get_mut(name).unwrap()[[i, j]] = orig;
                let numeric = (up - down) / (2.0 * FD_STEP);
                let e = rel_error(grad[[i, j]], numeric);
                if e > worst.error {
                    worst = Worst {
                        error: e,
                        param: format!("{name}[{i},{j}]"),
                        analytic: grad[[i, j]],
                        numeric,
                    };
                }
            }
        }
    }
    worst
}
