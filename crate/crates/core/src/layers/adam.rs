use crate::layers::Parameters;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, flattened in parameter-slice order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. A zero-initialized state of the right
/// size is created on first use.
pub fn adam_step<P: Parameters>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState,
    hyper: &AdamHyper,
) {
    let n = params.param_count();
    if state.m.len() != n {
        *state = AdamState::new(n);
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    let mut offset = 0;
    for (p, g) in params
        .param_slices_mut()
        .into_iter()
        .zip(grads.param_slices())
    {
        let m = &mut state.m[offset..offset + p.len()];
        let v = &mut state.v[offset..offset + p.len()];
        for (((pi, &gi), mi), vi) in p.iter_mut().zip(g).zip(m).zip(v) {
            *mi = hyper.beta1 * *mi + (1.0 - hyper.beta1) * gi;
            *vi = hyper.beta2 * *vi + (1.0 - hyper.beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *pi -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
        }
        offset += p.len();
    }
}

/// Cosine decay from `base` at step 0 to zero at `total` steps.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    let frac = (step.min(total)) as f64 / total as f64;
    0.5 * base * (1.0 + (std::f64::consts::PI * frac).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scalar(Vec<f64>);

    impl Parameters for Scalar {
        fn param_slices(&self) -> Vec<&[f64]> {
            vec![&self.0]
        }
        fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
        fn zeros_like(&self) -> Self {
            Scalar(vec![0.0; self.0.len()])
        }
    }

    #[test]
    fn minimizes_scalar_quadratic() {
        let mut x = Scalar(vec![0.0]);
        let mut state = AdamState::default();
        let hyper = AdamHyper::with_lr(0.1);
        let mut hit = None;
        for step in 0..500 {
            let g = Scalar(vec![2.0 * (x.0[0] - 3.0)]);
            adam_step(&mut x, &g, &mut state, &hyper);
            if hit.is_none() && (x.0[0] - 3.0).abs() < 1e-3 {
                hit = Some(step);
            }
        }
        assert!(hit.is_some(), "final x = {}", x.0[0]);
        assert!((x.0[0] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut x = Scalar(vec![1.5, -2.0]);
        let mut state = AdamState::default();
        for _ in 0..100 {
            adam_step(
                &mut x,
                &Scalar(vec![0.0, 0.0]),
                &mut state,
                &AdamHyper::default(),
            );
        }
        assert_eq!(x.0, vec![1.5, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut x = Scalar(vec![0.0]);
        let mut state = AdamState::default();
        adam_step(
            &mut x,
            &Scalar(vec![5.0]),
            &mut state,
            &AdamHyper::with_lr(0.01),
        );
        assert!((x.0[0] + 0.01).abs() < 1e-10);
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(1e-3, 0, 100), 1e-3);
        assert!((cosine_lr(1e-3, 50, 100) - 5e-4).abs() < 1e-15);
        assert!(cosine_lr(1e-3, 100, 100).abs() < 1e-18);
    }
}
