//! FFT along one axis of a row-major `[n0, n1, n2]` complex array.
//!
//! Every field in the crate is stored row-major: wave functions as
//! `[n, 1, 1]`, scalar `(x, t)` fields as `[n_x, n_t, 1]` and spinor fields
//! as `[n_x, n_t, 4]`. Forward transforms are unnormalized, inverse transforms
//! divide by the axis length, so a round trip is the identity.

use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use super::C64;

#[derive(Clone)]
pub struct AxisFft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for AxisFft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AxisFft").field("n", &self.n).finish()
    }
}

impl AxisFft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&self, data: &mut [C64], shape: [usize; 3], axis: usize) {
        self.run(data, shape, axis, false);
    }

    pub fn inverse(&self, data: &mut [C64], shape: [usize; 3], axis: usize) {
        self.run(data, shape, axis, true);
    }

    fn run(&self, data: &mut [C64], shape: [usize; 3], axis: usize, inverse: bool) {
        let n = shape[axis];
        assert_eq!(n, self.n, "axis length does not match the plan");
        assert_eq!(data.len(), shape.iter().product::<usize>());
        let plan = if inverse { &self.inverse } else { &self.forward };
        let stride: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let mut scratch = vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        let scale = if inverse { 1.0 / n as f64 } else { 1.0 };

        if stride == 1 {
            plan.process_with_scratch(data, &mut scratch);
            if inverse {
                data.iter_mut().for_each(|z| *z *= scale);
            }
            return;
        }

        let mut lanes = vec![C64::new(0.0, 0.0); data.len()];
        for o in 0..outer {
            let block = o * n * stride;
            for i in 0..stride {
                let lane = (o * stride + i) * n;
                for j in 0..n {
                    lanes[lane + j] = data[block + j * stride + i];
                }
            }
        }
        plan.process_with_scratch(&mut lanes, &mut scratch);
        for o in 0..outer {
            let block = o * n * stride;
            for i in 0..stride {
                let lane = (o * stride + i) * n;
                for j in 0..n {
                    data[block + j * stride + i] = lanes[lane + j] * scale;
                }
            }
        }
    }
}
