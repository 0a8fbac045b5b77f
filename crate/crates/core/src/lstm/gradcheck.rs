use serde::{Deserialize, Serialize};

use super::cell::{loss, loss_and_grad_with, Batch, Fault, LstmState};
use super::params::LstmParams;
use super::LstmError;

const STEP: f64 = 1e-5;
const FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`
    pub max_relative_error: f64,
    pub worst_block: String,
    pub worst_index: usize,
    /// Largest relative error per parameter block.
    pub blocks: Vec<(String, f64)>,
    /// Blocks whose analytic gradient is identically zero.
    pub zero_blocks: Vec<String>,
    pub checked: usize,
}

/// Compares the BPTT gradient of [`loss`] with central differences
/// (step 1e-5) over every parameter. Run it on small double-precision models.
pub fn gradient_check(
    params: &LstmParams<f64>,
    seq: &[usize],
    eof: Option<usize>,
) -> Result<GradCheckReport, LstmError> {
    check_with(params, seq, eof, Fault::None)
}

pub(crate) fn check_with(
    params: &LstmParams<f64>,
    seq: &[usize],
    eof: Option<usize>,
    fault: Fault,
) -> Result<GradCheckReport, LstmError> {
    params.check_shapes()?;
    let batch = Batch::from_sequence(seq);
    let init = LstmState::zeros(params.dims(), 1);
    let (_, analytic, _) = loss_and_grad_with(params, &batch, &init, eof, fault)?;

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_block: String::new(),
        worst_index: 0,
        blocks: Vec::new(),
        zero_blocks: Vec::new(),
        checked: 0,
    };
    let analytic_blocks = analytic.blocks();
    for (block_idx, (name, grad)) in analytic_blocks.iter().enumerate() {
        if grad.iter().all(|&g| g == 0.0) {
            report.zero_blocks.push(name.clone());
        }
        let mut block_max: f64 = 0.0;
        for (i, &g_a) in grad.iter().enumerate() {
            let original = params.blocks()[block_idx].1.iter().nth(i).copied().expect("same shape");
            set(&mut probe, block_idx, i, original + STEP);
            let plus = loss(&probe, seq, eof)?;
            set(&mut probe, block_idx, i, original - STEP);
            let minus = loss(&probe, seq, eof)?;
            set(&mut probe, block_idx, i, original);
            let g_n = (plus - minus) / (2.0 * STEP);
            let rel = (g_a - g_n).abs() / g_a.abs().max(g_n.abs()).max(FLOOR);
            report.checked += 1;
            block_max = block_max.max(rel);
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst_block = name.clone();
                report.worst_index = i;
            }
        }
        report.blocks.push((name.clone(), block_max));
    }
    Ok(report)
}

fn set(params: &mut LstmParams<f64>, block: usize, index: usize, value: f64) {
    let mut blocks = params.blocks_mut();
    *blocks[block].1.iter_mut().nth(index).expect("index inside block") = value;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::ModelDims;
    use rand::{Rng, SeedableRng};

    const EOF: usize = 11;

    /// Weights are drawn at three times the training scale so every gradient
    /// sits well above the finite-difference noise floor.
    fn model(layers: usize, seed: u64) -> (LstmParams<f64>, Vec<usize>) {
        let dims = ModelDims { vocab: 12, embed: 8, hidden: 8, layers };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut p = LstmParams::init(dims, &mut rng);
        for (name, mut block) in p.blocks_mut() {
            if name.ends_with(".w") || name.ends_with(".u") {
                block.mapv_inplace(|x| x * 3.0);
            }
        }
        let seq = (0..24).map(|i| if i == 11 { EOF } else { rng.random_range(0..EOF) }).collect();
        (p, seq)
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        for layers in 1..=3 {
            let (p, seq) = model(layers, 100 + layers as u64);
            let report = gradient_check(&p, &seq, Some(EOF)).unwrap();
            assert!(report.max_relative_error < 1e-4, "{report:?}");
            assert_eq!(report.checked, p.num_params());
        }
    }

    #[test]
    fn corrupted_forget_gate_is_detected() {
        let (p, seq) = model(2, 7);
        let report = check_with(&p, &seq, Some(EOF), Fault::ForgetGate).unwrap();
        assert!(report.max_relative_error > 1e-2, "{report:?}");
        assert!(report.worst_block.starts_with("layer"), "{}", report.worst_block);
    }

    #[test]
    fn every_block_receives_gradient() {
        let (p, seq) = model(3, 103);
        let report = gradient_check(&p, &seq, Some(EOF)).unwrap();
        assert!(report.zero_blocks.is_empty(), "{:?}", report.zero_blocks);
    }
}
