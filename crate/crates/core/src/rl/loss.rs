//! Advantage actor-critic objective over a rollout segment.
//!
//! n-step discounted returns with a critic bootstrap on truncation;
//! advantages are treated as constants (no gradient through the return
//! targets), the critic regresses the returns, and an entropy bonus keeps
//! the policy stochastic.

use crate::grad::{GradError, NodeId, Tape, Tensor};

use super::rollout::RolloutSegment;
use super::RlError;

/// Scalar loss components for telemetry, summed over the segment.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossParts {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
}

/// Discounted returns, reverse accumulation: R_t = r_t + gamma * R_{t+1},
/// seeded with the bootstrap value.
pub fn discounted_returns(rewards: &[f64], bootstrap: f64, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = bootstrap;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Build the summed loss on an existing tape given per-step logits/value
/// nodes and frozen action/advantage/return constants. Shared by training
/// and the finite-difference checks (which must freeze the constants).
#[allow(clippy::too_many_arguments)]
pub fn a3c_loss_from_parts(
    tape: &mut Tape<f64>,
    logits_nodes: &[NodeId],
    value_nodes: &[NodeId],
    actions: &[usize],
    advantages: &[f64],
    returns: &[f64],
    entropy_beta: f64,
    value_weight: f64,
) -> Result<(NodeId, LossParts), GradError> {
    debug_assert_eq!(logits_nodes.len(), actions.len());
    let mut loss: Option<NodeId> = None;
    let mut parts = LossParts::default();

    for t in 0..logits_nodes.len() {
        let lsm = tape.log_softmax_row(logits_nodes[t])?;
        let picked = tape.gather(lsm, actions[t])?;
        let policy_term = tape.scale(picked, -advantages[t])?;

        let ret = tape.constant(Tensor::scalar(returns[t]))?;
        let diff = tape.sub(ret, value_nodes[t])?;
        let sq = tape.mul(diff, diff)?;
        let value_term = tape.scale(sq, value_weight)?;

        let probs = tape.softmax_row(logits_nodes[t])?;
        let plogp = tape.mul(probs, lsm)?;
        let neg_entropy = tape.sum_all(plogp)?;
        let entropy_term = tape.scale(neg_entropy, entropy_beta)?;

        parts.policy += tape.value(policy_term).item();
        parts.value += tape.value(value_term).item();
        parts.entropy += -tape.value(neg_entropy).item();

        let pv = tape.add(policy_term, value_term)?;
        let step_loss = tape.add(pv, entropy_term)?;
        loss = Some(match loss {
            Some(acc) => tape.add(acc, step_loss)?,
            None => step_loss,
        });
    }
    Ok((loss.expect("nonempty segment"), parts))
}

/// Loss for a collected segment: compute returns and advantages from the
/// recorded rewards/values, then assemble the objective on the segment's
/// own tape.
pub fn a3c_loss(
    segment: &mut RolloutSegment,
    gamma: f64,
    entropy_beta: f64,
    value_weight: f64,
) -> Result<(NodeId, LossParts), RlError> {
    if segment.steps.is_empty() {
        return Err(RlError::EmptySegment);
    }
    let rewards: Vec<f64> = segment.steps.iter().map(|s| s.reward).collect();
    let returns = discounted_returns(&rewards, segment.bootstrap, gamma);
    let advantages: Vec<f64> = returns
        .iter()
        .zip(&segment.steps)
        .map(|(r, s)| r - s.value)
        .collect();
    let actions: Vec<usize> = segment.steps.iter().map(|s| s.action).collect();
    let logits_nodes = segment.logits_nodes.clone();
    let value_nodes = segment.value_nodes.clone();
    let (node, parts) = a3c_loss_from_parts(
        &mut segment.tape,
        &logits_nodes,
        &value_nodes,
        &actions,
        &advantages,
        &returns,
        entropy_beta,
        value_weight,
    )?;
    Ok((node, parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::Tensor;
    use crate::rng::Rng;

    #[test]
    fn single_step_return_and_value_loss() {
        // r=5, bootstrap 0, V=0, gamma .99: return 5, value loss w*25.
        let returns = discounted_returns(&[5.0], 0.0, 0.99);
        assert_eq!(returns, vec![5.0]);

        let mut tape = Tape::<f64>::new();
        let logits = tape.constant(Tensor::row(vec![0.0; 6])).unwrap();
        let value = tape.constant(Tensor::scalar(0.0)).unwrap();
        let (node, parts) = a3c_loss_from_parts(
            &mut tape,
            &[logits],
            &[value],
            &[3],
            &[5.0],
            &[5.0],
            0.0,
            0.5,
        )
        .unwrap();
        assert!((parts.value - 0.5 * 25.0).abs() < 1e-12);
        // Uniform policy: -log pi = ln 6 scaled by the advantage 5.
        assert!((parts.policy - 5.0 * 6.0f64.ln()).abs() < 1e-12);
        assert!(tape.value(node).item().is_finite());
    }

    #[test]
    fn zero_rewards_uniform_policy_gives_pure_entropy_loss() {
        // Advantages 0 and V=0 kill policy and value terms; the loss is
        // -beta * T * ln 6 for a uniform policy.
        let t_steps = 4;
        let beta = 0.01;
        let mut tape = Tape::<f64>::new();
        let mut logits_nodes = vec![];
        let mut value_nodes = vec![];
        for _ in 0..t_steps {
            logits_nodes.push(tape.constant(Tensor::row(vec![0.7; 6])).unwrap());
            value_nodes.push(tape.constant(Tensor::scalar(0.0)).unwrap());
        }
        let zeros = vec![0.0; t_steps];
        let actions = vec![0; t_steps];
        let (node, parts) = a3c_loss_from_parts(
            &mut tape,
            &logits_nodes,
            &value_nodes,
            &actions,
            &zeros,
            &zeros,
            beta,
            0.5,
        )
        .unwrap();
        let want = -beta * t_steps as f64 * 6.0f64.ln();
        assert!((tape.value(node).item() - want).abs() < 1e-12);
        assert!((parts.entropy - t_steps as f64 * 6.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn returns_match_reference_accumulation_on_random_segments() {
        // Independent oracle: direct power-series sum per index.
        let mut rng = Rng::new(77);
        for _ in 0..100 {
            let n = 1 + rng.usize_below(40);
            let rewards: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 5.0)).collect();
            let bootstrap = rng.uniform(-2.0, 2.0);
            let gamma = rng.uniform(0.5, 1.0);
            let got = discounted_returns(&rewards, bootstrap, gamma);
            for t in 0..n {
                let mut want = 0.0;
                for (k, r) in rewards[t..].iter().enumerate() {
                    want += gamma.powi(k as i32) * r;
                }
                want += gamma.powi((n - t) as i32) * bootstrap;
                assert!((got[t] - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }
}
