use crate::env::Trajectory;
use crate::error::{Error, Result};

/// Generalized advantage estimates and returns for one trajectory.
///
/// `next_values[t]` is the value of the state reached at step `t`; it is
/// ignored where `dones[t]` is set.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && next_values.len() == n && dones.len() == n);
    let mut advantages = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_values[t] * live - values[t];
        running = delta + gamma * lambda * live * running;
        advantages[t] = running;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    (advantages, returns)
}

/// Advantages and returns for a rewarded trajectory, using the values stored
/// at collection time.
pub fn trajectory_advantages(traj: &Trajectory, gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let trs = &traj.transitions;
    let rewards = trs
        .iter()
        .map(|t| t.reward.ok_or_else(|| Error::invalid("trajectory has unrewarded transitions")))
        .collect::<Result<Vec<f64>>>()?;
    let values: Vec<f64> = trs.iter().map(|t| t.value).collect();
    let next_values: Vec<f64> = (0..trs.len()).map(|t| trs.get(t + 1).map_or(0.0, |n| n.value)).collect();
    let dones: Vec<bool> = trs.iter().map(|t| t.done).collect();
    Ok(compute_gae(&rewards, &values, &next_values, &dones, gamma, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_terminal_step() {
        let (adv, ret) = compute_gae(&[1.0], &[0.0], &[0.0], &[true], 0.99, 0.95);
        assert_eq!(adv, vec![1.0]);
        assert_eq!(ret, vec![1.0]);
    }

    #[test]
    fn two_step_hand_computed() {
        let (adv, ret) = compute_gae(&[0.0, 1.0], &[0.5, 0.5], &[0.5, 0.0], &[false, true], 0.9, 0.8);
        let d1 = 1.0 - 0.5;
        let d0 = 0.0 + 0.9 * 0.5 - 0.5;
        let a0 = d0 + 0.9 * 0.8 * d1;
        assert!((adv[1] - d1).abs() < 1e-15);
        assert!((adv[0] - a0).abs() < 1e-15);
        assert!((ret[0] - (a0 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn lambda_one_gives_discounted_return() {
        let rewards = [0.3, -0.2, 0.0, 1.5];
        let values = [0.1, 0.7, -0.4, 0.2];
        let next = [0.7, -0.4, 0.2, 9.0];
        let dones = [false, false, false, true];
        let gamma = 0.95;
        let (_, ret) = compute_gae(&rewards, &values, &next, &dones, gamma, 1.0);
        for t in 0..4 {
            let expected: f64 = (t..4).map(|k| gamma.powi((k - t) as i32) * rewards[k]).sum();
            assert!((ret[t] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_zero_is_one_step_td() {
        let rewards = [0.3, -0.2, 1.0];
        let values = [0.1, 0.7, -0.4];
        let next = [0.7, -0.4, 0.0];
        let dones = [false, false, true];
        let (adv, _) = compute_gae(&rewards, &values, &next, &dones, 0.9, 0.0);
        for t in 0..3 {
            let live = if dones[t] { 0.0 } else { 1.0 };
            assert!((adv[t] - (rewards[t] + 0.9 * next[t] * live - values[t])).abs() < 1e-15);
        }
    }
}
