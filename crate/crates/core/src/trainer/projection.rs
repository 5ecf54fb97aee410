//! Categorical projection of a shifted, scaled return distribution back onto
//! the fixed support.

use crate::net::Support;

/// Distribute `p` located at `clip(reward + (1 - done) * discount * z_j)` onto
/// the support. Terminal targets collapse to a point mass at `clip(reward)`.
pub fn project_distribution(
    p: &[f64],
    reward: f64,
    discount: f64,
    done: bool,
    support: &Support,
) -> Vec<f64> {
    let mut m = vec![0.0; support.atoms];
    project_into(p, reward, discount, done, support, &mut m);
    m
}

pub fn project_into(
    p: &[f64],
    reward: f64,
    discount: f64,
    done: bool,
    support: &Support,
    m: &mut [f64],
) {
    m.iter_mut().for_each(|v| *v = 0.0);
    let dz = support.delta();
    let last = (support.atoms - 1) as f64;
    let bootstrap = if done { 0.0 } else { discount };
    for (j, &pj) in p.iter().enumerate() {
        let tz = (reward + bootstrap * support.atom(j)).clamp(support.v_min, support.v_max);
        let b = ((tz - support.v_min) / dz).clamp(0.0, last);
        let l = b.floor();
        let u = b.ceil();
        if l == u {
            m[l as usize] += pj;
        } else {
            m[l as usize] += pj * (u - b);
            m[u as usize] += pj * (b - l);
        }
    }
}
