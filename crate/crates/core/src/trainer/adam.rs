use crate::encoder::EmbeddingTable;
use crate::error::{Entity, Error, Result};
use crate::table::Table;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        for (name, b) in [("adam_beta1", self.beta1), ("adam_beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::Config(format!("adam_eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: EmbeddingTable,
    pub second_moment: EmbeddingTable,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(like: &EmbeddingTable) -> Self {
        Self {
            first_moment: like.zeros_like(),
            second_moment: like.zeros_like(),
            step_count: 0,
        }
    }
}

/// Bias-corrected Adam on the rows whose gradient is non-zero. Other rows
/// keep both their parameters and their moments.
pub fn adam_step(
    params: &mut EmbeddingTable,
    grads: &EmbeddingTable,
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<()> {
    params.check_same_shape(grads)?;
    params.check_same_shape(&state.first_moment)?;
    check_finite(&grads.users, Entity::User)?;
    check_finite(&grads.items, Entity::Item)?;

    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    let sides = [
        (&mut params.users, &grads.users, &mut state.first_moment.users, &mut state.second_moment.users),
        (&mut params.items, &grads.items, &mut state.first_moment.items, &mut state.second_moment.items),
    ];
    for (p, g, m, v) in sides {
        for r in 0..p.rows() {
            let gr = g.row(r);
            if gr.iter().all(|&x| x == 0.0) {
                continue;
            }
            let (pr, mr, vr) = (p.row_mut(r), m.row_mut(r), v.row_mut(r));
            for k in 0..gr.len() {
                mr[k] = config.beta1 * mr[k] + (1.0 - config.beta1) * gr[k];
                vr[k] = config.beta2 * vr[k] + (1.0 - config.beta2) * gr[k] * gr[k];
                let m_hat = mr[k] / bc1;
                let v_hat = vr[k] / bc2;
                pr[k] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.eps);
            }
        }
    }
    Ok(())
}

fn check_finite(table: &Table, entity: fn(usize) -> Entity) -> Result<()> {
    for (r, row) in table.iter_rows().enumerate() {
        if let Some(k) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                entity: entity(r),
                context: format!("gradient component {k} is {}", row[k]),
            });
        }
    }
    Ok(())
}
