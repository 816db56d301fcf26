//! Minimal dense feed-forward networks with hand-written backpropagation.

mod adam;
mod loss;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use loss::{mse, softmax, softmax_cross_entropy};
pub use mlp::{Activation, ForwardCache, LayerSpec, Mlp, MlpCheckpoint, MLP_FORMAT_VERSION};

/// Scales `grads` in place so its Euclidean norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / (norm + 1e-6);
        grads.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}
