use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::netcore::{network_backward, NetworkParams};
use crate::optim::{maximize_on_sphere, LineSearchConfig, SphereResult};
use crate::rng::substream;
use crate::tensor::Tensor;

/// Unit-norm network input maximizing `neuron`'s response, found by
/// sphere-constrained ascent from a Gaussian start drawn from the
/// `visualize.init` substream.
pub fn optimal_stimulus(net: &NetworkParams, neuron: usize, cfg: &LineSearchConfig, seed: u64) -> Result<SphereResult> {
    let n = net.config.num_top_neurons();
    if neuron >= n {
        return Err(Error::argument(format!("neuron {neuron} out of range (network has {n})")));
    }
    let shape = net.config.input_shape();
    let mut rng = substream(seed, "visualize.init");
    let start: Vec<f64> = (0..shape.iter().product::<usize>()).map(|_| rng.sample(StandardNormal)).collect();
    let x0 = Tensor::from_f64(&shape, &start)?;
    let mut onehot = vec![0.0; n];
    onehot[neuron] = 1.0;
    maximize_on_sphere(
        |x| {
            let b = network_backward(x, net, &onehot)?;
            Ok((b.output[neuron], b.input))
        },
        &x0,
        cfg,
    )
}
