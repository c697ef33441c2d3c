//! Finite-difference check of the full pretraining loss on a micro model.

use super::*;
use crate::numerics::{Graph, RandomSource, Tensor};
use crate::simulator::{Task, TeacherTargets, Tier};

const H: f64 = 1e-5;

fn micro_task(rng: &mut RandomSource) -> Task {
    Task {
        context: Tensor::matrix(4, 3, rng.normal_vec(12)).unwrap(),
        queries: Tensor::matrix(2, 3, rng.normal_vec(6)).unwrap(),
        labels: vec![0, 1],
        tiers: vec![Tier::LN, Tier::SO],
        r: vec![0.0, 0.0],
        m0: 0.0,
        m1: 0.0,
        teacher: TeacherTargets::default(),
    }
}

fn loss_of(b: &Backbone, task: &Task) -> f64 {
    let mut g = Graph::inference();
    let l = task_loss(b, &mut g, task, Dropout::Off).unwrap();
    g.value(l).data()[0]
}

#[test]
fn pretraining_loss_matches_finite_differences() {
    let cfg = BackboneConfig {
        d_max: 3,
        token_dim: 8,
        n_layers: 1,
        n_attn_heads: 2,
        mlp_ratio: 2,
        dropout_p: 0.0,
    };
    for seed in 0..3 {
        let mut rng = RandomSource::new(seed, 77);
        let mut b = Backbone::init(cfg.clone(), &mut rng).unwrap();
        for t in b.params.values_mut() {
            let noise = rng.normal_vec(t.len());
            t.data_mut().iter_mut().zip(noise).for_each(|(v, z)| *v += 0.5 * z);
        }
        let task = micro_task(&mut rng);
        b.set_trainable(true);
        let mut g = Graph::new();
        let loss = task_loss(&b, &mut g, &task, Dropout::Off).unwrap();
        g.backward_into(loss, &mut b.params).unwrap();

        let names: Vec<String> = b.params.keys().cloned().collect();
        for name in names {
            let analytic = b.params[&name].grad.clone().unwrap();
            for c in 0..analytic.len() {
                let mut plus = b.clone();
                plus.params.get_mut(&name).unwrap().data_mut()[c] += H;
                let mut minus = b.clone();
                minus.params.get_mut(&name).unwrap().data_mut()[c] -= H;
                let fd = (loss_of(&plus, &task) - loss_of(&minus, &task)) / (2.0 * H);
                let rel = (analytic[c] - fd).abs() / analytic[c].abs().max(fd.abs()).max(1e-3);
                assert!(rel < 1e-5, "seed {seed} {name}[{c}]: {} vs {fd}", analytic[c]);
            }
        }
    }
}
