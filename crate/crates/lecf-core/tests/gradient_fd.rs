//! Central-finite-difference oracle for the taped reverse-mode gradients:
//! every trainable parameter group on an n=8, L1=L2=2 model, step 1e-5,
//! relative error <= 1e-4 on >= 10 sampled coordinates per group. Neighbor
//! selection is frozen (same attention tables on every evaluation) so the
//! loss is a smooth function of the parameters.

use lecf_core::hsam::GammaMode;
use lecf_core::lecf::AblationFlags;
use lecf_core::manifold::HPoint;
use lecf_core::model::{
    build_attention, compute_gradients, forward_t, init_params, loss_t, sample_pairs,
    AttentionTables, Graphs, ModelParams, TrainConfig,
};
use lecf_core::synth::{generate, SynthConfig};
use lecf_core::tape::Tape;
use rand::Rng;

const N: usize = 8;

fn config() -> TrainConfig {
    TrainConfig {
        dim: N,
        l1: 2,
        l2: 2,
        lambda: 1e-3,
        margin: 0.1,
        epochs: 0,
        t: 4,
        seed: 91,
        gamma_mode: GammaMode::Unit,
        ablation: AblationFlags::default(),
        ..Default::default()
    }
}

fn small_graphs() -> Graphs {
    let bundle = generate(&SynthConfig {
        num_users: 8,
        num_items: 10,
        num_blocks: 2,
        num_entities: 14,
        interactions_per_user: 6,
        kg_links_per_entity: 2,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    Graphs::from_bundle(&bundle)
}

fn loss_value(
    params: &ModelParams,
    graphs: &Graphs,
    tables: &AttentionTables,
    triples: &[(u32, u32, u32)],
    cfg: &TrainConfig,
) -> f64 {
    let mut tape = Tape::new();
    let fw = forward_t(&mut tape, params, graphs, tables, cfg).unwrap();
    let loss = loss_t(&mut tape, &fw, triples, cfg);
    tape.scalar(loss)
}

/// Parameter groups addressed by name; returns group sizes.
fn group_len(p: &ModelParams, group: &str) -> usize {
    match group {
        "entity" => p.entity_embeds.len() * (N + 1),
        "user" => p.user_embeds.len() * (N + 1),
        "item" => p.item_embeds.len() * (N + 1),
        "relation" => p.relation_embeds.len() * N,
        "attr_user" => p.attr_user.len() * N,
        "phi_e_w1" => p.layers[0].phi_e.w1.len(),
        "phi_e_b1" => p.layers[0].phi_e.b1.len(),
        "phi_e_w2" => p.layers[0].phi_e.w2.len(),
        "phi_e_b2" => p.layers[0].phi_e.b2.len(),
        "phi_h_w1" => p.layers[1].phi_h.w1.len(),
        "phi_h_b1" => p.layers[1].phi_h.b1.len(),
        "phi_h_w2" => p.layers[1].phi_h.w2.len(),
        "phi_h_b2" => p.layers[1].phi_h.b2.len(),
        "wmap_w" => p.layers[0].wmap.w.len(),
        "wmap_b" => p.layers[1].wmap.b.len(),
        "v" => p.layers[0].v.len(),
        "kg_wmap_w" => p.kg_wmap.w.len(),
        "kg_wmap_b" => p.kg_wmap.b.len(),
        "kg_v" => p.kg_v.len(),
        "attn_w" => 1,
        _ => unreachable!(),
    }
}

fn perturb(p: &mut ModelParams, group: &str, idx: usize, delta: f64) {
    let point = |t: &mut Vec<HPoint>, idx: usize| {
        let (pi, ci) = (idx / (N + 1), idx % (N + 1));
        let mut c = t[pi].coords().to_vec();
        c[ci] += delta;
        t[pi] = HPoint::from_unchecked(c);
    };
    match group {
        "entity" => point(&mut p.entity_embeds, idx),
        "user" => point(&mut p.user_embeds, idx),
        "item" => point(&mut p.item_embeds, idx),
        "relation" => p.relation_embeds[idx / N][idx % N] += delta,
        "attr_user" => p.attr_user[idx / N][idx % N] += delta,
        "phi_e_w1" => p.layers[0].phi_e.w1[idx] += delta,
        "phi_e_b1" => p.layers[0].phi_e.b1[idx] += delta,
        "phi_e_w2" => p.layers[0].phi_e.w2[idx] += delta,
        "phi_e_b2" => p.layers[0].phi_e.b2[idx] += delta,
        "phi_h_w1" => p.layers[1].phi_h.w1[idx] += delta,
        "phi_h_b1" => p.layers[1].phi_h.b1[idx] += delta,
        "phi_h_w2" => p.layers[1].phi_h.w2[idx] += delta,
        "phi_h_b2" => p.layers[1].phi_h.b2[idx] += delta,
        "wmap_w" => p.layers[0].wmap.w[idx] += delta,
        "wmap_b" => p.layers[1].wmap.b[idx] += delta,
        "v" => p.layers[0].v[idx] += delta,
        "kg_wmap_w" => p.kg_wmap.w[idx] += delta,
        "kg_wmap_b" => p.kg_wmap.b[idx] += delta,
        "kg_v" => p.kg_v[idx] += delta,
        "attn_w" => p.attn_w += delta,
        _ => unreachable!(),
    }
}

fn analytic(
    grads: &lecf_core::tape::Gradients,
    leaves: &lecf_core::model::LeafVars,
    group: &str,
    idx: usize,
) -> f64 {
    let from_table = |vars: &[lecf_core::tape::Var], width: usize| {
        grads.get(vars[idx / width]).map(|g| g[idx % width]).unwrap_or(0.0)
    };
    let single = |v: lecf_core::tape::Var| grads.get(v).map(|g| g[idx]).unwrap_or(0.0);
    match group {
        "entity" => from_table(&leaves.entity, N + 1),
        "user" => from_table(&leaves.user, N + 1),
        "item" => from_table(&leaves.item, N + 1),
        "relation" => from_table(&leaves.relation, N),
        "attr_user" => from_table(&leaves.attr_user, N),
        "phi_e_w1" => single(leaves.layers[0].phi_e.w1),
        "phi_e_b1" => single(leaves.layers[0].phi_e.b1),
        "phi_e_w2" => single(leaves.layers[0].phi_e.w2),
        "phi_e_b2" => single(leaves.layers[0].phi_e.b2),
        "phi_h_w1" => single(leaves.layers[1].phi_h.w1),
        "phi_h_b1" => single(leaves.layers[1].phi_h.b1),
        "phi_h_w2" => single(leaves.layers[1].phi_h.w2),
        "phi_h_b2" => single(leaves.layers[1].phi_h.b2),
        "wmap_w" => single(leaves.layers[0].wmap_w),
        "wmap_b" => single(leaves.layers[1].wmap_b),
        "v" => single(leaves.layers[0].v),
        "kg_wmap_w" => single(leaves.kg_wmap_w),
        "kg_wmap_b" => single(leaves.kg_wmap_b),
        "kg_v" => single(leaves.kg_v),
        "attn_w" => single(leaves.attn_w),
        _ => unreachable!(),
    }
}

#[test]
fn taped_gradients_match_central_differences() {
    let cfg = config();
    let graphs = small_graphs();
    let mut params = init_params(&graphs, &cfg).unwrap();
    // spread the embedding tables to unit scale: at the sigma = 0.01
    // initialization all distances sit at the acosh singularity, where the
    // finite-difference truncation error itself exceeds the tolerance
    let mut rs = lecf_core::rng::seeded(777);
    for table in [&mut params.entity_embeds, &mut params.user_embeds, &mut params.item_embeds] {
        for p in table.iter_mut() {
            *p = lecf_core::manifold::project_to_hyperboloid(
                &lecf_core::rng::normal_vec(&mut rs, N, 0.8),
                cfg.curv(),
            );
        }
    }
    let tables = build_attention(&params, &graphs, &cfg, 0).unwrap();
    let triples = sample_pairs(&graphs.train_items, graphs.num_items, cfg.seed, 0);
    assert!(!triples.is_empty());

    let mut tape = Tape::new();
    let fw = forward_t(&mut tape, &params, &graphs, &tables, &cfg).unwrap();
    let loss = loss_t(&mut tape, &fw, &triples, &cfg);
    let grads = compute_gradients(&tape, loss);

    let step = 1e-5;
    let groups = [
        "entity", "user", "item", "relation", "attr_user", "phi_e_w1", "phi_e_b1", "phi_e_w2",
        "phi_e_b2", "phi_h_w1", "phi_h_b1", "phi_h_w2", "phi_h_b2", "wmap_w", "wmap_b", "v",
        "kg_wmap_w", "kg_wmap_b", "kg_v", "attn_w",
    ];
    let mut r = lecf_core::rng::seeded(404);
    for group in groups {
        let len = group_len(&params, group);
        let samples = 10.min(len);
        for s in 0..samples {
            let idx = if len <= 10 { s } else { r.gen_range(0..len) };
            let mut plus = params.clone();
            perturb(&mut plus, group, idx, step);
            let mut minus = params.clone();
            perturb(&mut minus, group, idx, -step);
            let fd = (loss_value(&plus, &graphs, &tables, &triples, &cfg)
                - loss_value(&minus, &graphs, &tables, &triples, &cfg))
                / (2.0 * step);
            let an = analytic(&grads, &fw.leaves, group, idx);
            let denom = fd.abs().max(an.abs()).max(1e-6);
            let rel = (fd - an).abs() / denom;
            assert!(
                rel <= 1e-4,
                "{group}[{idx}]: fd {fd:.8e} vs analytic {an:.8e} (rel {rel:.2e})"
            );
        }
    }

    // v is special: the product f x is analytically independent of v, so its
    // gradient must vanish identically (up to the regularizer term).
    for (layer, lv) in fw.leaves.layers.iter().enumerate() {
        let g = grads.get(lv.v).unwrap();
        for (k, gi) in g.iter().enumerate() {
            let reg = 2.0 * cfg.lambda * params.layers[layer].v[k];
            assert!(
                (gi - reg).abs() < 1e-10,
                "layer {layer} v[{k}] gradient {gi} should be pure regularizer {reg}"
            );
        }
    }
}
