//! Central finite differences against reverse-mode gradients. Each checker
//! returns the largest relative error seen over `instances` seeded cases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spanparse::adapt::{domain_classifier_loss, orthogonality_loss, DomainClassifier, FusionCoefficients, MatchingNetwork};
use spanparse::chart::{margin_loss, GoldSpans, PosHead, ScorerConfig, SpanScorer};
use spanparse::experiments::{builtin_grammar, synth_generate};
use spanparse::tensor::{Graph, ParamId, ParamStore, Tensor, Var};
use spanparse::treebank::LabelVocab;

pub const EPS: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Below a magnitude of 1e-5 the difference quotient is mostly roundoff.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-5)
}

/// Compares `factor` times the numeric gradient with the analytic one over
/// every entry of `ids`.
fn check(store: &mut ParamStore, ids: &[ParamId], factor: f64, f: &dyn Fn(&mut Graph, &ParamStore) -> Var) -> f64 {
    let mut g = Graph::new();
    let loss = f(&mut g, store);
    store.zero_grad();
    g.backward(loss, store).unwrap();
    let analytic: Vec<Vec<f64>> = ids.iter().map(|&id| store.grad(id).to_vec()).collect();
    let eval = |store: &ParamStore| {
        let mut g = Graph::new();
        let l = f(&mut g, store);
        g.value(l).item()
    };
    let mut worst = 0.0f64;
    for (k, &id) in ids.iter().enumerate() {
        for e in 0..store.value(id).data().len() {
            let orig = store.value(id).data()[e];
            store.get_mut(id).value.data_mut()[e] = orig + EPS;
            let up = eval(store);
            store.get_mut(id).value.data_mut()[e] = orig - EPS;
            let down = eval(store);
            store.get_mut(id).value.data_mut()[e] = orig;
            let numeric = factor * (up - down) / (2.0 * EPS);
            worst = worst.max(rel_err(analytic[k][e], numeric));
        }
    }
    worst
}

/// Skips charts where the hinge is inactive.
pub fn margin(instances: usize) -> f64 {
    let trees = synth_generate(&builtin_grammar(), 200, None, 5, 6).unwrap();
    let labels = LabelVocab::from_trees(&trees);
    let mut checked = 0;
    let mut worst = 0.0f64;
    for (s, tree) in trees.iter().filter(|t| t.len() >= 2).enumerate() {
        if checked == instances {
            break;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(s as u64);
        let mut store = ParamStore::new();
        let h = store.add("h", random(&mut rng, tree.len(), 6)).unwrap();
        let scorer = SpanScorer::new(&mut store, "s", 6, &ScorerConfig { hidden: 8 }, labels.len(), &mut rng).unwrap();
        let gold = GoldSpans::from_tree(tree, &labels).unwrap();
        let f = |g: &mut Graph, st: &ParamStore| {
            let hv = g.param(st, h).unwrap();
            let scores = scorer.forward(g, st, hv).unwrap();
            margin_loss(g, scores, &gold).unwrap().0
        };
        let mut g = Graph::new();
        let l = f(&mut g, &store);
        if g.value(l).item() < 1e-3 {
            continue;
        }
        let mut ids = vec![h];
        ids.extend(scorer.param_ids());
        worst = worst.max(check(&mut store, &ids, 1.0, &f));
        checked += 1;
    }
    assert_eq!(checked, instances);
    worst
}

pub fn pos(instances: usize) -> f64 {
    let mut worst = 0.0f64;
    for s in 0..instances as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + s);
        let mut store = ParamStore::new();
        let n = rng.gen_range(1..7);
        let h = store.add("h", random(&mut rng, n, 5)).unwrap();
        let head = PosHead::new(&mut store, "pos", 5, 4, &mut rng).unwrap();
        let tags: Vec<Option<usize>> = (0..n).map(|i| if i == 1 { None } else { Some(rng.gen_range(0..4)) }).collect();
        let f = |g: &mut Graph, st: &ParamStore| {
            let hv = g.param(st, h).unwrap();
            let logits = head.logits(g, st, hv).unwrap();
            head.loss(g, logits, &tags).unwrap()
        };
        let mut ids = vec![h];
        ids.extend(head.param_ids());
        worst = worst.max(check(&mut store, &ids, 1.0, &f));
    }
    worst
}

pub fn orthogonality(instances: usize) -> f64 {
    let mut worst = 0.0f64;
    for s in 0..instances as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + s);
        let mut store = ParamStore::new();
        let domains = rng.gen_range(1..4);
        let rows = rng.gen_range(1..6);
        let ids: Vec<ParamId> = (0..2 * domains).map(|k| store.add(format!("p{k}"), random(&mut rng, rows, 4)).unwrap()).collect();
        let f = |g: &mut Graph, st: &ParamStore| {
            let pairs: Vec<(Var, Var)> =
                (0..domains).map(|d| (g.param(st, ids[2 * d]).unwrap(), g.param(st, ids[2 * d + 1]).unwrap())).collect();
            orthogonality_loss(g, &pairs).unwrap()
        };
        worst = worst.max(check(&mut store, &ids, 1.0, &f));
    }
    worst
}

/// Gradients through the fused representation, coefficients included.
pub fn fusion(instances: usize) -> f64 {
    let mut worst = 0.0f64;
    for s in 0..instances as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + s);
        let mut store = ParamStore::new();
        let domains = rng.gen_range(1..4);
        let sizes: Vec<usize> = (0..domains).map(|_| rng.gen_range(1..500)).collect();
        let fusion = FusionCoefficients::new(&mut store, "fuse", &sizes).unwrap();
        let logits = fusion.param_ids()[0];
        let perturbed = random(&mut rng, domains, domains + 1);
        for (v, p) in store.get_mut(logits).value.data_mut().iter_mut().zip(perturbed.data()) {
            *v += p;
        }
        let hc = store.add("hc", random(&mut rng, 3, 4)).unwrap();
        let hp: Vec<ParamId> = (0..domains).map(|d| store.add(format!("hp{d}"), random(&mut rng, 3, 4)).unwrap()).collect();
        let weights = random(&mut rng, 3, 4);
        let dest = rng.gen_range(0..domains);
        let f = |g: &mut Graph, st: &ParamStore| {
            let c = g.param(st, hc).unwrap();
            let p: Vec<Var> = hp.iter().map(|&id| g.param(st, id).unwrap()).collect();
            let fused = fusion.fuse(g, st, c, &p, dest).unwrap();
            let w = g.leaf(weights.clone()).unwrap();
            let sq = g.square(fused).unwrap();
            let m = g.mul(sq, w).unwrap();
            g.sum(m).unwrap()
        };
        let mut ids = vec![logits, hc];
        ids.extend(&hp);
        worst = worst.max(check(&mut store, &ids, 1.0, &f));
    }
    worst
}

/// Also asserts that the detached teacher receives no gradient.
pub fn matching(instances: usize) -> f64 {
    let mut worst = 0.0f64;
    for s in 0..instances as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + s);
        let mut store = ParamStore::new();
        let (ls, lt, dim, rows) = (rng.gen_range(1..3), rng.gen_range(1..3), 3, rng.gen_range(1..4));
        let net = MatchingNetwork::new(&mut store, "mat", 2, 1, ls, lt, dim).unwrap();
        let net_ids = net.param_ids();
        for &id in &net_ids {
            let shape = store.value(id).shape();
            let noise = random(&mut rng, shape[0], shape[1]);
            for (v, p) in store.get_mut(id).value.data_mut().iter_mut().zip(noise.data()) {
                *v += 0.5 * p;
            }
        }
        let student: Vec<ParamId> = (0..ls).map(|k| store.add(format!("s{k}"), random(&mut rng, rows, dim)).unwrap()).collect();
        let teacher: Vec<ParamId> = (0..lt).map(|k| store.add(format!("t{k}"), random(&mut rng, rows, dim)).unwrap()).collect();
        let which = rng.gen_range(0..2);
        let f = |g: &mut Graph, st: &ParamStore| {
            let sv: Vec<Var> = student.iter().map(|&id| g.param(st, id).unwrap()).collect();
            let tv: Vec<Var> = teacher.iter().map(|&id| g.param(st, id).unwrap()).collect();
            net.loss(g, st, &[(which, sv)], &[tv]).unwrap()
        };
        let mut ids = student.clone();
        ids.extend(&net_ids);
        worst = worst.max(check(&mut store, &ids, 1.0, &f));
        assert!(teacher.iter().all(|&id| store.grad(id).iter().all(|&v| v == 0.0)));
    }
    worst
}

/// The reversed gradient must equal minus lambda times the numeric one,
/// alone and in front of the domain classifier.
pub fn reversal(instances: usize) -> f64 {
    let mut worst = 0.0f64;
    for s in 0..instances as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + s);
        let mut store = ParamStore::new();
        let lambda = rng.gen_range(0.1..2.0);
        let x = store.add("x", random(&mut rng, 3, 4)).unwrap();
        let w = random(&mut rng, 3, 4);
        let f = |g: &mut Graph, st: &ParamStore| {
            let xv = g.param(st, x).unwrap();
            let r = g.grl(xv, lambda).unwrap();
            let wv = g.leaf(w.clone()).unwrap();
            let sq = g.square(r).unwrap();
            let m = g.mul(sq, wv).unwrap();
            g.sum(m).unwrap()
        };
        worst = worst.max(check(&mut store, &[x], -lambda, &f));

        let domains = rng.gen_range(2..4);
        let classifier = DomainClassifier::new(&mut store, "dom", 4, domains, &mut rng).unwrap();
        let labels: Vec<usize> = (0..3).map(|_| rng.gen_range(0..domains)).collect();
        let f = |g: &mut Graph, st: &ParamStore| {
            let xv = g.param(st, x).unwrap();
            let r = g.grl(xv, 1.0).unwrap();
            domain_classifier_loss(g, st, &classifier, r, &labels).unwrap().0
        };
        worst = worst.max(check(&mut store, &[x], -1.0, &f));
        worst = worst.max(check(&mut store, &classifier.param_ids(), 1.0, &f));
    }
    worst
}
