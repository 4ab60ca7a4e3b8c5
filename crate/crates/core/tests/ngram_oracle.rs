mod common;

use common::{train, CountingOracle, CORPORA};

fn contexts(ids: &[Vec<u32>], vocab: usize) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for s in ids {
        for i in 1..=s.len() {
            out.push(s[..i].to_vec());
        }
    }
    // Unseen histories exercise the fallback path.
    out.push(vec![(vocab - 1) as u32; 4]);
    out.push(vec![0, 0, 0]);
    out
}

#[test]
fn model_matches_counting_oracle() {
    for corpus in CORPORA {
        for order in 1..=3 {
            let (model, ids) = train(corpus, order);
            let v = model.vocab().len();
            let cfg = model.config();
            let oracle = CountingOracle::new(&ids, order, cfg.lambda, cfg.alpha, v);
            for ctx in contexts(&ids, v) {
                let dist = model.next_distribution(&ctx);
                let h = oracle.history(&ctx);
                for w in 0..v as u32 {
                    let expected = oracle.prob(w, &h);
                    assert!(
                        (dist[w as usize] - expected).abs() <= 1e-12,
                        "order {order} ctx {ctx:?} w {w}: {} vs {expected}",
                        dist[w as usize]
                    );
                }
                assert!((dist.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn reloaded_model_keeps_distributions() {
    let dir = tempfile::tempdir().unwrap();
    let (model, ids) = train(CORPORA[1], 3);
    let path = dir.path().join("m.fplm");
    model.save(&path).unwrap();
    let back = fpscore::ngram::NgramModel::load(&path).unwrap();
    assert_eq!(back.fingerprint(), model.fingerprint());
    for ctx in contexts(&ids, model.vocab().len()) {
        assert_eq!(back.next_distribution(&ctx), model.next_distribution(&ctx));
    }
}
