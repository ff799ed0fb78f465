mod common;

use common::fixtures::forward_mismatch;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn all_models_match_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for g_seed in 0..20 {
        let (edges, err) = forward_mismatch(g_seed, &mut rng);
        assert!(edges <= 1000, "graph {g_seed} has {edges} edges");
        assert!(err <= 1e-12, "graph {g_seed}: {err:e}");
    }
}
